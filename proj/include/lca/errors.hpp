#pragma once

#include <stdexcept>
#include <string>

namespace lca {

/// Argument outside an operation's domain (bad token, wrong length, ...).
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Configuration that cannot describe a valid experiment.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A requested construction has no solution (d < V, non-PSD Gram, ...).
class Infeasible : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values met during optimization.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Missing, truncated or corrupt files.
class FileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace lca
