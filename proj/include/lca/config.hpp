#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lca/training.hpp"

namespace lca {

struct AnalysisConfig {
    std::string checkpoint;  // model checkpoint consumed by eval / analyze
    double epsilon = 0.05;
    std::vector<double> p_m_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<int> l_grid{32, 64, 128, 256};
    std::vector<int> d_grid{32, 256};
    int n_samples = 1024;
    int rank = 0;  // 0 means rank m
    int sample_count = 16;
};

/// Everything one CLI invocation needs. Sections in the text form:
///   [task] [model] [train] [analysis] [run]
/// Keys mirror the field names; unknown keys are rejected.
struct ExperimentConfig {
    TaskConfig task;
    ModelConfig model;
    TrainConfig train;
    AnalysisConfig analysis;
    std::string out_dir = "out";

    std::uint64_t seed() const { return task.seed; }
    void validate() const;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies "section.key=value"; throws ConfigError for unknown keys or bad values.
void apply_override(ExperimentConfig& cfg, std::string_view assignment);

/// Canonical text form with every key, defaults included.
std::string serialize(const ExperimentConfig& cfg);

/// SHA-256 prefix over the canonical form; the [run] section is excluded so
/// the same experiment hashes identically in any output directory.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace lca
