#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lca {

/// Entry point of the `lca` tool. args excludes the program name.
///
///   lca <sample|train|eval|construct|bound> [--config f] [--seed n] [--out dir] [--set k=v]...
///   lca analyze <replace|angles|hamming|spectrum|attention|hijack|length> [same flags]
///
/// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error, 3 file error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lca
