#pragma once

#include <string>
#include <string_view>

namespace lca {

std::string sha256_hex(std::string_view bytes);
/// SHA-1 over "blob <size>\0<content>", the object id git assigns to a file.
std::string git_blob_hash(std::string_view content);

}  // namespace lca
