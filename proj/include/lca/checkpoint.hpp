#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "lca/training.hpp"

namespace lca {

inline constexpr int kCheckpointVersion = 1;

/// On disk: a text header terminated by a line "end", then the payload of
/// row-major little-endian IEEE-754 doubles (W_E, W_K, W_Q, W_V, then the
/// AdamW first and second moments in the same order when present).
struct Checkpoint {
    ModelParams params;
    bool has_optimizer = false;
    AdamState optimizer;
    Pcg32::State rng{};
    std::string config_hash;
};

struct CheckpointHeader {
    int version = 0;
    std::string config_hash;
    int m = 0;
    int d = 0;
    int d_a = 0;
    std::uint32_t vocab = 0;
    bool has_optimizer = false;
    std::int64_t adam_step = 0;
    Pcg32::State rng{};
    std::uint64_t payload_bytes = 0;
    std::string payload_sha256;
    std::size_t header_bytes = 0;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
/// Parses and validates the header only.
CheckpointHeader decode_checkpoint_header(std::string_view bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Reads the header lines without touching the matrix payload.
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

}  // namespace lca
