#include "lca/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>

#include "lca/csv.hpp"
#include "lca/errors.hpp"
#include "lca/hash.hpp"

namespace lca {

namespace {

constexpr std::string_view kMagic = "lca-checkpoint";
constexpr std::size_t kMaxHeaderBytes = 4096;

void put_matrix(std::string& out, const Matrix& mat) {
    for (Eigen::Index i = 0; i < mat.rows(); ++i) {
        for (Eigen::Index j = 0; j < mat.cols(); ++j) {
            const auto bits = std::bit_cast<std::uint64_t>(mat(i, j));
            for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
        }
    }
}

Matrix take_matrix(std::string_view& in, Eigen::Index rows, Eigen::Index cols) {
    const auto need = static_cast<std::size_t>(rows * cols) * 8;
    if (in.size() < need) throw FileError("checkpoint payload truncated");
    Matrix mat(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b) bits |= std::uint64_t{static_cast<unsigned char>(in[k++])} << (8 * b);
            mat(i, j) = std::bit_cast<double>(bits);
        }
    }
    in.remove_prefix(need);
    return mat;
}

template <class T>
T header_number(const std::string& key, const std::string& v) {
    T out{};
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw FileError("corrupt checkpoint header field " + key);
    return out;
}

std::uint64_t expected_payload(const CheckpointHeader& h) {
    const std::uint64_t d = static_cast<std::uint64_t>(h.d), da = static_cast<std::uint64_t>(h.d_a);
    const std::uint64_t params = d * h.vocab + 2 * da * d + d * d;
    return 8 * params * (h.has_optimizer ? 3 : 1);
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    ckpt.params.validate();
    std::string payload;
    for (auto id : kAllMatrices) put_matrix(payload, ckpt.params.get(id));
    if (ckpt.has_optimizer) {
        for (auto id : kAllMatrices) put_matrix(payload, ckpt.optimizer.first[static_cast<std::size_t>(id)]);
        for (auto id : kAllMatrices) put_matrix(payload, ckpt.optimizer.second[static_cast<std::size_t>(id)]);
    }

    std::ostringstream h;
    h << kMagic << " version=" << kCheckpointVersion << " config_hash=" << ckpt.config_hash << "\n";
    h << "m " << ckpt.params.m << "\n";
    h << "d " << ckpt.params.d() << "\n";
    h << "d_a " << ckpt.params.d_a() << "\n";
    h << "vocab " << ckpt.params.vocab() << "\n";
    h << "optimizer " << (ckpt.has_optimizer ? 1 : 0) << "\n";
    h << "adam_step " << (ckpt.has_optimizer ? ckpt.optimizer.step : 0) << "\n";
    h << "rng_state " << ckpt.rng.state << " " << ckpt.rng.inc << "\n";
    h << "payload_bytes " << payload.size() << "\n";
    h << "payload_sha256 " << sha256_hex(payload) << "\n";
    h << "end\n";
    return h.str() + payload;
}

CheckpointHeader decode_checkpoint_header(std::string_view bytes) {
    CheckpointHeader h;
    const auto end_marker = bytes.substr(0, kMaxHeaderBytes).find("\nend\n");
    if (end_marker == std::string_view::npos) throw FileError("checkpoint header is missing its end marker");
    h.header_bytes = end_marker + 5;
    std::istringstream in{std::string(bytes.substr(0, end_marker))};

    std::string line;
    std::getline(in, line);
    {
        std::istringstream first(line);
        std::string magic, version, hash;
        first >> magic >> version >> hash;
        if (magic != kMagic || version.rfind("version=", 0) != 0 || hash.rfind("config_hash=", 0) != 0) {
            throw FileError("not an lca checkpoint");
        }
        h.version = header_number<int>("version", version.substr(8));
        h.config_hash = hash.substr(12);
    }
    if (h.version != kCheckpointVersion) {
        throw FileError("unsupported checkpoint version " + std::to_string(h.version));
    }

    bool seen_m = false, seen_d = false, seen_da = false, seen_v = false, seen_payload = false, seen_sha = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key, a, b;
        ls >> key >> a;
        if (key == "m") { h.m = header_number<int>(key, a); seen_m = true; }
        else if (key == "d") { h.d = header_number<int>(key, a); seen_d = true; }
        else if (key == "d_a") { h.d_a = header_number<int>(key, a); seen_da = true; }
        else if (key == "vocab") { h.vocab = header_number<std::uint32_t>(key, a); seen_v = true; }
        else if (key == "optimizer") { h.has_optimizer = header_number<int>(key, a) != 0; }
        else if (key == "adam_step") { h.adam_step = header_number<std::int64_t>(key, a); }
        else if (key == "rng_state") {
            ls >> b;
            h.rng.state = header_number<std::uint64_t>(key, a);
            h.rng.inc = header_number<std::uint64_t>(key, b);
        }
        else if (key == "payload_bytes") { h.payload_bytes = header_number<std::uint64_t>(key, a); seen_payload = true; }
        else if (key == "payload_sha256") { h.payload_sha256 = a; seen_sha = true; }
        else throw FileError("unknown checkpoint header field '" + key + "'");
    }
    if (!(seen_m && seen_d && seen_da && seen_v && seen_payload && seen_sha)) throw FileError("checkpoint header is incomplete");
    if (h.m < 1 || h.m > kMaxLatentBits || h.d < 1 || h.d_a < 1) throw FileError("checkpoint dims out of range");
    if (h.vocab != (1u << h.m)) throw FileError("checkpoint vocab does not equal 2^m");
    if (h.payload_bytes != expected_payload(h)) throw FileError("checkpoint payload size does not match its dims");
    return h;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    const CheckpointHeader h = decode_checkpoint_header(bytes);
    std::string_view payload = bytes.substr(h.header_bytes);
    if (payload.size() < h.payload_bytes) throw FileError("checkpoint payload truncated");
    if (payload.size() > h.payload_bytes) throw FileError("checkpoint has trailing bytes");
    if (sha256_hex(payload) != h.payload_sha256) throw FileError("checkpoint payload hash mismatch");

    Checkpoint c;
    c.config_hash = h.config_hash;
    c.rng = h.rng;
    c.has_optimizer = h.has_optimizer;
    c.params.m = h.m;
    c.params.W_E = take_matrix(payload, h.d, h.vocab);
    c.params.W_K = take_matrix(payload, h.d_a, h.d);
    c.params.W_Q = take_matrix(payload, h.d_a, h.d);
    c.params.W_V = take_matrix(payload, h.d, h.d);
    if (h.has_optimizer) {
        c.optimizer.step = h.adam_step;
        for (int pass = 0; pass < 2; ++pass) {
            auto& moments = pass == 0 ? c.optimizer.first : c.optimizer.second;
            for (auto id : kAllMatrices) {
                const auto& shape = c.params.get(id);
                moments[static_cast<std::size_t>(id)] = take_matrix(payload, shape.rows(), shape.cols());
            }
        }
    } else {
        c.optimizer = AdamState::zeros_like(c.params);
    }
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) { write_file(path, encode_checkpoint(ckpt)); }

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw FileError("checkpoint not found: " + path.string());
    return decode_checkpoint(read_file(path));
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("checkpoint not found: " + path.string());
    std::string head(kMaxHeaderBytes, '\0');
    in.read(head.data(), static_cast<std::streamsize>(head.size()));
    head.resize(static_cast<std::size_t>(in.gcount()));
    return decode_checkpoint_header(head);
}

}  // namespace lca
