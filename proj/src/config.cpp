#include "lca/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "lca/csv.hpp"
#include "lca/errors.hpp"
#include "lca/hash.hpp"

namespace lca {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
    std::vector<std::string_view> out;
    s = trim(s);
    if (s.empty()) return out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(',', start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
    T out{};
    const auto* end = v.data() + v.size();
    const auto res = std::from_chars(v.data(), end, out);
    if (res.ec != std::errc() || res.ptr != end) {
        throw ConfigError("invalid value '" + std::string(v) + "' for " + std::string(key));
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("invalid boolean '" + std::string(v) + "' for " + std::string(key));
}

template <class T>
std::string join(const std::vector<T>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ",";
        if constexpr (std::is_same_v<T, double>) {
            out += format_double(xs[i]);
        } else {
            out += std::to_string(xs[i]);
        }
    }
    return out;
}

struct Field {
    std::string section;
    std::string key;
    std::function<void(std::string_view)> set;
    std::function<std::string()> get;

    std::string name() const { return section + "." + key; }
};

std::vector<Field> fields(ExperimentConfig& c) {
    std::vector<Field> f;
    auto num = [&f](std::string sec, std::string key, auto& ref) {
        using T = std::remove_reference_t<decltype(ref)>;
        const std::string full = sec + "." + key;
        f.push_back({sec, key, [&ref, full](std::string_view v) { ref = parse_number<T>(full, v); },
                     [&ref] {
                         if constexpr (std::is_same_v<T, double>) {
                             return format_double(ref);
                         } else {
                             return std::to_string(ref);
                         }
                     }});
    };
    auto flag = [&f](std::string sec, std::string key, bool& ref) {
        const std::string full = sec + "." + key;
        f.push_back({sec, key, [&ref, full](std::string_view v) { ref = parse_bool(full, v); },
                     [&ref] { return std::string(ref ? "true" : "false"); }});
    };
    auto text = [&f](std::string sec, std::string key, std::string& ref) {
        f.push_back({sec, key, [&ref](std::string_view v) { ref = std::string(v); }, [&ref] { return ref; }});
    };
    auto list = [&f](std::string sec, std::string key, auto& ref) {
        using T = typename std::remove_reference_t<decltype(ref)>::value_type;
        const std::string full = sec + "." + key;
        f.push_back({sec, key,
                     [&ref, full](std::string_view v) {
                         ref.clear();
                         for (auto item : split_list(v)) ref.push_back(parse_number<T>(full, item));
                     },
                     [&ref] { return join(ref); }});
    };

    num("task", "m", c.task.m);
    num("task", "omega", c.task.omega);
    num("task", "beta", c.task.beta);
    num("task", "context_len", c.task.context_len);
    f.push_back({"task", "neighborhood", [&c](std::string_view v) { c.task.neighborhood = parse_neighborhood(v); },
                 [&c] { return std::string(to_string(c.task.neighborhood)); }});
    num("task", "seed", c.task.seed);

    num("model", "d", c.model.d);
    num("model", "d_a", c.model.d_a);

    num("train", "lr", c.train.lr);
    num("train", "weight_decay", c.train.weight_decay);
    num("train", "beta1", c.train.beta1);
    num("train", "beta2", c.train.beta2);
    num("train", "eps_adam", c.train.eps_adam);
    num("train", "steps", c.train.steps);
    num("train", "batch_size", c.train.batch_size);
    f.push_back({"train", "freeze",
                 [&c](std::string_view v) {
                     c.train.freeze = {};
                     for (auto item : split_list(v)) c.train.freeze[static_cast<std::size_t>(parse_matrix_id(item))] = true;
                 },
                 [&c] {
                     std::string out;
                     for (auto id : kAllMatrices) {
                         if (!c.train.freeze[static_cast<std::size_t>(id)]) continue;
                         if (!out.empty()) out += ",";
                         out += to_string(id);
                     }
                     return out;
                 }});
    num("train", "init_scale", c.train.init_scale);
    f.push_back({"train", "value_matrix_mode", [&c](std::string_view v) { c.train.value_matrix_mode = parse_value_matrix_mode(v); },
                 [&c] { return std::string(to_string(c.train.value_matrix_mode)); }});
    f.push_back({"train", "embedding_mode", [&c](std::string_view v) { c.train.embedding_mode = parse_embedding_mode(v); },
                 [&c] { return std::string(to_string(c.train.embedding_mode)); }});
    num("train", "eval_size", c.train.eval_size);
    num("train", "eval_every", c.train.eval_every);
    list("train", "lr_grid", c.train.lr_grid);
    flag("train", "select_lr", c.train.select_lr);
    num("train", "checkpoint_every", c.train.checkpoint_every);

    text("analysis", "checkpoint", c.analysis.checkpoint);
    num("analysis", "epsilon", c.analysis.epsilon);
    list("analysis", "p_m_grid", c.analysis.p_m_grid);
    list("analysis", "l_grid", c.analysis.l_grid);
    list("analysis", "d_grid", c.analysis.d_grid);
    num("analysis", "n_samples", c.analysis.n_samples);
    num("analysis", "rank", c.analysis.rank);
    num("analysis", "sample_count", c.analysis.sample_count);

    text("run", "out", c.out_dir);
    return f;
}

Field& find_field(std::vector<Field>& fs, std::string_view section, std::string_view key) {
    for (auto& f : fs) {
        if (f.section == section && f.key == key) return f;
    }
    throw ConfigError("unknown config key '" + std::string(section) + "." + std::string(key) + "'");
}

std::string render(ExperimentConfig cfg, bool include_run) {
    std::string out;
    std::string current;
    for (const auto& f : fields(cfg)) {
        if (!include_run && f.section == "run") continue;
        if (f.section != current) {
            if (!current.empty()) out += "\n";
            out += "[" + f.section + "]\n";
            current = f.section;
        }
        out += f.key + " = " + f.get() + "\n";
    }
    return out;
}

}  // namespace

void ExperimentConfig::validate() const {
    task.validate();
    model.validate();
    train.validate();
    if (!(analysis.epsilon > 0.0 && analysis.epsilon < 1.0)) throw ConfigError("analysis.epsilon must lie in (0, 1)");
    if (analysis.n_samples < 1) throw ConfigError("analysis.n_samples must be >= 1");
    if (analysis.rank < 0) throw ConfigError("analysis.rank must be >= 0");
    if (analysis.sample_count < 1) throw ConfigError("analysis.sample_count must be >= 1");
    for (double p : analysis.p_m_grid) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("analysis.p_m_grid entries must lie in [0, 1]");
    }
    for (int l : analysis.l_grid) {
        if (l < 1) throw ConfigError("analysis.l_grid entries must be >= 1");
    }
    for (int d : analysis.d_grid) {
        if (d < 1) throw ConfigError("analysis.d_grid entries must be >= 1");
    }
}

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig cfg;
    auto fs = fields(cfg);
    std::string section;
    std::vector<std::string> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        if (const auto hash = line.find_first_of("#;"); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + "malformed section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
        if (section.empty()) throw ConfigError(where + "key outside of a section");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        const std::string full = section + "." + std::string(key);
        for (const auto& s : seen) {
            if (s == full) throw ConfigError(where + "duplicate key '" + full + "'");
        }
        seen.push_back(full);
        try {
            find_field(fs, section, key).set(value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError("override must look like section.key=value");
    const auto name = trim(assignment.substr(0, eq));
    const auto dot = name.find('.');
    if (dot == std::string_view::npos) throw ConfigError("override key must be section.key, got '" + std::string(name) + "'");
    auto fs = fields(cfg);
    find_field(fs, name.substr(0, dot), name.substr(dot + 1)).set(trim(assignment.substr(eq + 1)));
}

std::string serialize(const ExperimentConfig& cfg) { return render(cfg, true); }

std::string config_hash(const ExperimentConfig& cfg) { return sha256_hex(render(cfg, false)).substr(0, 16); }

}  // namespace lca
