#include "lca/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lca/analysis.hpp"
#include "lca/checkpoint.hpp"
#include "lca/config.hpp"
#include "lca/constructions.hpp"
#include "lca/csv.hpp"
#include "lca/errors.hpp"
#include "lca/hash.hpp"

namespace lca {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::string fmt(double x) { return format_double(x); }

/// Collects artifacts written during one invocation and emits the manifest.
class RunDirectory {
public:
    RunDirectory(const ExperimentConfig& cfg, std::string command)
        : cfg_(cfg), hash_(config_hash(cfg)), root_(cfg.out_dir), command_(std::move(command)) {
        fs::create_directories(root_);
        write("config.ini", "# config_hash=" + hash_ + "\n" + serialize(cfg_));
    }

    const std::string& hash() const { return hash_; }
    const fs::path& root() const { return root_; }

    void write(const std::string& name, const std::string& bytes) {
        write_file(root_ / name, bytes);
        artifacts_[name] = git_blob_hash(bytes);
    }

    void csv(const std::string& name, const CsvTable& table) { write(name, table.render(hash_)); }

    void checkpoint(const std::string& name, const Checkpoint& ckpt) { write(name, encode_checkpoint(ckpt)); }

    void input(const fs::path& path) { inputs_[path.string()] = git_blob_hash(read_file(path)); }

    Json& summary() { return summary_; }

    void finish() {
        Json j;
        j["config_hash"] = hash_;
        j["command"] = command_;
        j["seed"] = cfg_.seed();
        j["config"] = serialize(cfg_);
        j["inputs"] = inputs_;
        j["artifacts"] = artifacts_;
        j["summary"] = summary_.is_null() ? Json::object() : summary_;
        const std::string text = j.dump() + "\n";
        write_file(root_ / "manifest.json", text);
    }

private:
    const ExperimentConfig& cfg_;
    std::string hash_;
    fs::path root_;
    std::string command_;
    std::map<std::string, std::string> artifacts_;
    std::map<std::string, std::string> inputs_;
    Json summary_;
};

ModelParams load_model_for(const ExperimentConfig& cfg, RunDirectory& run) {
    if (cfg.analysis.checkpoint.empty()) throw ConfigError("analysis.checkpoint must name a model checkpoint");
    const fs::path path = cfg.analysis.checkpoint;
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.params.m != cfg.task.m) {
        throw ConfigError("checkpoint has m=" + std::to_string(ckpt.params.m) + " but task.m=" + std::to_string(cfg.task.m));
    }
    run.input(path);
    return std::move(ckpt.params);
}

void cmd_sample(const ExperimentConfig& cfg, RunDirectory& run, std::ostream& out) {
    const TaskSampler sampler(cfg.task);
    Pcg32 rng = stream_rng(cfg.seed(), Stream::TrainData);
    CsvTable table({"index", "target", "context"});
    for (int i = 0; i < cfg.analysis.sample_count; ++i) {
        const Sample s = sampler.sample(rng);
        std::string ctx;
        for (std::size_t l = 0; l < s.context.size(); ++l) {
            if (l) ctx.push_back(' ');
            ctx += std::to_string(s.context[l].id);
        }
        table.add_row({std::to_string(i), std::to_string(s.target.id), ctx});
    }
    run.csv("samples.csv", table);
    out << "wrote " << table.size() << " samples to " << (run.root() / "samples.csv").string() << "\n";
}

void cmd_train(const ExperimentConfig& cfg, RunDirectory& run, std::ostream& out) {
    std::vector<double> grid = cfg.train.select_lr ? cfg.train.lr_grid : std::vector<double>{cfg.train.lr};
    std::optional<TrainReport> best;
    for (double lr : grid) {
        TrainConfig tc = cfg.train;
        tc.lr = lr;
        const std::string prefix = cfg.train.select_lr ? "checkpoints/lr_" + fmt(lr) + "/" : "checkpoints/";
        CheckpointHook hook = [&](int step, const ModelParams& p, const AdamState& a, const Pcg32& rng) {
            run.checkpoint(prefix + "step_" + std::to_string(step) + ".ckpt", Checkpoint{p, true, a, rng.state(), run.hash()});
        };
        TrainReport r = train(cfg.task, cfg.model, tc, cfg.seed(), hook);
        out << "lr " << fmt(lr) << ": final eval accuracy " << std::fixed << std::setprecision(6) << r.final_accuracy
            << std::defaultfloat << " (" << std::setprecision(3) << r.wall_seconds << " s)\n";
        if (!best || r.final_accuracy > best->final_accuracy) best = std::move(r);
    }

    CsvTable table({"step", "train_loss", "eval_accuracy"});
    for (const auto& rec : best->records) {
        table.add_row({std::to_string(rec.step), fmt(rec.train_loss), fmt(rec.eval_accuracy)});
    }
    run.csv("train.csv", table);
    run.checkpoint("model.ckpt", Checkpoint{best->params, true, best->optimizer, best->sample_rng.state(), run.hash()});
    run.summary()["lr"] = best->lr;
    run.summary()["final_accuracy"] = best->final_accuracy;
    out << "selected lr " << fmt(best->lr) << ", accuracy " << std::fixed << std::setprecision(6) << best->final_accuracy
        << std::defaultfloat << "\n";
}

void cmd_eval(const ExperimentConfig& cfg, RunDirectory& run, std::ostream& out) {
    const ModelParams params = load_model_for(cfg, run);
    Pcg32 rng = stream_rng(cfg.seed(), Stream::Analysis);
    const double acc = evaluate(params, cfg.task, cfg.analysis.n_samples, rng);
    CsvTable table({"n", "accuracy"});
    table.add_row({std::to_string(cfg.analysis.n_samples), fmt(acc)});
    run.csv("eval.csv", table);
    run.summary()["accuracy"] = acc;
    out << "accuracy " << std::fixed << std::setprecision(6) << acc << std::defaultfloat << "\n";
}

void cmd_construct(const ExperimentConfig& cfg, RunDirectory& run, std::ostream& out) {
    Pcg32 rng = stream_rng(cfg.seed(), Stream::Init);
    const ModelParams params = build_hypothetical_model(cfg.task.m, cfg.model.d, rng, cfg.task.neighborhood);
    run.checkpoint("model.ckpt", Checkpoint{params, false, AdamState::zeros_like(params), rng.state(), run.hash()});
    out << "wrote hypothetical model (m=" << cfg.task.m << ", d=" << cfg.model.d << ") to "
        << (run.root() / "model.ckpt").string() << "\n";
}

void cmd_bound(const ExperimentConfig& cfg, RunDirectory& run, std::ostream& out) {
    const std::size_t n = neighborhood_size(cfg.task.neighborhood, cfg.task.m);
    const std::uint64_t bound = theorem_bound_L(cfg.task.m, cfg.task.beta, cfg.analysis.epsilon, n);
    CsvTable table({"m", "beta", "epsilon", "neighborhood_size", "bound"});
    table.add_row({std::to_string(cfg.task.m), fmt(cfg.task.beta), fmt(cfg.analysis.epsilon), std::to_string(n), std::to_string(bound)});
    run.csv("bound.csv", table);
    run.summary()["bound"] = bound;
    out << bound << "\n";
}

void cmd_analyze(const std::string& which, const ExperimentConfig& cfg, RunDirectory& run, std::ostream& out) {
    const std::uint64_t seed = cfg.seed();
    if (which == "replace") {
        const ModelParams params = load_model_for(cfg, run);
        CsvTable table({"candidate", "accuracy"});
        for (const auto& c : replacement_study(params, cfg.task, cfg.analysis.n_samples, seed)) {
            table.add_row({c.candidate, fmt(c.accuracy)});
            out << c.candidate << " " << fmt(c.accuracy) << "\n";
        }
        run.csv("replace.csv", table);
    } else if (which == "angles") {
        const ModelParams params = load_model_for(cfg, run);
        const int r = cfg.analysis.rank > 0 ? cfg.analysis.rank : cfg.task.m;
        CsvTable table({"candidate", "angle_index", "angle_radians"});
        for (const auto& c : angle_study(params, cfg.task.neighborhood, r, cfg.train.init_scale, seed)) {
            for (std::size_t i = 0; i < c.report.angles.size(); ++i) {
                table.add_row({c.candidate, std::to_string(i), fmt(c.report.angles[i])});
            }
            run.summary()["mean_angle"][c.candidate] = c.mean_angle;
            if (c.report.reduced) run.summary()["rank_reduced"][c.candidate] = c.report.rank;
            out << c.candidate << " mean angle " << fmt(c.mean_angle) << "\n";
        }
        run.csv("angles.csv", table);
    } else if (which == "hamming") {
        const ModelParams params = load_model_for(cfg, run);
        const HammingFit fit = hamming_fit(params.W_E);
        CsvTable table({"distance", "mean_inner", "std_inner", "count"});
        for (const auto& r : fit.rows) {
            table.add_row({std::to_string(r.distance), fmt(r.mean_inner), fmt(r.std_inner), std::to_string(r.count)});
        }
        run.csv("hamming.csv", table);
        run.summary()["slope"] = fit.slope;
        run.summary()["b"] = fit.b;
        run.summary()["b0"] = fit.b0;
        run.summary()["correlation"] = fit.correlation;
        out << "slope " << fmt(fit.slope) << " b " << fmt(fit.b) << " b0 " << fmt(fit.b0) << " r " << fmt(fit.correlation) << "\n";
    } else if (which == "spectrum") {
        const ModelParams params = load_model_for(cfg, run);
        const Vector s = spectrum(params.W_E);
        CsvTable table({"index", "singular_value"});
        for (Eigen::Index i = 0; i < s.size(); ++i) table.add_row({std::to_string(i), fmt(s(i))});
        run.csv("spectrum.csv", table);
        out << "wrote " << s.size() << " singular values\n";
    } else if (which == "attention") {
        const ModelParams params = load_model_for(cfg, run);
        Pcg32 rng = stream_rng(seed, Stream::Analysis);
        const ClusterAttention stats = attention_cluster_stats(params, cfg.task, cfg.analysis.n_samples, rng);
        CsvTable table({"query_cluster", "key_cluster", "mean_attention"});
        for (int i = 0; i < stats.clusters; ++i) {
            for (int j = 0; j < stats.clusters; ++j) {
                table.add_row({std::to_string(i), std::to_string(j), fmt(stats.mean_attention(i, j))});
            }
        }
        run.csv("attention.csv", table);
        CsvTable heat({"query_token", "key_token", "mean_attention"});
        for (Eigen::Index i = 0; i < stats.heat.rows(); ++i) {
            for (Eigen::Index j = 0; j < stats.heat.cols(); ++j) {
                heat.add_row({std::to_string(i), std::to_string(j), fmt(stats.heat(i, j))});
            }
        }
        run.csv("attention_heatmap.csv", heat);
        run.summary()["same_cluster_mean"] = stats.same_cluster_mean;
        run.summary()["cross_cluster_mean"] = stats.cross_cluster_mean;
        out << "same-cluster " << fmt(stats.same_cluster_mean) << " cross-cluster " << fmt(stats.cross_cluster_mean) << "\n";
    } else if (which == "hijack") {
        const ModelParams params = load_model_for(cfg, run);
        const Pcg32 rng = stream_rng(seed, Stream::Analysis);
        CsvTable table({"p_m", "acc_true", "acc_false"});
        for (const auto& p : hijack_curve(params, cfg.task, cfg.analysis.p_m_grid, cfg.analysis.n_samples, rng)) {
            table.add_row({fmt(p.p_m), fmt(p.acc_true), fmt(p.acc_false)});
            out << "p_m " << fmt(p.p_m) << " true " << fmt(p.acc_true) << " false " << fmt(p.acc_false) << "\n";
        }
        run.csv("hijack.csv", table);
    } else if (which == "length") {
        CsvTable table({"L", "d", "accuracy"});
        for (const auto& p : length_sweep(cfg.task, cfg.analysis.l_grid, cfg.analysis.d_grid, cfg.model, cfg.train, seed)) {
            table.add_row({std::to_string(p.context_len), std::to_string(p.d), fmt(p.accuracy)});
            out << "L " << p.context_len << " d " << p.d << " accuracy " << fmt(p.accuracy) << "\n";
        }
        run.csv("length.csv", table);
    } else {
        throw ConfigError("unknown analysis '" + which + "'");
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Latent concept association experiments"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::vector<std::string> sets;
    app.add_option("--config", config_path, "experiment config file");
    app.add_option("--seed", seed, "RNG seed (overrides task.seed)");
    app.add_option("--out", out_dir, "output directory (overrides run.out)");
    app.add_option("--set", sets, "override section.key=value (repeatable)")->take_all();

    std::string which;
    for (const char* name : {"sample", "train", "eval", "construct", "bound"}) app.add_subcommand(name);
    auto* analyze = app.add_subcommand("analyze", "run one analysis");
    analyze->add_option("which", which, "replace|angles|hamming|spectrum|attention|hijack|length")
        ->required()
        ->check(CLI::IsMember({"replace", "angles", "hamming", "spectrum", "attention", "hijack", "length"}));

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, er;
        const int code = app.exit(e, o, er);
        out << o.str();
        err << er.str();
        return code == 0 ? 0 : 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
        for (const auto& s : sets) apply_override(cfg, s);
        if (seed) cfg.task.seed = *seed;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        cfg.validate();

        RunDirectory run(cfg, command == "analyze" ? "analyze " + which : command);
        if (!config_path.empty()) run.input(config_path);
        if (command == "sample") cmd_sample(cfg, run, out);
        else if (command == "train") cmd_train(cfg, run, out);
        else if (command == "eval") cmd_eval(cfg, run, out);
        else if (command == "construct") cmd_construct(cfg, run, out);
        else if (command == "bound") cmd_bound(cfg, run, out);
        else cmd_analyze(which, cfg, run, out);
        run.finish();
        return 0;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const InvalidInput& e) {
        err << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const FileError& e) {
        err << "file error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace lca
