#include "lca/analysis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>

#include "lca/constructions.hpp"
#include "lca/errors.hpp"

namespace lca {

namespace {

constexpr double kRankTolerance = 1e-8;

struct Basis {
    Matrix q;
    bool reduced = false;
};

Basis column_basis(const Matrix& mat, int r) {
    Eigen::BDCSVD<Matrix> svd(mat, Eigen::ComputeThinU);
    const Vector& s = svd.singularValues();
    int k = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(0) > 0.0 && s(i) > kRankTolerance * s(0)) ++k;
    }
    Basis out;
    int use = r > 0 ? r : k;
    if (use > k) {
        use = k;
        out.reduced = true;
    }
    out.q = svd.matrixU().leftCols(use);
    return out;
}

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

ModelParams replace_value_matrix(const ModelParams& params, const Matrix& candidate) {
    if (candidate.rows() != params.W_V.rows() || candidate.cols() != params.W_V.cols()) {
        throw InvalidInput("replacement value matrix must be d x d");
    }
    ModelParams out = params;
    out.W_V = candidate;
    return out;
}

Matrix low_rank(const Matrix& mat, int r) {
    if (r < 0 || r > std::min(mat.rows(), mat.cols())) throw InvalidInput("low_rank: r out of range");
    Eigen::BDCSVD<Matrix> svd(mat, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return svd.matrixU().leftCols(r) * svd.singularValues().head(r).asDiagonal() * svd.matrixV().leftCols(r).transpose();
}

Matrix low_rank_basis(const Matrix& mat, int r) {
    if (r < 0 || r > std::min(mat.rows(), mat.cols())) throw InvalidInput("low_rank_basis: r out of range");
    Eigen::BDCSVD<Matrix> svd(mat, Eigen::ComputeThinU);
    return svd.matrixU().leftCols(r);
}

AngleReport principal_angles(const Matrix& a, const Matrix& b, int r) {
    if (a.rows() != b.rows()) throw InvalidInput("principal_angles: subspaces live in different ambient dimensions");
    Basis ba = column_basis(a, r);
    Basis bb = column_basis(b, r);
    AngleReport rep;
    rep.reduced = ba.reduced || bb.reduced;
    if (ba.q.cols() < bb.q.cols()) std::swap(ba, bb);
    const Matrix& qa = ba.q;  // the wider basis
    const Matrix& qb = bb.q;
    const auto k = qb.cols();
    rep.rank = static_cast<int>(k);
    if (k == 0) return rep;

    const Matrix cross = qa.transpose() * qb;
    Eigen::JacobiSVD<Matrix> cos_svd(cross);
    const Matrix residual = qb - qa * cross;
    Eigen::JacobiSVD<Matrix> sin_svd(residual);
    const Vector& cosines = cos_svd.singularValues();  // descending -> angles ascending
    const Vector& sines = sin_svd.singularValues();    // descending -> angles descending

    rep.angles.resize(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < k; ++i) {
        const double c = std::clamp(i < cosines.size() ? cosines(i) : 0.0, 0.0, 1.0);
        const double s = std::clamp(sines(k - 1 - i), 0.0, 1.0);
        rep.angles[static_cast<std::size_t>(i)] = c * c >= 0.5 ? std::asin(s) : std::acos(c);
    }
    std::sort(rep.angles.begin(), rep.angles.end());
    return rep;
}

HammingFit hamming_fit(const Matrix& embeddings) {
    const Eigen::Index v = embeddings.cols();
    if (v < 4 || (v & (v - 1)) != 0) throw InvalidInput("hamming_fit needs 2^m embedding columns, m >= 2");
    const int m = std::countr_zero(static_cast<std::uint64_t>(v));
    const Matrix gram = embeddings.transpose() * embeddings;

    std::vector<double> sum(static_cast<std::size_t>(m + 1), 0.0), sq(static_cast<std::size_t>(m + 1), 0.0);
    std::vector<std::size_t> count(static_cast<std::size_t>(m + 1), 0);
    for (Eigen::Index i = 0; i < v; ++i) {
        for (Eigen::Index j = 0; j < v; ++j) {
            const auto k = static_cast<std::size_t>(
                hamming(Token{static_cast<std::uint32_t>(i)}, Token{static_cast<std::uint32_t>(j)}));
            sum[k] += gram(i, j);
            ++count[k];
        }
    }
    for (Eigen::Index i = 0; i < v; ++i) {
        for (Eigen::Index j = 0; j < v; ++j) {
            const auto k = static_cast<std::size_t>(
                hamming(Token{static_cast<std::uint32_t>(i)}, Token{static_cast<std::uint32_t>(j)}));
            const double mean = sum[k] / static_cast<double>(count[k]);
            sq[k] += (gram(i, j) - mean) * (gram(i, j) - mean);
        }
    }

    HammingFit fit;
    std::vector<double> xs, ys;
    for (int k = 0; k <= m; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        HammingRow row{k, sum[kk] / static_cast<double>(count[kk]), std::sqrt(sq[kk] / static_cast<double>(count[kk])), count[kk]};
        fit.rows.push_back(row);
        if (k > 0) {
            xs.push_back(k);
            ys.push_back(row.mean_inner);
        }
    }
    fit.b0 = fit.rows[0].mean_inner;

    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    fit.a = -fit.slope;
    fit.b = my - fit.slope * mx;
    fit.correlation = pearson(xs, ys);
    return fit;
}

Vector spectrum(const Matrix& mat) {
    if (mat.size() == 0) return Vector();
    Eigen::BDCSVD<Matrix> svd(mat);
    return svd.singularValues();
}

ClusterAttention attention_cluster_stats(const ModelParams& params, const TaskConfig& task, int n, Pcg32& rng) {
    if (!is_cluster_kind(task.neighborhood)) {
        throw ConfigError("attention cluster statistics need a cluster neighborhood, got " + std::string(to_string(task.neighborhood)));
    }
    if (n < 1) throw InvalidInput("attention_cluster_stats needs n >= 1");
    if (static_cast<std::uint32_t>(params.vocab()) != task.vocab()) throw InvalidInput("model and task vocabularies differ");
    const TaskSampler sampler(task);
    const TokenTables tables(params);
    const int c = cluster_count(task.neighborhood);
    const Eigen::Index v = task.vocab();

    ClusterAttention out;
    out.clusters = c;
    out.mean_attention = Matrix::Zero(c, c);
    out.position_counts = Matrix::Zero(c, c);
    out.heat = Matrix::Zero(v, v);
    Matrix heat_counts = Matrix::Zero(v, v);

    Vector attention;
    for (int i = 0; i < n; ++i) {
        const Sample s = sampler.sample(rng);
        tables.logits(s.context, &attention);
        const Token q = s.context.back();
        const int cq = cluster_of(task.neighborhood, task.m, q);
        for (std::size_t l = 0; l < s.context.size(); ++l) {
            const Token k = s.context[l];
            const int ck = cluster_of(task.neighborhood, task.m, k);
            const double w = attention(static_cast<Eigen::Index>(l));
            out.mean_attention(cq, ck) += w;
            out.position_counts(cq, ck) += 1.0;
            out.heat(q.id, k.id) += w;
            heat_counts(q.id, k.id) += 1.0;
        }
    }

    double same = 0.0, same_n = 0.0, cross = 0.0, cross_n = 0.0;
    for (int i = 0; i < c; ++i) {
        for (int j = 0; j < c; ++j) {
            (i == j ? same : cross) += out.mean_attention(i, j);
            (i == j ? same_n : cross_n) += out.position_counts(i, j);
            if (out.position_counts(i, j) > 0.0) out.mean_attention(i, j) /= out.position_counts(i, j);
        }
    }
    out.same_cluster_mean = same_n > 0.0 ? same / same_n : 0.0;
    out.cross_cluster_mean = cross_n > 0.0 ? cross / cross_n : 0.0;
    for (Eigen::Index i = 0; i < v; ++i) {
        for (Eigen::Index j = 0; j < v; ++j) {
            if (heat_counts(i, j) > 0.0) out.heat(i, j) /= heat_counts(i, j);
        }
    }
    return out;
}

std::vector<HijackPoint> hijack_curve(const ModelParams& params, const TaskConfig& task, std::span<const double> grid, int n,
                                      const Pcg32& rng) {
    if (n < 1) throw InvalidInput("hijack_curve needs n >= 1");
    for (double p : grid) {
        if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("mixing rates must lie in [0, 1]");
    }
    const TaskSampler sampler(task);
    const TokenTables tables(params);
    std::vector<HijackPoint> out;
    for (double p : grid) {
        Pcg32 local = rng;
        std::size_t hit_true = 0, hit_false = 0;
        for (int i = 0; i < n; ++i) {
            const MixedSample ms = sampler.sample_mixed(p, local);
            const Token pred = tables.predict(ms.sample.context);
            hit_true += pred == ms.true_target ? 1 : 0;
            hit_false += pred == ms.false_target ? 1 : 0;
        }
        out.push_back({p, static_cast<double>(hit_true) / n, static_cast<double>(hit_false) / n});
    }
    return out;
}

std::vector<LengthPoint> length_sweep(const TaskConfig& task, std::span<const int> lengths, std::span<const int> dims,
                                      const ModelConfig& model, const TrainConfig& cfg, std::uint64_t seed) {
    std::vector<LengthPoint> out;
    for (int d : dims) {
        for (int len : lengths) {
            TaskConfig t = task;
            t.context_len = len;
            ModelConfig mc = model;
            mc.d = d;
            const TrainReport r = cfg.select_lr ? train_select_lr(t, mc, cfg, seed) : train(t, mc, cfg, seed);
            out.push_back({len, d, r.final_accuracy});
        }
    }
    return out;
}

std::vector<CandidateAccuracy> replacement_study(const ModelParams& params, const TaskConfig& task, int n, std::uint64_t seed) {
    Pcg32 eval_rng = stream_rng(seed, Stream::Analysis);
    const std::vector<Sample> eval_set = draw_samples(TaskSampler(task), n, eval_rng);
    Pcg32 control_rng = stream_rng(seed, Stream::Control);

    std::vector<CandidateAccuracy> out;
    out.push_back({"trained", accuracy_on(params, eval_set)});
    out.push_back({"constructed", accuracy_on(replace_value_matrix(params, construct_value_matrix(params.W_E, task.neighborhood, task.m)), eval_set)});
    out.push_back({"random", accuracy_on(replace_value_matrix(params, random_value_matrix(params.W_E, task.neighborhood, task.m, control_rng)), eval_set)});
    out.push_back({"identity", accuracy_on(replace_value_matrix(params, Matrix::Identity(params.d(), params.d())), eval_set)});
    return out;
}

std::vector<CandidateAngles> angle_study(const ModelParams& params, NeighborhoodKind kind, int r, double init_scale,
                                         std::uint64_t seed) {
    Pcg32 control_rng = stream_rng(seed, Stream::Control);
    Pcg32 gauss_rng = stream_rng(seed, Stream::Init);
    const Matrix trained = low_rank(params.W_V, r);
    const std::vector<std::pair<std::string, Matrix>> candidates{
        {"constructed", construct_value_matrix(params.W_E, kind, params.m)},
        {"random", random_value_matrix(params.W_E, kind, params.m, control_rng)},
        {"gaussian", gaussian_matrix(params.d(), params.d(), init_scale, gauss_rng)},
    };
    std::vector<CandidateAngles> out;
    for (const auto& [name, mat] : candidates) {
        CandidateAngles ca;
        ca.candidate = name;
        ca.report = principal_angles(trained, low_rank(mat, r), r);
        ca.mean_angle = ca.report.angles.empty()
                            ? 0.0
                            : std::accumulate(ca.report.angles.begin(), ca.report.angles.end(), 0.0) /
                                  static_cast<double>(ca.report.angles.size());
        out.push_back(std::move(ca));
    }
    return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidInput("pearson needs two equal-length series of length >= 2");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    // A constant series has no defined correlation; report 0.
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

double spearman(std::span<const double> x, std::span<const double> y) {
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

}  // namespace lca
