#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kept/data.hpp"
#include "kept/metrics.hpp"
#include "kept/model.hpp"

namespace kept {

// Per-position comparison of two models on the same token stream: argmax
// match rate, KL(teacher || student) from softmaxed logits, and the mean
// squared logit distance. L2 is the strictest of the three (it is not
// invariant to per-row logit shifts).
struct AgreementReport {
    double top1_match_rate = 0.0;
    double mean_kl = 0.0;
    double mean_logit_l2 = 0.0;
    std::size_t n_positions = 0;
};

namespace detail {

// Row-wise log-softmax into `out`, returns argmax index.
template <typename T>
std::size_t log_softmax_row(const T* z, std::size_t V, std::vector<double>& out) {
    std::size_t arg = 0;
    double mx = static_cast<double>(z[0]);
    for (std::size_t v = 1; v < V; ++v)
        if (static_cast<double>(z[v]) > mx) {
            mx = static_cast<double>(z[v]);
            arg = v;
        }
    double denom = 0.0;
    for (std::size_t v = 0; v < V; ++v) denom += std::exp(static_cast<double>(z[v]) - mx);
    const double lse = mx + std::log(denom);
    out.resize(V);
    for (std::size_t v = 0; v < V; ++v) out[v] = static_cast<double>(z[v]) - lse;
    return arg;
}

}  // namespace detail

template <typename T>
AgreementReport agreement(const Model<T>& teacher, const Model<T>& student,
                          const PackedDataset& eval_data, std::size_t max_sequences = 0) {
    if (teacher.config().vocab_size != student.config().vocab_size)
        throw std::invalid_argument("agreement: vocabulary size mismatch");
    const std::size_t n_seq = max_sequences == 0
                                  ? eval_data.n_sequences
                                  : std::min(max_sequences, eval_data.n_sequences);
    if (n_seq == 0) throw std::invalid_argument("agreement: empty eval dataset");

    AgreementReport rep;
    double kl_total = 0.0, l2_total = 0.0;
    std::size_t matches = 0;
    std::vector<double> lp_t, lp_s;
    for (std::size_t s = 0; s < n_seq; ++s) {
        const auto inputs = lm_inputs(eval_data.sequence(s));
        const auto t_out = teacher.forward(inputs, false);
        const auto s_out = student.forward(inputs, false);
        const Tensor<T>& zt = t_out.logits->value;
        const Tensor<T>& zs = s_out.logits->value;
        const std::size_t L = zt.rows(), V = zt.cols();
        for (std::size_t j = 0; j < L; ++j) {
            const std::size_t arg_t = detail::log_softmax_row(zt.data() + j * V, V, lp_t);
            const std::size_t arg_s = detail::log_softmax_row(zs.data() + j * V, V, lp_s);
            if (arg_t == arg_s) ++matches;
            double kl = 0.0, l2 = 0.0;
            for (std::size_t v = 0; v < V; ++v) {
                kl += std::exp(lp_t[v]) * (lp_t[v] - lp_s[v]);
                const double d = static_cast<double>(zt[j * V + v]) - static_cast<double>(zs[j * V + v]);
                l2 += d * d;
            }
            kl_total += std::max(kl, 0.0);  // clamp tiny negative rounding
            l2_total += l2;
            ++rep.n_positions;
        }
    }
    rep.top1_match_rate = static_cast<double>(matches) / static_cast<double>(rep.n_positions);
    rep.mean_kl = kl_total / static_cast<double>(rep.n_positions);
    rep.mean_logit_l2 = l2_total / static_cast<double>(rep.n_positions);
    return rep;
}

// Mean next-token cross-entropy over the dataset (no gradients kept).
template <typename T>
double eval_lm_loss(const Model<T>& model, const PackedDataset& data, std::size_t max_sequences = 0) {
    const std::size_t n_seq =
        max_sequences == 0 ? data.n_sequences : std::min(max_sequences, data.n_sequences);
    if (n_seq == 0) throw std::invalid_argument("eval_lm_loss: empty dataset");
    double total = 0.0;
    for (std::size_t s = 0; s < n_seq; ++s) {
        const auto seq = data.sequence(s);
        const auto out = model.forward(lm_inputs(seq), false);
        total += static_cast<double>(scalar_value(lm_loss(out, lm_targets(seq))));
    }
    return total / static_cast<double>(n_seq);
}

// Perplexity versus input length, one prefix window per length.
struct LengthCurve {
    std::vector<std::size_t> lengths;
    std::vector<double> ppl_teacher;
    std::vector<double> ppl_student;
};

template <typename T>
std::vector<double> ppl_vs_length(const Model<T>& model, std::span<const std::int32_t> document,
                                  const std::vector<std::size_t>& lengths) {
    for (std::size_t i = 1; i < lengths.size(); ++i)
        if (lengths[i] <= lengths[i - 1])
            throw std::invalid_argument("ppl_vs_length: lengths must be strictly increasing");
    if (lengths.empty()) throw std::invalid_argument("ppl_vs_length: no lengths");
    if (document.size() < lengths.back())
        throw std::invalid_argument("ppl_vs_length: document too short (" +
                                    std::to_string(document.size()) + " < " +
                                    std::to_string(lengths.back()) + ")");
    std::vector<double> ppl;
    ppl.reserve(lengths.size());
    for (std::size_t len : lengths) {
        const auto window = document.first(len);
        const auto out = model.forward(lm_inputs(window), false);
        const double ce = static_cast<double>(scalar_value(lm_loss(out, lm_targets(window))));
        ppl.push_back(std::exp(ce));
    }
    return ppl;
}

// Distribution of |mean| / RMS over pre-norm activations, per norm site.
struct ZeroMeanStats {
    struct SiteStats {
        double median = 0.0;
        double p95 = 0.0;
        std::size_t n = 0;
    };
    std::map<std::string, SiteStats> sites;
    double pooled_median = 0.0;
};

namespace detail {

inline double percentile(std::vector<double>& v, double q) {
    if (v.empty()) throw std::invalid_argument("percentile: empty sample");
    std::sort(v.begin(), v.end());
    const double idx = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(idx);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = idx - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace detail

template <typename T>
ZeroMeanStats zero_mean_probe(const Model<T>& model, const PackedDataset& probe_data,
                              std::size_t max_sequences = 0) {
    const std::size_t n_seq = max_sequences == 0
                                  ? probe_data.n_sequences
                                  : std::min(max_sequences, probe_data.n_sequences);
    if (n_seq == 0) throw std::invalid_argument("zero_mean_probe: empty dataset");
    NormProbe probe;
    for (std::size_t s = 0; s < n_seq; ++s)
        model.forward(lm_inputs(probe_data.sequence(s)), false, &probe);

    ZeroMeanStats stats;
    std::vector<double> pooled;
    for (auto& [site, ratios] : probe.site_ratios) {
        pooled.insert(pooled.end(), ratios.begin(), ratios.end());
        ZeroMeanStats::SiteStats st;
        st.n = ratios.size();
        std::vector<double> tmp = ratios;
        st.median = detail::percentile(tmp, 0.5);
        st.p95 = detail::percentile(tmp, 0.95);
        stats.sites.emplace(site, st);
    }
    stats.pooled_median = detail::percentile(pooled, 0.5);
    return stats;
}

// Summary of a training run's metrics CSV: downsampled eval rows plus the
// first step at which agreement crossed each threshold.
struct RecoveryCurve {
    struct Point {
        std::size_t step = 0;
        double agreement = 0.0;
        std::optional<double> eval_loss;
    };
    std::vector<Point> points;                                    // downsampled
    std::map<double, std::optional<std::size_t>> first_step_at;   // threshold -> step
};

inline RecoveryCurve recovery_curve(const std::vector<MetricsRow>& rows,
                                    std::size_t max_points = 64) {
    RecoveryCurve curve;
    std::vector<RecoveryCurve::Point> eval_points;
    for (const auto& r : rows)
        if (r.top1_agreement)
            eval_points.push_back({r.step, *r.top1_agreement, r.eval_loss});
    if (eval_points.empty())
        throw std::runtime_error("recovery_curve: no agreement-bearing rows in metrics");
    for (double th : {0.90, 0.95, 0.99}) {
        std::optional<std::size_t> at;
        for (const auto& p : eval_points)
            if (p.agreement >= th) {
                at = p.step;
                break;
            }
        curve.first_step_at[th] = at;
    }
    const std::size_t stride = (eval_points.size() + max_points - 1) / max_points;
    for (std::size_t i = 0; i < eval_points.size(); i += stride) curve.points.push_back(eval_points[i]);
    if (curve.points.back().step != eval_points.back().step) curve.points.push_back(eval_points.back());
    return curve;
}

inline RecoveryCurve recovery_curve_from_csv(const std::string& path, std::size_t max_points = 64) {
    return recovery_curve(parse_metrics_csv_file(path), max_points);
}

}  // namespace kept
