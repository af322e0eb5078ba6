#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kept/model.hpp"
#include "kept/train.hpp"

namespace kept {

// Norm parameters at one site: gamma/beta on the LayerNorm side, theta on
// the RMSNorm side.
template <typename T>
struct NormParams {
    Tensor<T> gamma;
    Tensor<T> beta;
    Tensor<T> theta;
};

enum class MapRule { NPM, OPM };

struct MappingPlanEntry {
    std::string source_path;
    std::string target_path;
    MapRule rule = MapRule::NPM;
};

// Per-tensor conversion plan: identity copy everywhere except the norm
// sites, whose gammas seed the target thetas; betas are discarded.
struct MappingPlan {
    std::vector<MappingPlanEntry> entries;
    std::vector<std::string> unmapped_source_paths;
};

struct MappingReport {
    std::size_t n_copied = 0;
    std::size_t n_opm_sites = 0;
    std::map<std::string, double> discarded_beta_l2;  // per-site L2 of the dropped beta
    std::size_t max_shape_mismatch = 0;

    std::string to_json() const {
        nlohmann::json j;
        j["n_copied"] = n_copied;
        j["n_opm_sites"] = n_opm_sites;
        j["discarded_beta_l2"] = discarded_beta_l2;
        j["max_shape_mismatch"] = max_shape_mismatch;
        return j.dump(2);
    }
};

// Builds the plan for a source -> target conversion. The configs must agree
// on every dimension; only the norm kind may differ. A source already on
// RMSNorm degenerates to a pure-NPM plan.
inline MappingPlan build_mapping_plan(const ModelConfig& source_cfg, const ModelConfig& target_cfg) {
    source_cfg.validate();
    target_cfg.validate();
    if (!source_cfg.same_dims(target_cfg))
        throw std::invalid_argument("build_mapping_plan: source and target dimensions differ");
    if (target_cfg.norm_kind != NormKind::rms_norm)
        throw std::invalid_argument("build_mapping_plan: target must use rms_norm");

    MappingPlan plan;
    const bool converting = source_cfg.norm_kind == NormKind::layer_norm;
    for (const auto& target_path : expected_paths(target_cfg)) {
        MappingPlanEntry e;
        e.target_path = target_path;
        if (converting && target_path.ends_with(".theta")) {
            e.source_path = target_path.substr(0, target_path.size() - 5) + "gamma";
            e.rule = MapRule::OPM;
        } else {
            e.source_path = target_path;
            e.rule = MapRule::NPM;
        }
        plan.entries.push_back(std::move(e));
    }
    if (converting)
        for (const auto& site : norm_site_paths(source_cfg))
            plan.unmapped_source_paths.push_back(site + ".beta");
    return plan;
}

// Identity copies for every NPM entry; norm parameters are left to opm_map.
template <typename T>
ParameterStore<T> npm_map(const ParameterStore<T>& source, const MappingPlan& plan) {
    ParameterStore<T> out;
    for (const auto& e : plan.entries) {
        if (e.rule != MapRule::NPM) continue;
        auto it = source.find(e.source_path);
        if (it == source.end())
            throw std::invalid_argument("npm_map: missing source path " + e.source_path);
        out.emplace(e.target_path, it->second);
    }
    return out;
}

// theta <- gamma; the discarded beta's L2 norm is recorded as a diagnostic
// so sources violating the near-zero-beta premise are visible.
template <typename T>
Tensor<T> opm_map(const NormParams<T>& source_norm, const std::string& site, MappingReport& report) {
    if (source_norm.gamma.numel() == 0)
        throw std::invalid_argument("opm_map: gamma missing at " + site);
    double l2 = 0.0;
    for (std::size_t i = 0; i < source_norm.beta.numel(); ++i)
        l2 += static_cast<double>(source_norm.beta[i]) * static_cast<double>(source_norm.beta[i]);
    report.discarded_beta_l2[site] = std::sqrt(l2);
    return source_norm.gamma;
}

// Full conversion: NPM copies plus OPM at every norm site, validated
// against the target layout.
template <typename T>
std::pair<ParameterStore<T>, MappingReport> convert_store(const ParameterStore<T>& source,
                                                          const MappingPlan& plan,
                                                          const ModelConfig& target_cfg) {
    MappingReport report;
    ParameterStore<T> out = npm_map(source, plan);
    report.n_copied = out.size();
    for (const auto& e : plan.entries) {
        if (e.rule != MapRule::OPM) continue;
        auto git = source.find(e.source_path);
        if (git == source.end())
            throw std::invalid_argument("convert_store: missing source path " + e.source_path);
        const std::string site = e.target_path.substr(0, e.target_path.size() - 6);  // strip ".theta"
        NormParams<T> np;
        np.gamma = git->second;
        auto bit = source.find(site + ".beta");
        if (bit != source.end()) np.beta = bit->second;
        out.emplace(e.target_path, opm_map(np, site, report));
        ++report.n_opm_sites;
    }
    for (const auto& [path, tensor] : out) {
        const Shape want = param_shape(target_cfg, path);
        if (tensor.shape() != want)
            throw std::invalid_argument("convert_store: shape mismatch at " + path + ": " +
                                        shape_str(tensor.shape()) + " vs " + shape_str(want));
    }
    validate_store(out, target_cfg);
    return {std::move(out), std::move(report)};
}

// Per-coordinate exact minimizer of || LN(x; gamma, beta) - RN(x; theta) ||^2
// for a single activation vector:
//   theta_i = RMS(x)/sigma * (x_i - mu)/x_i * gamma_i + RMS(x)/x_i * beta_i
// (with the same epsilon guard as the norm ops). Diagnostic only; the
// shipped mapping rule is theta <- gamma.
template <typename T>
Tensor<T> opm_closed_form(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    const std::size_t n = x.numel();
    if (n < 2) throw std::invalid_argument("opm_closed_form: need at least 2 coordinates");
    if (gamma.numel() != n || beta.numel() != n)
        throw std::invalid_argument("opm_closed_form: length mismatch");
    T mn = x[0], mx = x[0];
    for (std::size_t i = 0; i < n; ++i) {
        if (x[i] == T{0}) throw std::invalid_argument("opm_closed_form: zero coordinate in x");
        mn = std::min(mn, x[i]);
        mx = std::max(mx, x[i]);
    }
    if (mn == mx) throw std::invalid_argument("opm_closed_form: constant x (sigma = 0)");
    const ActivationStats st = activation_stats(x, static_cast<double>(eps));
    const double ratio = st.rms / st.std;
    Tensor<T> theta(x.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = static_cast<double>(x[i]);
        theta[i] = static_cast<T>(ratio * (xi - st.mean) / xi * static_cast<double>(gamma[i]) +
                                  st.rms / xi * static_cast<double>(beta[i]));
    }
    return theta;
}

// The L2 objective the closed form minimizes, exposed for the oracles.
template <typename T>
double opm_objective(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     const Tensor<T>& theta, T eps) {
    const std::size_t n = x.numel();
    const ActivationStats st = activation_stats(x, static_cast<double>(eps));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = static_cast<double>(x[i]);
        const double ln = (xi - st.mean) / st.std * static_cast<double>(gamma[i]) +
                          static_cast<double>(beta[i]);
        const double rn = xi / st.rms * static_cast<double>(theta[i]);
        total += (ln - rn) * (ln - rn);
    }
    return total;
}

// Convergence trace of the norm-only pilot: cosine similarity and L2
// distance between each trained theta and its source gamma.
struct PilotTrace {
    std::vector<std::string> sites;
    struct Row {
        std::size_t step = 0;
        std::vector<double> cosine;
        std::vector<double> l2;
        double median_cosine = 0.0;
    };
    std::vector<Row> rows;
};

struct PilotOptions {
    double lr = 3e-3;
    std::size_t eval_every = 100;
    std::uint64_t seed = 0;
};

// Freezes everything except the RMSNorm weights, re-initializes them from
// Normal(1, 0.5^2), and trains against the frozen teacher with the logit
// objective.
template <typename T>
PilotTrace run_opm_pilot(const Model<T>& teacher, Model<T>& student, const PackedDataset& corpus,
                         std::size_t steps, const PilotOptions& opts = {}) {
    if (teacher.config().norm_kind != NormKind::layer_norm)
        throw std::invalid_argument("run_opm_pilot: teacher must be the LayerNorm source");
    if (student.config().norm_kind != NormKind::rms_norm)
        throw std::invalid_argument("run_opm_pilot: student must be the RMSNorm target");

    PilotTrace trace;
    trace.sites = norm_site_paths(student.config());

    std::set<std::string> theta_paths;
    std::vector<Tensor<T>> gammas;
    for (const auto& site : trace.sites) {
        theta_paths.insert(site + ".theta");
        gammas.push_back(teacher.param(site + ".gamma")->value);
    }

    Rng rng = Rng::derive(opts.seed, "pilot_reinit");
    for (const auto& site : trace.sites) {
        Tensor<T>& theta = student.param(site + ".theta")->value;
        for (std::size_t i = 0; i < theta.numel(); ++i)
            theta[i] = static_cast<T>(1.0 + 0.5 * rng.normal());
    }

    auto measure = [&](std::size_t step) {
        PilotTrace::Row row;
        row.step = step;
        for (std::size_t s = 0; s < trace.sites.size(); ++s) {
            const Tensor<T>& theta = student.param(trace.sites[s] + ".theta")->value;
            const Tensor<T>& gamma = gammas[s];
            double dot = 0.0, nt = 0.0, ng = 0.0, l2 = 0.0;
            for (std::size_t i = 0; i < theta.numel(); ++i) {
                const double t = static_cast<double>(theta[i]);
                const double g = static_cast<double>(gamma[i]);
                dot += t * g;
                nt += t * t;
                ng += g * g;
                l2 += (t - g) * (t - g);
            }
            row.cosine.push_back(dot / (std::sqrt(nt) * std::sqrt(ng) + 1e-300));
            row.l2.push_back(std::sqrt(l2));
        }
        std::vector<double> tmp = row.cosine;
        row.median_cosine = detail::percentile(tmp, 0.5);
        trace.rows.push_back(std::move(row));
    };

    measure(0);
    if (steps == 0) return trace;

    TrainConfig cfg = TrainConfig::toy_preset(Objective::xkd_logits);
    cfg.lr = opts.lr;
    cfg.total_steps = steps;
    cfg.warmup_steps = std::min<std::size_t>(50, steps);
    cfg.seq_len = corpus.seq_len;
    cfg.seed = opts.seed;
    cfg.eval_every = opts.eval_every;

    TrainHooks hooks;
    hooks.trainable = &theta_paths;
    hooks.after_step = [&](std::size_t step) {
        if (step % opts.eval_every == 0 || step == steps) measure(step);
    };
    xkd_loop(teacher, student, corpus, cfg, nullptr, hooks);
    return trace;
}

}  // namespace kept
