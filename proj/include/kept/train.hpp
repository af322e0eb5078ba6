#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "kept/autograd.hpp"
#include "kept/data.hpp"
#include "kept/eval.hpp"
#include "kept/metrics.hpp"
#include "kept/model.hpp"

namespace kept {

inline constexpr double kAdamEps = 1e-8;

enum class Objective { xkd_hidden, xkd_logits, uptrain, pretrain };

inline const char* objective_name(Objective o) {
    switch (o) {
        case Objective::xkd_hidden: return "xkd_hidden";
        case Objective::xkd_logits: return "xkd_logits";
        case Objective::uptrain: return "uptrain";
        case Objective::pretrain: return "pretrain";
    }
    return "?";
}

inline Objective objective_from_name(const std::string& s) {
    if (s == "xkd_hidden") return Objective::xkd_hidden;
    if (s == "xkd_logits") return Objective::xkd_logits;
    if (s == "uptrain") return Objective::uptrain;
    if (s == "pretrain") return Objective::pretrain;
    throw std::invalid_argument("unknown objective: " + s);
}

struct TrainConfig {
    Objective objective = Objective::xkd_logits;
    double lr = 3e-4;
    std::size_t warmup_steps = 50;
    std::size_t total_steps = 3000;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.95;
    std::size_t seq_len = 128;
    std::size_t batch_sequences = 1;
    std::uint64_t seed = 0;
    std::size_t eval_every = 100;

    // Weight decay 0.1 for pretraining (to induce the near-zero-mean
    // pre-norm regime), 0 for alignment runs.
    static TrainConfig toy_preset(Objective obj) {
        TrainConfig c;
        c.objective = obj;
        c.lr = 3e-4;
        c.warmup_steps = 50;
        c.total_steps = 3000;
        c.weight_decay = obj == Objective::pretrain ? 0.1 : 0.0;
        c.seq_len = 128;
        c.batch_sequences = 1;
        c.eval_every = 100;
        return c;
    }

    static TrainConfig paper_preset(Objective obj) {
        TrainConfig c;
        c.objective = obj;
        c.lr = 1e-5;
        c.warmup_steps = 100;
        c.total_steps = 30000;
        c.weight_decay = obj == Objective::pretrain ? 0.1 : 0.0;
        c.seq_len = 4096;
        c.batch_sequences = 1;
        c.eval_every = 100;
        return c;
    }

    void validate() const {
        if (warmup_steps > total_steps)
            throw std::invalid_argument("TrainConfig: warmup_steps exceeds total_steps");
        if (!(lr > 0)) throw std::invalid_argument("TrainConfig: lr must be positive");
        if (weight_decay < 0) throw std::invalid_argument("TrainConfig: negative weight_decay");
        if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1))
            throw std::invalid_argument("TrainConfig: betas must lie in (0, 1)");
        if (seq_len < 2) throw std::invalid_argument("TrainConfig: seq_len must be at least 2");
        if (batch_sequences == 0)
            throw std::invalid_argument("TrainConfig: batch_sequences must be positive");
        if (eval_every == 0) throw std::invalid_argument("TrainConfig: eval_every must be positive");
    }
};

// Linear warmup 0 -> lr over warmup_steps, then cosine decay to 0 at
// total_steps.
inline double cosine_lr(std::size_t step, const TrainConfig& cfg) {
    if (step > cfg.total_steps) throw std::invalid_argument("cosine_lr: step out of range");
    if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
        return cfg.lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    const double span = static_cast<double>(cfg.total_steps - cfg.warmup_steps);
    const double progress =
        span > 0 ? static_cast<double>(step - cfg.warmup_steps) / span : 1.0;
    return cfg.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

// Eq-style hidden-state alignment: mean over positions and the N+1
// residual-stream slots of the squared L2 gap. The teacher side carries no
// gradients.
template <typename T>
NodePtr<T> loss_hidden(const DistillOutputs<T>& teacher_out, const DistillOutputs<T>& student_out) {
    if (teacher_out.hiddens.empty() || student_out.hiddens.empty())
        throw std::invalid_argument("loss_hidden: forward pass did not capture hiddens");
    if (teacher_out.hiddens.size() != student_out.hiddens.size())
        throw std::invalid_argument("loss_hidden: slot-count mismatch, " +
                                    std::to_string(teacher_out.hiddens.size()) + " vs " +
                                    std::to_string(student_out.hiddens.size()));
    NodePtr<T> acc;
    for (std::size_t i = 0; i < teacher_out.hiddens.size(); ++i) {
        NodePtr<T> term = l2_mean(student_out.hiddens[i], teacher_out.hiddens[i]);
        acc = acc ? add(acc, term) : term;
    }
    return scale(acc, static_cast<T>(1.0 / static_cast<double>(teacher_out.hiddens.size())));
}

// Logit alignment: mean over positions of the squared L2 gap between raw
// LM-head outputs.
template <typename T>
NodePtr<T> loss_logits(const DistillOutputs<T>& teacher_out, const DistillOutputs<T>& student_out) {
    return l2_mean(student_out.logits, teacher_out.logits);
}

template <typename T>
struct OptimizerState {
    std::map<std::string, Tensor<T>> m;
    std::map<std::string, Tensor<T>> v;
    std::size_t t = 0;
};

// Decoupled-weight-decay Adam:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2  (bias-corrected)
//   p <- p - lr_t * ( m_hat / (sqrt(v_hat) + eps) + wd * p )
template <typename T>
void adamw_step(std::map<std::string, NodePtr<T>>& params,
                const std::map<std::string, Tensor<T>>& grads, OptimizerState<T>& state, T lr_t,
                const TrainConfig& cfg) {
    if (grads.size() != params.size())
        throw std::invalid_argument("adamw_step: gradient set does not match trainable set");
    state.t += 1;
    const T bc1 = T{1} - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(state.t)));
    const T bc2 = T{1} - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(state.t)));
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T wd = static_cast<T>(cfg.weight_decay);
    const T eps = static_cast<T>(kAdamEps);
    for (auto& [path, node] : params) {
        auto git = grads.find(path);
        if (git == grads.end())
            throw std::invalid_argument("adamw_step: missing gradient for " + path);
        const Tensor<T>& g = git->second;
        Tensor<T>& p = node->value;
        if (!g.same_shape(p))
            throw std::invalid_argument("adamw_step: gradient shape mismatch at " + path);
        if (!g.all_finite())
            throw std::runtime_error("adamw_step: non-finite gradient at " + path);
        auto [mit, minserted] = state.m.try_emplace(path, p.shape());
        auto [vit, vinserted] = state.v.try_emplace(path, p.shape());
        Tensor<T>& m = mit->second;
        Tensor<T>& v = vit->second;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            m[i] = b1 * m[i] + (T{1} - b1) * g[i];
            v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
            const T m_hat = m[i] / bc1;
            const T v_hat = v[i] / bc2;
            p[i] -= lr_t * (m_hat / (std::sqrt(v_hat) + eps) + wd * p[i]);
        }
    }
}

struct TrainHooks {
    MetricsSink* sink = nullptr;
    bool record_wall = false;
    const std::set<std::string>* trainable = nullptr;  // default: all student params
    std::function<void(std::size_t step)> after_step;
};

template <typename T>
struct TrainResult {
    std::vector<MetricsRow> metrics;
    std::size_t epochs = 0;
};

// One engine behind all four objectives. XKD objectives run the frozen
// teacher forward every step; the teacher's parameters are verified
// bitwise-unchanged at exit. Aborts on the first non-finite loss.
template <typename T>
TrainResult<T> train_loop(const Model<T>* teacher, Model<T>& student, const PackedDataset& data,
                          const TrainConfig& cfg, const PackedDataset* eval_data = nullptr,
                          const TrainHooks& hooks = {}) {
    cfg.validate();
    const bool is_xkd = cfg.objective == Objective::xkd_hidden || cfg.objective == Objective::xkd_logits;
    if (is_xkd && teacher == nullptr)
        throw std::invalid_argument("train_loop: XKD objective requires a teacher");
    if (!is_xkd && teacher != nullptr)
        throw std::invalid_argument("train_loop: LM objective takes no teacher");
    if (teacher && teacher->trainable())
        throw std::invalid_argument("train_loop: teacher must be frozen");
    if (data.seq_len != cfg.seq_len)
        throw std::invalid_argument("train_loop: dataset seq_len " + std::to_string(data.seq_len) +
                                    " does not match config seq_len " + std::to_string(cfg.seq_len));

    if (hooks.trainable) student.restrict_trainable(*hooks.trainable);
    std::map<std::string, NodePtr<T>> trainable;
    for (const auto& path : student.paths()) {
        const auto& node = student.param(path);
        if (node->requires_grad) trainable.emplace(path, node);
    }
    if (trainable.empty()) throw std::invalid_argument("train_loop: no trainable parameters");

    const std::uint64_t teacher_hash = teacher ? teacher->content_hash() : 0;
    OptimizerState<T> state;
    TrainResult<T> result;
    if (cfg.total_steps == 0) return result;

    BatchIter iter(data, cfg.batch_sequences, cfg.seed);
    const bool want_hiddens = cfg.objective == Objective::xkd_hidden;
    // Bound once so the step loop never dereferences a maybe-null pointer.
    const Model<T>& teacher_ref = is_xkd ? *teacher : student;
    const auto t_start = std::chrono::steady_clock::now();
    std::size_t tokens_seen = 0;

    for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
        const double lr_t = cosine_lr(step, cfg);
        const auto batch = iter.next();
        student.zero_grads();

        NodePtr<T> loss;
        try {
            NodePtr<T> acc;
            for (const auto& seq : batch.sequences) {
                const auto inputs = lm_inputs(seq);
                NodePtr<T> term;
                if (is_xkd) {
                    const auto t_out = teacher->forward(inputs, want_hiddens);
                    const auto s_out = student.forward(inputs, want_hiddens);
                    term = want_hiddens ? loss_hidden(t_out, s_out) : loss_logits(t_out, s_out);
                } else {
                    term = lm_loss(student.forward(inputs, false), lm_targets(seq));
                }
                acc = acc ? add(acc, term) : term;
            }
            loss = batch.sequences.size() > 1
                       ? scale(acc, static_cast<T>(1.0 / static_cast<double>(batch.sequences.size())))
                       : acc;
            const T loss_value = scalar_value(loss);
            if (!std::isfinite(static_cast<double>(loss_value)))
                throw std::runtime_error("non-finite loss");
            backward(loss);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("train_loop: aborted at step " + std::to_string(step) + ": " +
                                     e.what());
        }

        std::map<std::string, Tensor<T>> grads;
        for (const auto& [path, node] : trainable) grads.emplace(path, grad_or_zero(node));
        adamw_step(trainable, grads, state, static_cast<T>(lr_t), cfg);

        tokens_seen += batch.sequences.size() * cfg.seq_len;
        MetricsRow row;
        row.step = step;
        row.tokens_seen = tokens_seen;
        row.loss = static_cast<double>(scalar_value(loss));
        row.lr = lr_t;
        if (eval_data && step % cfg.eval_every == 0) {
            row.eval_loss = eval_lm_loss(student, *eval_data);
            if (teacher) {
                const AgreementReport rep = agreement(*teacher, student, *eval_data);
                row.top1_agreement = rep.top1_match_rate;
                row.mean_kl = rep.mean_kl;
            }
        }
        if (hooks.record_wall)
            row.wall_ms = static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - t_start)
                              .count());
        if (hooks.sink) hooks.sink->write(row);
        result.metrics.push_back(row);
        if (hooks.after_step) hooks.after_step(step);
    }

    result.epochs = iter.epoch();
    if (teacher && teacher->content_hash() != teacher_hash)
        throw std::logic_error("train_loop: teacher parameters changed during XKD");
    return result;
}

template <typename T>
TrainResult<T> xkd_loop(const Model<T>& teacher, Model<T>& student, const PackedDataset& data,
                        const TrainConfig& cfg, const PackedDataset* eval_data = nullptr,
                        const TrainHooks& hooks = {}) {
    if (cfg.objective != Objective::xkd_hidden && cfg.objective != Objective::xkd_logits)
        throw std::invalid_argument("xkd_loop: objective must be xkd_hidden or xkd_logits");
    return train_loop(&teacher, student, data, cfg, eval_data, hooks);
}

template <typename T>
TrainResult<T> ut_loop(Model<T>& student, const PackedDataset& data, const TrainConfig& cfg,
                       const PackedDataset* eval_data = nullptr, const TrainHooks& hooks = {}) {
    if (cfg.objective != Objective::uptrain)
        throw std::invalid_argument("ut_loop: objective must be uptrain");
    return train_loop<T>(nullptr, student, data, cfg, eval_data, hooks);
}

template <typename T>
TrainResult<T> pretrain_loop(Model<T>& model, const PackedDataset& data, const TrainConfig& cfg,
                             const PackedDataset* eval_data = nullptr, const TrainHooks& hooks = {}) {
    if (cfg.objective != Objective::pretrain)
        throw std::invalid_argument("pretrain_loop: objective must be pretrain");
    return train_loop<T>(nullptr, model, data, cfg, eval_data, hooks);
}

}  // namespace kept
