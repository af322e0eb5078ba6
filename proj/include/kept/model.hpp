#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kept/autograd.hpp"
#include "kept/rng.hpp"
#include "kept/tensor.hpp"

namespace kept {

// Norm epsilon shared by both families.
inline constexpr double kNormEps = 1e-5;

enum class NormKind { layer_norm, rms_norm };

inline const char* norm_kind_name(NormKind k) {
    return k == NormKind::layer_norm ? "layer_norm" : "rms_norm";
}

inline NormKind norm_kind_from_name(const std::string& s) {
    if (s == "layer_norm") return NormKind::layer_norm;
    if (s == "rms_norm") return NormKind::rms_norm;
    throw std::invalid_argument("unknown norm_kind: " + s);
}

// Architecture hyperparameters shared by the source (LayerNorm) and target
// (RMSNorm) families. Both are pre-norm decoder-only stacks with RoPE and
// SwiGLU; only the normalizer differs.
struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t hidden_dim = 0;
    std::size_t mlp_dim = 0;
    std::size_t n_heads = 0;
    std::size_t head_dim = 0;
    std::size_t n_layers = 0;
    double rope_base = 0.0;
    NormKind norm_kind = NormKind::layer_norm;
    std::size_t max_seq_len = 0;

    // Byte-level desk-scale pair used throughout the tests and probes.
    static ModelConfig toy(NormKind kind) {
        ModelConfig c;
        c.vocab_size = 256;
        c.hidden_dim = 64;
        c.mlp_dim = 192;
        c.n_heads = 4;
        c.head_dim = 16;
        c.n_layers = 4;
        c.rope_base = 1e6;
        c.norm_kind = kind;
        c.max_seq_len = 1024;
        return c;
    }

    // Production-scale preset, kept as documentation of the full-size
    // conversion target. Building it allocates ~56 GB; config only.
    static ModelConfig paper_scale(NormKind kind) {
        ModelConfig c;
        c.vocab_size = 84608;
        c.hidden_dim = 5120;
        c.mlp_dim = 15360;
        c.n_heads = 40;
        c.head_dim = 128;
        c.n_layers = 40;
        c.rope_base = 5e7;
        c.norm_kind = kind;
        c.max_seq_len = 4096;
        return c;
    }

    void validate() const {
        if (vocab_size == 0 || hidden_dim == 0 || mlp_dim == 0 || n_heads == 0 || head_dim == 0 ||
            n_layers == 0 || max_seq_len == 0)
            throw std::invalid_argument("ModelConfig: all extents must be positive");
        if (n_heads * head_dim != hidden_dim)
            throw std::invalid_argument("ModelConfig: n_heads * head_dim != hidden_dim");
        if (mlp_dim != 3 * hidden_dim)
            throw std::invalid_argument("ModelConfig: mlp_dim must be 3 * hidden_dim");
        if (!(rope_base > 1.0)) throw std::invalid_argument("ModelConfig: rope_base must exceed 1");
        if (head_dim % 2 != 0) throw std::invalid_argument("ModelConfig: head_dim must be even");
    }

    bool same_dims(const ModelConfig& o) const {
        return vocab_size == o.vocab_size && hidden_dim == o.hidden_dim && mlp_dim == o.mlp_dim &&
               n_heads == o.n_heads && head_dim == o.head_dim && n_layers == o.n_layers &&
               rope_base == o.rope_base && max_seq_len == o.max_seq_len;
    }
};

// Named map from canonical parameter paths to tensors; the unit of
// checkpointing and mapping. Projections carry no biases, so the path sets
// of the two families differ only at norm sites.
template <typename T>
using ParameterStore = std::map<std::string, Tensor<T>>;

// Norm sites in layer order: per layer an input norm and a post-attention
// norm, plus one final norm before the LM head (2N + 1 sites).
inline std::vector<std::string> norm_site_paths(const ModelConfig& cfg) {
    std::vector<std::string> sites;
    for (std::size_t i = 0; i < cfg.n_layers; ++i) {
        sites.push_back("layers." + std::to_string(i) + ".input_norm");
        sites.push_back("layers." + std::to_string(i) + ".post_attn_norm");
    }
    sites.push_back("final_norm");
    return sites;
}

inline std::vector<std::string> norm_param_suffixes(NormKind kind) {
    if (kind == NormKind::layer_norm) return {"gamma", "beta"};
    return {"theta"};
}

inline std::vector<std::string> expected_paths(const ModelConfig& cfg) {
    std::vector<std::string> paths;
    paths.push_back("embed.tokens");
    const auto suffixes = norm_param_suffixes(cfg.norm_kind);
    for (std::size_t i = 0; i < cfg.n_layers; ++i) {
        const std::string base = "layers." + std::to_string(i) + ".";
        for (const auto& s : suffixes) paths.push_back(base + "input_norm." + s);
        for (const char* p : {"q_proj", "k_proj", "v_proj", "o_proj"})
            paths.push_back(base + "attn." + p);
        for (const auto& s : suffixes) paths.push_back(base + "post_attn_norm." + s);
        for (const char* p : {"gate_proj", "up_proj", "down_proj"})
            paths.push_back(base + "mlp." + p);
    }
    for (const auto& s : suffixes) paths.push_back("final_norm." + s);
    paths.push_back("lm_head");
    return paths;
}

inline Shape param_shape(const ModelConfig& cfg, const std::string& path) {
    const std::size_t d = cfg.hidden_dim;
    if (path == "embed.tokens") return {cfg.vocab_size, d};
    if (path == "lm_head") return {d, cfg.vocab_size};
    if (path.ends_with(".gamma") || path.ends_with(".beta") || path.ends_with(".theta")) return {d};
    if (path.ends_with("q_proj") || path.ends_with("k_proj") || path.ends_with("v_proj") ||
        path.ends_with("o_proj"))
        return {d, d};
    if (path.ends_with("gate_proj") || path.ends_with("up_proj")) return {d, cfg.mlp_dim};
    if (path.ends_with("down_proj")) return {cfg.mlp_dim, d};
    throw std::invalid_argument("param_shape: unknown path " + path);
}

// Checks the store's path set is exactly the one implied by the config, with
// matching shapes.
template <typename T>
void validate_store(const ParameterStore<T>& store, const ModelConfig& cfg) {
    const auto expected = expected_paths(cfg);
    if (store.size() != expected.size())
        throw std::invalid_argument("ParameterStore: expected " + std::to_string(expected.size()) +
                                    " paths, got " + std::to_string(store.size()));
    for (const auto& path : expected) {
        auto it = store.find(path);
        if (it == store.end()) throw std::invalid_argument("ParameterStore: missing path " + path);
        if (it->second.shape() != param_shape(cfg, path))
            throw std::invalid_argument("ParameterStore: wrong shape at " + path + ": got " +
                                        shape_str(it->second.shape()) + ", want " +
                                        shape_str(param_shape(cfg, path)));
    }
}

// Seeded initialization: weights ~ Normal(0, 0.02^2) truncated at +-2 sigma,
// gamma/theta = 1, beta = 0. Same seed, same store, bitwise.
template <typename T>
ParameterStore<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng = Rng::derive(seed, "init");
    ParameterStore<T> store;
    for (const auto& path : expected_paths(cfg)) {
        Tensor<T> t(param_shape(cfg, path));
        if (path.ends_with(".gamma") || path.ends_with(".theta")) {
            t.fill(T{1});
        } else if (path.ends_with(".beta")) {
            t.fill(T{0});
        } else {
            for (std::size_t i = 0; i < t.numel(); ++i)
                t[i] = static_cast<T>(0.02 * rng.truncated_normal(2.0));
        }
        store.emplace(path, std::move(t));
    }
    return store;
}

// Residual-stream trajectory of one forward pass: hiddens[0] is the
// embedding output, hiddens[i] the stream after block i (N + 1 slots), plus
// the LM-head logits.
template <typename T>
struct DistillOutputs {
    std::vector<NodePtr<T>> hiddens;
    NodePtr<T> logits;
};

// Collects |mean| / RMS per row of every pre-norm activation.
struct NormProbe {
    std::map<std::string, std::vector<double>> site_ratios;

    template <typename T>
    void record(const std::string& site, const Tensor<T>& x) {
        auto& out = site_ratios[site];
        const std::size_t rows = x.rows(), n = x.cols();
        for (std::size_t r = 0; r < rows; ++r) {
            const ActivationStats st = activation_stats(x.data() + r * n, n, kNormEps);
            out.push_back(std::abs(st.mean) / st.rms);
        }
    }
};

// A config plus its parameters bound as graph leaves. Leaves are stable
// across forward calls so an optimizer can hold per-parameter state; the
// frozen-teacher pattern is a Model with trainable=false.
template <typename T>
class Model {
  public:
    Model(ModelConfig cfg, const ParameterStore<T>& store, bool trainable)
        : cfg_(std::move(cfg)), trainable_(trainable) {
        cfg_.validate();
        validate_store(store, cfg_);
        for (const auto& [path, tensor] : store)
            leaves_.emplace(path, leaf(tensor, trainable, path));
    }

    const ModelConfig& config() const { return cfg_; }
    bool trainable() const { return trainable_; }

    const NodePtr<T>& param(const std::string& path) const {
        auto it = leaves_.find(path);
        if (it == leaves_.end()) throw std::invalid_argument("Model: no parameter " + path);
        return it->second;
    }

    std::vector<std::string> paths() const {
        std::vector<std::string> out;
        out.reserve(leaves_.size());
        for (const auto& [path, node] : leaves_) out.push_back(path);
        return out;
    }

    // Restricts requires_grad to the given paths (used by the norm-only
    // pilot). Only meaningful on a trainable model.
    void restrict_trainable(const std::set<std::string>& paths) {
        for (auto& [path, node] : leaves_) node->requires_grad = paths.count(path) > 0;
    }

    ParameterStore<T> snapshot() const {
        ParameterStore<T> store;
        for (const auto& [path, node] : leaves_) store.emplace(path, node->value);
        return store;
    }

    void zero_grads() const {
        for (const auto& [path, node] : leaves_) node->grad.reset();
    }

    // FNV-1a over path names and raw value bytes; detects any mutation.
    std::uint64_t content_hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&h](const void* p, std::size_t len) {
            const auto* bytes = static_cast<const unsigned char*>(p);
            for (std::size_t i = 0; i < len; ++i) {
                h ^= bytes[i];
                h *= 0x100000001b3ULL;
            }
        };
        for (const auto& [path, node] : leaves_) {
            mix(path.data(), path.size());
            mix(node->value.data(), node->value.numel() * sizeof(T));
        }
        return h;
    }

    // Pre-norm decoder forward: x -> x + Attn(Norm(x)) -> x + MLP(Norm(x)),
    // causal attention, final norm before the LM head.
    DistillOutputs<T> forward(std::span<const std::int32_t> tokens, bool want_hiddens,
                              NormProbe* probe = nullptr) const {
        if (tokens.empty()) throw std::invalid_argument("forward: empty token sequence");
        if (tokens.size() > cfg_.max_seq_len)
            throw std::invalid_argument("forward: sequence length " + std::to_string(tokens.size()) +
                                        " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
        const std::size_t hd = cfg_.head_dim;
        const T attn_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));
        const T eps = static_cast<T>(kNormEps);
        const T base = static_cast<T>(cfg_.rope_base);

        DistillOutputs<T> out;
        NodePtr<T> x = embedding_gather(param("embed.tokens"),
                                        std::vector<std::int32_t>(tokens.begin(), tokens.end()));
        if (want_hiddens) out.hiddens.push_back(x);

        for (std::size_t layer = 0; layer < cfg_.n_layers; ++layer) {
            const std::string prefix = "layers." + std::to_string(layer) + ".";

            NodePtr<T> n1 = apply_norm(prefix + "input_norm", x, eps, probe);
            NodePtr<T> q = matmul(n1, param(prefix + "attn.q_proj"));
            NodePtr<T> k = matmul(n1, param(prefix + "attn.k_proj"));
            NodePtr<T> v = matmul(n1, param(prefix + "attn.v_proj"));
            std::vector<NodePtr<T>> head_outs;
            head_outs.reserve(cfg_.n_heads);
            for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
                NodePtr<T> qh = rope_apply(slice_cols(q, h * hd, hd), base);
                NodePtr<T> kh = rope_apply(slice_cols(k, h * hd, hd), base);
                NodePtr<T> vh = slice_cols(v, h * hd, hd);
                NodePtr<T> scores = scale(matmul(qh, transpose(kh)), attn_scale);
                NodePtr<T> probs = row_softmax(scores, /*causal=*/true);
                head_outs.push_back(matmul(probs, vh));
            }
            NodePtr<T> attn = matmul(concat_cols(head_outs), param(prefix + "attn.o_proj"));
            x = add(x, attn);

            NodePtr<T> n2 = apply_norm(prefix + "post_attn_norm", x, eps, probe);
            NodePtr<T> gate = silu(matmul(n2, param(prefix + "mlp.gate_proj")));
            NodePtr<T> up = matmul(n2, param(prefix + "mlp.up_proj"));
            NodePtr<T> mlp = matmul(mul(gate, up), param(prefix + "mlp.down_proj"));
            x = add(x, mlp);
            if (want_hiddens) out.hiddens.push_back(x);
        }

        NodePtr<T> fn = apply_norm("final_norm", x, eps, probe);
        out.logits = matmul(fn, param("lm_head"));
        return out;
    }

  private:
    NodePtr<T> apply_norm(const std::string& site, const NodePtr<T>& x, T eps,
                          NormProbe* probe) const {
        if (probe) probe->record(site, x->value);
        if (cfg_.norm_kind == NormKind::layer_norm)
            return layer_norm(x, param(site + ".gamma"), param(site + ".beta"), eps);
        return rms_norm(x, param(site + ".theta"), eps);
    }

    ModelConfig cfg_;
    bool trainable_;
    std::map<std::string, NodePtr<T>> leaves_;
};

// Mean next-token cross-entropy of one forward pass against targets.
template <typename T>
NodePtr<T> lm_loss(const DistillOutputs<T>& outputs, std::span<const std::int32_t> targets) {
    return cross_entropy_mean(outputs.logits,
                              std::vector<std::int32_t>(targets.begin(), targets.end()));
}

}  // namespace kept
