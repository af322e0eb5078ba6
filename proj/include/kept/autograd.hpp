#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kept/tensor.hpp"

namespace kept {

// Reverse-mode graph over dense tensors. Nodes are built eagerly (the value
// is computed at construction), backward() walks the graph once in reverse
// topological order. Every forward op validates shapes and rejects
// non-finite outputs.

enum class OpKind {
    leaf,
    matmul,
    add,
    mul,
    scale,
    transpose,
    reshape,
    row_softmax,
    embedding_gather,
    layer_norm,
    rms_norm,
    silu,
    rope_apply,
    cross_entropy_mean,
    l2_mean,
    slice,
    concat,
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::leaf: return "leaf";
        case OpKind::matmul: return "matmul";
        case OpKind::add: return "add";
        case OpKind::mul: return "mul";
        case OpKind::scale: return "scale";
        case OpKind::transpose: return "transpose";
        case OpKind::reshape: return "reshape";
        case OpKind::row_softmax: return "row_softmax";
        case OpKind::embedding_gather: return "embedding_gather";
        case OpKind::layer_norm: return "layer_norm";
        case OpKind::rms_norm: return "rms_norm";
        case OpKind::silu: return "silu";
        case OpKind::rope_apply: return "rope_apply";
        case OpKind::cross_entropy_mean: return "cross_entropy_mean";
        case OpKind::l2_mean: return "l2_mean";
        case OpKind::slice: return "slice";
        case OpKind::concat: return "concat";
    }
    return "?";
}

template <typename T>
struct Node;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
struct Node {
    Tensor<T> value;
    OpKind op = OpKind::leaf;
    std::vector<NodePtr<T>> inputs;
    std::optional<Tensor<T>> grad;
    bool requires_grad = false;
    std::string name;  // parameter path for leaves, empty otherwise

    // Accumulates into inputs' grads; reads this->grad. Must not capture
    // shared_ptrs to any node (cycle).
    std::function<void(Node&)> backward_fn;

    Tensor<T>& ensure_grad() {
        if (!grad) grad.emplace(value.shape());
        return *grad;
    }
};

template <typename T>
NodePtr<T> leaf(Tensor<T> value, bool requires_grad = false, std::string name = {}) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->name = std::move(name);
    return n;
}

template <typename T>
NodePtr<T> constant(Tensor<T> value) {
    return leaf(std::move(value), false);
}

namespace detail {

template <typename T>
NodePtr<T> make_node(OpKind op, Tensor<T> value, std::vector<NodePtr<T>> inputs,
                     std::function<void(Node<T>&)> backward_fn) {
    auto n = std::make_shared<Node<T>>();
    n->op = op;
    n->value = std::move(value);
    n->inputs = std::move(inputs);
    n->backward_fn = std::move(backward_fn);
    for (const auto& in : n->inputs)
        if (in->requires_grad) n->requires_grad = true;
    if (!n->value.all_finite())
        throw std::runtime_error(std::string(op_name(op)) + ": non-finite output");
    return n;
}

// c[M x N] += or = a[M x K] * b[K x N]
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t M, std::size_t K, std::size_t N,
          bool accumulate) {
    for (std::size_t m = 0; m < M; ++m) {
        T* crow = c + m * N;
        if (!accumulate)
            for (std::size_t n = 0; n < N; ++n) crow[n] = T{0};
        const T* arow = a + m * K;
        for (std::size_t k = 0; k < K; ++k) {
            const T av = arow[k];
            const T* brow = b + k * N;
            for (std::size_t n = 0; n < N; ++n) crow[n] += av * brow[n];
        }
    }
}

// da[M x K] += dc[M x N] * b[K x N]^T  (row-dot form)
template <typename T>
void gemm_dA(const T* dc, const T* b, T* da, std::size_t M, std::size_t K, std::size_t N) {
    for (std::size_t m = 0; m < M; ++m) {
        const T* dcrow = dc + m * N;
        T* darow = da + m * K;
        for (std::size_t k = 0; k < K; ++k) {
            const T* brow = b + k * N;
            T acc{0};
            for (std::size_t n = 0; n < N; ++n) acc += dcrow[n] * brow[n];
            darow[k] += acc;
        }
    }
}

// db[K x N] += a[M x K]^T * dc[M x N]  (axpy form)
template <typename T>
void gemm_dB(const T* a, const T* dc, T* db, std::size_t M, std::size_t K, std::size_t N) {
    for (std::size_t m = 0; m < M; ++m) {
        const T* arow = a + m * K;
        const T* dcrow = dc + m * N;
        for (std::size_t k = 0; k < K; ++k) {
            const T av = arow[k];
            if (av == T{0}) continue;
            T* dbrow = db + k * N;
            for (std::size_t n = 0; n < N; ++n) dbrow[n] += av * dcrow[n];
        }
    }
}

template <typename T>
void require_rank2(const Tensor<T>& t, const char* op) {
    if (t.rank() != 2) throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
}

template <typename T>
void require_vector_like(const Tensor<T>& t, const char* op) {
    if (t.rank() != 1 && t.rank() != 2)
        throw std::invalid_argument(std::string(op) + ": expected rank-1 or rank-2 tensor, got " + shape_str(t.shape()));
}

}  // namespace detail

template <typename T>
NodePtr<T> matmul(const NodePtr<T>& a, const NodePtr<T>& b) {
    detail::require_rank2(a->value, "matmul");
    detail::require_rank2(b->value, "matmul");
    const std::size_t M = a->value.shape()[0], K = a->value.shape()[1];
    const std::size_t K2 = b->value.shape()[0], N = b->value.shape()[1];
    if (K != K2)
        throw std::invalid_argument("matmul: inner extents differ, " + shape_str(a->value.shape()) +
                                    " vs " + shape_str(b->value.shape()));
    Tensor<T> out(Shape{M, N});
    detail::gemm(a->value.data(), b->value.data(), out.data(), M, K, N, false);
    return detail::make_node<T>(OpKind::matmul, std::move(out), {a, b}, [M, K, N](Node<T>& self) {
        const Tensor<T>& dc = *self.grad;
        auto& a_in = *self.inputs[0];
        auto& b_in = *self.inputs[1];
        if (a_in.requires_grad)
            detail::gemm_dA(dc.data(), b_in.value.data(), a_in.ensure_grad().data(), M, K, N);
        if (b_in.requires_grad)
            detail::gemm_dB(a_in.value.data(), dc.data(), b_in.ensure_grad().data(), M, K, N);
    });
}

template <typename T>
NodePtr<T> add(const NodePtr<T>& a, const NodePtr<T>& b) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument("add: shape mismatch " + shape_str(a->value.shape()) + " vs " +
                                    shape_str(b->value.shape()));
    Tensor<T> out(a->value.shape());
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = a->value[i] + b->value[i];
    return detail::make_node<T>(OpKind::add, std::move(out), {a, b}, [](Node<T>& self) {
        const Tensor<T>& d = *self.grad;
        for (int which = 0; which < 2; ++which) {
            auto& in = *self.inputs[which];
            if (!in.requires_grad) continue;
            Tensor<T>& g = in.ensure_grad();
            for (std::size_t i = 0; i < d.numel(); ++i) g[i] += d[i];
        }
    });
}

template <typename T>
NodePtr<T> mul(const NodePtr<T>& a, const NodePtr<T>& b) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument("mul: shape mismatch " + shape_str(a->value.shape()) + " vs " +
                                    shape_str(b->value.shape()));
    Tensor<T> out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
    return detail::make_node<T>(OpKind::mul, std::move(out), {a, b}, [](Node<T>& self) {
        const Tensor<T>& d = *self.grad;
        auto& a_in = *self.inputs[0];
        auto& b_in = *self.inputs[1];
        if (a_in.requires_grad) {
            Tensor<T>& g = a_in.ensure_grad();
            for (std::size_t i = 0; i < d.numel(); ++i) g[i] += d[i] * b_in.value[i];
        }
        if (b_in.requires_grad) {
            Tensor<T>& g = b_in.ensure_grad();
            for (std::size_t i = 0; i < d.numel(); ++i) g[i] += d[i] * a_in.value[i];
        }
    });
}

template <typename T>
NodePtr<T> scale(const NodePtr<T>& a, T factor) {
    Tensor<T> out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * factor;
    return detail::make_node<T>(OpKind::scale, std::move(out), {a}, [factor](Node<T>& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        const Tensor<T>& d = *self.grad;
        Tensor<T>& g = in.ensure_grad();
        for (std::size_t i = 0; i < d.numel(); ++i) g[i] += d[i] * factor;
    });
}

template <typename T>
NodePtr<T> transpose(const NodePtr<T>& a) {
    detail::require_rank2(a->value, "transpose");
    const std::size_t R = a->value.shape()[0], C = a->value.shape()[1];
    Tensor<T> out(Shape{C, R});
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out[c * R + r] = a->value[r * C + c];
    return detail::make_node<T>(OpKind::transpose, std::move(out), {a}, [R, C](Node<T>& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        const Tensor<T>& d = *self.grad;
        Tensor<T>& g = in.ensure_grad();
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) g[r * C + c] += d[c * R + r];
    });
}

template <typename T>
NodePtr<T> reshape(const NodePtr<T>& a, Shape shape) {
    if (shape_numel(shape) != a->value.numel())
        throw std::invalid_argument("reshape: element count mismatch, " + shape_str(a->value.shape()) +
                                    " to " + shape_str(shape));
    Tensor<T> out(std::move(shape), a->value.vec());
    return detail::make_node<T>(OpKind::reshape, std::move(out), {a}, [](Node<T>& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        const Tensor<T>& d = *self.grad;
        Tensor<T>& g = in.ensure_grad();
        for (std::size_t i = 0; i < d.numel(); ++i) g[i] += d[i];
    });
}

// Row-wise softmax with max subtraction. With causal=true (square input
// only) row j attends to columns 0..j; masked columns get probability 0.
template <typename T>
NodePtr<T> row_softmax(const NodePtr<T>& x, bool causal = false) {
    detail::require_rank2(x->value, "row_softmax");
    const std::size_t R = x->value.shape()[0], C = x->value.shape()[1];
    if (causal && R != C)
        throw std::invalid_argument("row_softmax: causal mask requires a square matrix, got " +
                                    shape_str(x->value.shape()));
    Tensor<T> out(x->value.shape());
    for (std::size_t r = 0; r < R; ++r) {
        const std::size_t limit = causal ? r + 1 : C;
        const T* xi = x->value.data() + r * C;
        T* yi = out.data() + r * C;
        T mx = xi[0];
        for (std::size_t c = 1; c < limit; ++c) mx = std::max(mx, xi[c]);
        T denom{0};
        for (std::size_t c = 0; c < limit; ++c) {
            yi[c] = std::exp(xi[c] - mx);
            denom += yi[c];
        }
        for (std::size_t c = 0; c < limit; ++c) yi[c] /= denom;
        for (std::size_t c = limit; c < C; ++c) yi[c] = T{0};
    }
    return detail::make_node<T>(OpKind::row_softmax, std::move(out), {x}, [R, C](Node<T>& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        const Tensor<T>& d = *self.grad;
        const Tensor<T>& y = self.value;
        Tensor<T>& g = in.ensure_grad();
        for (std::size_t r = 0; r < R; ++r) {
            const T* yr = y.data() + r * C;
            const T* dr = d.data() + r * C;
            T dot{0};
            for (std::size_t c = 0; c < C; ++c) dot += dr[c] * yr[c];
            T* gr = g.data() + r * C;
            for (std::size_t c = 0; c < C; ++c) gr[c] += yr[c] * (dr[c] - dot);
        }
    });
}

template <typename T>
NodePtr<T> embedding_gather(const NodePtr<T>& table, std::vector<std::int32_t> tokens) {
    detail::require_rank2(table->value, "embedding_gather");
    const std::size_t V = table->value.shape()[0], D = table->value.shape()[1];
    if (tokens.empty()) throw std::invalid_argument("embedding_gather: empty token sequence");
    for (std::int32_t t : tokens)
        if (t < 0 || static_cast<std::size_t>(t) >= V)
            throw std::invalid_argument("embedding_gather: token " + std::to_string(t) +
                                        " out of vocabulary (V=" + std::to_string(V) + ")");
    const std::size_t L = tokens.size();
    Tensor<T> out(Shape{L, D});
    for (std::size_t j = 0; j < L; ++j) {
        const T* src = table->value.data() + static_cast<std::size_t>(tokens[j]) * D;
        std::copy(src, src + D, out.data() + j * D);
    }
    return detail::make_node<T>(OpKind::embedding_gather, std::move(out), {table},
                                [tokens = std::move(tokens), D](Node<T>& self) {
                                    auto& in = *self.inputs[0];
                                    if (!in.requires_grad) return;
                                    const Tensor<T>& d = *self.grad;
                                    Tensor<T>& g = in.ensure_grad();
                                    for (std::size_t j = 0; j < tokens.size(); ++j) {
                                        T* dst = g.data() + static_cast<std::size_t>(tokens[j]) * D;
                                        const T* src = d.data() + j * D;
                                        for (std::size_t i = 0; i < D; ++i) dst[i] += src[i];
                                    }
                                });
}

namespace detail {

template <typename T>
void check_norm_args(const Tensor<T>& x, const Tensor<T>& w, T eps, const char* op) {
    require_vector_like(x, op);
    if (w.rank() != 1)
        throw std::invalid_argument(std::string(op) + ": weight must be rank-1, got " + shape_str(w.shape()));
    if (x.cols() != w.numel())
        throw std::invalid_argument(std::string(op) + ": length mismatch, input " + shape_str(x.shape()) +
                                    " vs weight " + shape_str(w.shape()));
    if (!(eps > T{0})) throw std::invalid_argument(std::string(op) + ": eps must be positive");
    if (!x.all_finite()) throw std::invalid_argument(std::string(op) + ": non-finite input");
}

}  // namespace detail

// y_i = (x_i - mu) / sqrt(sigma^2 + eps) * gamma_i + beta_i, per row.
template <typename T>
NodePtr<T> layer_norm(const NodePtr<T>& x, const NodePtr<T>& gamma, const NodePtr<T>& beta, T eps) {
    detail::check_norm_args(x->value, gamma->value, eps, "layer_norm");
    if (!beta->value.same_shape(gamma->value))
        throw std::invalid_argument("layer_norm: gamma/beta length mismatch");
    const std::size_t R = x->value.rows(), n = x->value.cols();
    Tensor<T> out(x->value.shape());
    for (std::size_t r = 0; r < R; ++r) {
        const T* xr = x->value.data() + r * n;
        T* yr = out.data() + r * n;
        const ActivationStats st = activation_stats(xr, n, static_cast<double>(eps));
        const T inv = static_cast<T>(1.0 / st.std);
        const T mu = static_cast<T>(st.mean);
        for (std::size_t i = 0; i < n; ++i)
            yr[i] = (xr[i] - mu) * inv * gamma->value[i] + beta->value[i];
    }
    return detail::make_node<T>(OpKind::layer_norm, std::move(out), {x, gamma, beta},
                                [R, n, eps](Node<T>& self) {
        const Tensor<T>& d = *self.grad;
        auto& x_in = *self.inputs[0];
        auto& gamma_in = *self.inputs[1];
        auto& beta_in = *self.inputs[2];
        std::vector<T> xhat(n);
        for (std::size_t r = 0; r < R; ++r) {
            const T* xr = x_in.value.data() + r * n;
            const T* dr = d.data() + r * n;
            const ActivationStats st = activation_stats(xr, n, static_cast<double>(eps));
            const T inv = static_cast<T>(1.0 / st.std);
            const T mu = static_cast<T>(st.mean);
            for (std::size_t i = 0; i < n; ++i) xhat[i] = (xr[i] - mu) * inv;
            if (gamma_in.requires_grad) {
                Tensor<T>& gg = gamma_in.ensure_grad();
                for (std::size_t i = 0; i < n; ++i) gg[i] += dr[i] * xhat[i];
            }
            if (beta_in.requires_grad) {
                Tensor<T>& gb = beta_in.ensure_grad();
                for (std::size_t i = 0; i < n; ++i) gb[i] += dr[i];
            }
            if (x_in.requires_grad) {
                Tensor<T>& gx = x_in.ensure_grad();
                T mean_g{0}, mean_gx{0};
                for (std::size_t i = 0; i < n; ++i) {
                    const T gi = dr[i] * gamma_in.value[i];
                    mean_g += gi;
                    mean_gx += gi * xhat[i];
                }
                mean_g /= static_cast<T>(n);
                mean_gx /= static_cast<T>(n);
                T* gxr = gx.data() + r * n;
                for (std::size_t i = 0; i < n; ++i) {
                    const T gi = dr[i] * gamma_in.value[i];
                    gxr[i] += (gi - mean_g - xhat[i] * mean_gx) * inv;
                }
            }
        }
    });
}

// y_i = x_i / sqrt(mean(x^2) + eps) * theta_i, per row.
template <typename T>
NodePtr<T> rms_norm(const NodePtr<T>& x, const NodePtr<T>& theta, T eps) {
    detail::check_norm_args(x->value, theta->value, eps, "rms_norm");
    const std::size_t R = x->value.rows(), n = x->value.cols();
    Tensor<T> out(x->value.shape());
    for (std::size_t r = 0; r < R; ++r) {
        const T* xr = x->value.data() + r * n;
        T* yr = out.data() + r * n;
        const ActivationStats st = activation_stats(xr, n, static_cast<double>(eps));
        const T inv = static_cast<T>(1.0 / st.rms);
        for (std::size_t i = 0; i < n; ++i) yr[i] = xr[i] * inv * theta->value[i];
    }
    return detail::make_node<T>(OpKind::rms_norm, std::move(out), {x, theta},
                                [R, n, eps](Node<T>& self) {
        const Tensor<T>& d = *self.grad;
        auto& x_in = *self.inputs[0];
        auto& theta_in = *self.inputs[1];
        for (std::size_t r = 0; r < R; ++r) {
            const T* xr = x_in.value.data() + r * n;
            const T* dr = d.data() + r * n;
            const ActivationStats st = activation_stats(xr, n, static_cast<double>(eps));
            const T inv = static_cast<T>(1.0 / st.rms);
            if (theta_in.requires_grad) {
                Tensor<T>& gt = theta_in.ensure_grad();
                for (std::size_t i = 0; i < n; ++i) gt[i] += dr[i] * xr[i] * inv;
            }
            if (x_in.requires_grad) {
                T dot{0};
                for (std::size_t i = 0; i < n; ++i) dot += dr[i] * theta_in.value[i] * xr[i];
                const T inv3_over_n = inv * inv * inv / static_cast<T>(n);
                Tensor<T>& gx = x_in.ensure_grad();
                T* gxr = gx.data() + r * n;
                for (std::size_t i = 0; i < n; ++i)
                    gxr[i] += dr[i] * theta_in.value[i] * inv - xr[i] * dot * inv3_over_n;
            }
        }
    });
}

template <typename T>
NodePtr<T> silu(const NodePtr<T>& x) {
    Tensor<T> out(x->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const T v = x->value[i];
        out[i] = v / (T{1} + std::exp(-v));
    }
    return detail::make_node<T>(OpKind::silu, std::move(out), {x}, [](Node<T>& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        const Tensor<T>& d = *self.grad;
        Tensor<T>& g = in.ensure_grad();
        for (std::size_t i = 0; i < d.numel(); ++i) {
            const T v = in.value[i];
            const T s = T{1} / (T{1} + std::exp(-v));
            g[i] += d[i] * (s + v * s * (T{1} - s));
        }
    });
}

// Rotates consecutive pairs (x_{2k}, x_{2k+1}) of row m by
// (m + position_offset) * base^(-2k / head_dim). Position 0 is identity.
template <typename T>
NodePtr<T> rope_apply(const NodePtr<T>& x, T base, std::size_t position_offset = 0) {
    detail::require_rank2(x->value, "rope_apply");
    const std::size_t P = x->value.shape()[0], H = x->value.shape()[1];
    if (H % 2 != 0)
        throw std::invalid_argument("rope_apply: head_dim must be even, got " + std::to_string(H));
    if (!(base > T{1})) throw std::invalid_argument("rope_apply: base must exceed 1");
    std::vector<double> freqs(H / 2);
    for (std::size_t k = 0; k < H / 2; ++k)
        freqs[k] = std::pow(static_cast<double>(base),
                            -2.0 * static_cast<double>(k) / static_cast<double>(H));
    Tensor<T> out(x->value.shape());
    for (std::size_t m = 0; m < P; ++m) {
        const T* xr = x->value.data() + m * H;
        T* yr = out.data() + m * H;
        const double pos = static_cast<double>(m + position_offset);
        for (std::size_t k = 0; k < H / 2; ++k) {
            const double angle = pos * freqs[k];
            const T c = static_cast<T>(std::cos(angle));
            const T s = static_cast<T>(std::sin(angle));
            const T x0 = xr[2 * k], x1 = xr[2 * k + 1];
            yr[2 * k] = x0 * c - x1 * s;
            yr[2 * k + 1] = x0 * s + x1 * c;
        }
    }
    return detail::make_node<T>(OpKind::rope_apply, std::move(out), {x},
                                [P, H, position_offset, freqs = std::move(freqs)](Node<T>& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        const Tensor<T>& d = *self.grad;
        Tensor<T>& g = in.ensure_grad();
        for (std::size_t m = 0; m < P; ++m) {
            const T* dr = d.data() + m * H;
            T* gr = g.data() + m * H;
            const double pos = static_cast<double>(m + position_offset);
            for (std::size_t k = 0; k < H / 2; ++k) {
                const double angle = pos * freqs[k];
                const T c = static_cast<T>(std::cos(angle));
                const T s = static_cast<T>(std::sin(angle));
                const T d0 = dr[2 * k], d1 = dr[2 * k + 1];
                gr[2 * k] += d0 * c + d1 * s;  // inverse rotation
                gr[2 * k + 1] += -d0 * s + d1 * c;
            }
        }
    });
}

// Mean over positions of -log softmax(z_j)[target_j]; fused log-softmax.
template <typename T>
NodePtr<T> cross_entropy_mean(const NodePtr<T>& logits, std::vector<std::int32_t> targets) {
    detail::require_rank2(logits->value, "cross_entropy_mean");
    const std::size_t L = logits->value.shape()[0], V = logits->value.shape()[1];
    if (targets.size() != L)
        throw std::invalid_argument("cross_entropy_mean: target length " + std::to_string(targets.size()) +
                                    " does not match logits rows " + std::to_string(L));
    for (std::int32_t t : targets)
        if (t < 0 || static_cast<std::size_t>(t) >= V)
            throw std::invalid_argument("cross_entropy_mean: target " + std::to_string(t) + " out of range");
    // Save softmax probabilities for the backward pass.
    Tensor<T> probs(logits->value.shape());
    double total = 0.0;
    for (std::size_t j = 0; j < L; ++j) {
        const T* zr = logits->value.data() + j * V;
        T* pr = probs.data() + j * V;
        T mx = zr[0];
        for (std::size_t v = 1; v < V; ++v) mx = std::max(mx, zr[v]);
        double denom = 0.0;
        for (std::size_t v = 0; v < V; ++v) {
            pr[v] = std::exp(zr[v] - mx);
            denom += static_cast<double>(pr[v]);
        }
        const T inv = static_cast<T>(1.0 / denom);
        for (std::size_t v = 0; v < V; ++v) pr[v] *= inv;
        const double lse = static_cast<double>(mx) + std::log(denom);
        total += lse - static_cast<double>(zr[static_cast<std::size_t>(targets[j])]);
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(L)));
    return detail::make_node<T>(OpKind::cross_entropy_mean, std::move(out), {logits},
                                [probs = std::move(probs), targets = std::move(targets), L, V](Node<T>& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        const T gscale = (*self.grad)[0] / static_cast<T>(L);
        Tensor<T>& g = in.ensure_grad();
        for (std::size_t j = 0; j < L; ++j) {
            const T* pr = probs.data() + j * V;
            T* gr = g.data() + j * V;
            for (std::size_t v = 0; v < V; ++v) gr[v] += pr[v] * gscale;
            gr[static_cast<std::size_t>(targets[j])] -= gscale;
        }
    });
}

// Mean over rows of the squared L2 distance between a and b.
template <typename T>
NodePtr<T> l2_mean(const NodePtr<T>& a, const NodePtr<T>& b) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument("l2_mean: shape mismatch " + shape_str(a->value.shape()) + " vs " +
                                    shape_str(b->value.shape()));
    detail::require_vector_like(a->value, "l2_mean");
    const std::size_t R = a->value.rows();
    double total = 0.0;
    for (std::size_t i = 0; i < a->value.numel(); ++i) {
        const double diff = static_cast<double>(a->value[i]) - static_cast<double>(b->value[i]);
        total += diff * diff;
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(R)));
    return detail::make_node<T>(OpKind::l2_mean, std::move(out), {a, b}, [R](Node<T>& self) {
        const T gscale = (*self.grad)[0] * T{2} / static_cast<T>(R);
        auto& a_in = *self.inputs[0];
        auto& b_in = *self.inputs[1];
        if (a_in.requires_grad) {
            Tensor<T>& g = a_in.ensure_grad();
            for (std::size_t i = 0; i < g.numel(); ++i)
                g[i] += gscale * (a_in.value[i] - b_in.value[i]);
        }
        if (b_in.requires_grad) {
            Tensor<T>& g = b_in.ensure_grad();
            for (std::size_t i = 0; i < g.numel(); ++i)
                g[i] -= gscale * (a_in.value[i] - b_in.value[i]);
        }
    });
}

template <typename T>
NodePtr<T> slice_cols(const NodePtr<T>& x, std::size_t begin, std::size_t len) {
    detail::require_rank2(x->value, "slice");
    const std::size_t R = x->value.shape()[0], C = x->value.shape()[1];
    if (len == 0 || begin + len > C)
        throw std::invalid_argument("slice: range [" + std::to_string(begin) + ", " +
                                    std::to_string(begin + len) + ") out of " + std::to_string(C) + " columns");
    Tensor<T> out(Shape{R, len});
    for (std::size_t r = 0; r < R; ++r)
        std::copy(x->value.data() + r * C + begin, x->value.data() + r * C + begin + len,
                  out.data() + r * len);
    return detail::make_node<T>(OpKind::slice, std::move(out), {x}, [R, C, begin, len](Node<T>& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        const Tensor<T>& d = *self.grad;
        Tensor<T>& g = in.ensure_grad();
        for (std::size_t r = 0; r < R; ++r) {
            const T* dr = d.data() + r * len;
            T* gr = g.data() + r * C + begin;
            for (std::size_t i = 0; i < len; ++i) gr[i] += dr[i];
        }
    });
}

template <typename T>
NodePtr<T> concat_cols(const std::vector<NodePtr<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const std::size_t R = parts[0]->value.rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        detail::require_rank2(p->value, "concat");
        if (p->value.shape()[0] != R) throw std::invalid_argument("concat: row count mismatch");
        total += p->value.shape()[1];
    }
    Tensor<T> out(Shape{R, total});
    std::vector<std::size_t> offsets(parts.size());
    std::size_t off = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        offsets[i] = off;
        const std::size_t c = parts[i]->value.shape()[1];
        for (std::size_t r = 0; r < R; ++r)
            std::copy(parts[i]->value.data() + r * c, parts[i]->value.data() + (r + 1) * c,
                      out.data() + r * total + off);
        off += c;
    }
    return detail::make_node<T>(OpKind::concat, std::move(out), parts,
                                [R, total, offsets = std::move(offsets)](Node<T>& self) {
        const Tensor<T>& d = *self.grad;
        for (std::size_t i = 0; i < self.inputs.size(); ++i) {
            auto& in = *self.inputs[i];
            if (!in.requires_grad) continue;
            const std::size_t c = in.value.shape()[1];
            Tensor<T>& g = in.ensure_grad();
            for (std::size_t r = 0; r < R; ++r) {
                const T* dr = d.data() + r * total + offsets[i];
                T* gr = g.data() + r * c;
                for (std::size_t j = 0; j < c; ++j) gr[j] += dr[j];
            }
        }
    });
}

// Reverse-mode sweep from a scalar loss. Visits each reachable node exactly
// once in reverse topological order; only subgraphs that require grad are
// traversed. Leaves keep their accumulated grads afterwards.
template <typename T>
void backward(const NodePtr<T>& loss) {
    if (loss->value.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss->value.shape()));
    if (!loss->requires_grad) return;  // nothing trainable below

    // Iterative post-order DFS.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            Node<T>* next = node->inputs[idx++].get();
            if (next->requires_grad && !visited.count(next)) {
                visited.insert(next);
                stack.emplace_back(next, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->ensure_grad()[0] = T{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->op == OpKind::leaf || !node->grad) continue;
        node->backward_fn(*node);
    }
    for (Node<T>* node : order) {
        if (node->grad && !node->grad->all_finite())
            throw std::runtime_error(std::string("backward: non-finite gradient at ") + op_name(node->op));
    }
}

template <typename T>
Tensor<T> grad_or_zero(const NodePtr<T>& node) {
    if (node->grad) return *node->grad;
    return Tensor<T>(node->value.shape());
}

template <typename T>
T scalar_value(const NodePtr<T>& node) {
    if (node->value.numel() != 1)
        throw std::invalid_argument("scalar_value: tensor is not scalar");
    return node->value[0];
}

template <typename T>
void zero_grad(const NodePtr<T>& node) {
    node->grad.reset();
}

}  // namespace kept
