#include <catch2/catch_amalgamated.hpp>

#include "kept/gradcheck.hpp"
#include "kept/rng.hpp"

using namespace kept;

namespace {

constexpr double kH = 1e-5;
constexpr double kTol = 1e-6;

Tensor<double> rand_t(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
    return t;
}

// Scalarizes an op output against a fixed random target so the upstream
// gradient is non-uniform.
NodePtr<double> against(const NodePtr<double>& out, Rng& rng) {
    Tensor<double> target(out->value.shape());
    for (std::size_t i = 0; i < target.numel(); ++i) target[i] = rng.normal();
    return l2_mean(out, constant(target));
}

using Builder = std::function<NodePtr<double>(const std::vector<NodePtr<double>>&)>;

// A coordinate whose analytic gradient is tiny but nonzero puts the check at
// the finite-difference noise floor; such points are resampled (exact zeros
// are fine: untouched coordinates difference to exactly zero as well).
bool well_conditioned(const std::vector<NodePtr<double>>& inputs, const Builder& build) {
    for (const auto& in : inputs) zero_grad(in);
    backward(build(inputs));
    for (const auto& in : inputs) {
        if (!in->requires_grad) continue;
        const Tensor<double> g = grad_or_zero(in);
        for (std::size_t i = 0; i < g.numel(); ++i)
            if (g[i] != 0.0 && std::abs(g[i]) < 1e-3) return false;
    }
    return true;
}

void check_op(const char* name, int iters, const std::function<std::vector<NodePtr<double>>(Rng&)>& make_inputs,
              const std::function<Builder(Rng&)>& make_builder) {
    Rng seeder(fnv1a64(name));
    int done = 0, attempts = 0;
    while (done < iters) {
        REQUIRE(++attempts < iters * 20);
        Rng rng(seeder.next_u64());
        auto inputs = make_inputs(rng);
        Builder build = make_builder(rng);
        if (!well_conditioned(inputs, build)) continue;
        const double err = finite_diff_check<double>(inputs, build, kH);
        INFO(name << " iteration " << done);
        CHECK(err <= kTol);
        ++done;
    }
}

}  // namespace

TEST_CASE("gradcheck: matmul") {
    check_op(
        "matmul", 20,
        [](Rng& rng) {
            return std::vector<NodePtr<double>>{leaf(rand_t({3, 4}, rng), true),
                                                leaf(rand_t({4, 2}, rng), true)};
        },
        [](Rng& rng) {
            Rng r2(rng.next_u64());
            return [r2](const std::vector<NodePtr<double>>& in) mutable {
                Rng local = r2;
                return against(matmul(in[0], in[1]), local);
            };
        });
}

TEST_CASE("gradcheck: add, mul, scale") {
    check_op(
        "add_mul_scale", 20,
        [](Rng& rng) {
            return std::vector<NodePtr<double>>{leaf(rand_t({2, 5}, rng), true),
                                                leaf(rand_t({2, 5}, rng), true)};
        },
        [](Rng& rng) {
            Rng r2(rng.next_u64());
            return [r2](const std::vector<NodePtr<double>>& in) mutable {
                Rng local = r2;
                return against(scale(add(mul(in[0], in[1]), in[0]), 0.7), local);
            };
        });
}

TEST_CASE("gradcheck: transpose, reshape, slice, concat") {
    check_op(
        "shape_ops", 20,
        [](Rng& rng) {
            return std::vector<NodePtr<double>>{leaf(rand_t({3, 6}, rng), true),
                                                leaf(rand_t({3, 2}, rng), true)};
        },
        [](Rng& rng) {
            Rng r2(rng.next_u64());
            return [r2](const std::vector<NodePtr<double>>& in) mutable {
                Rng local = r2;
                auto left = slice_cols(in[0], 1, 3);
                auto joined = concat_cols<double>({left, in[1]});
                auto shaped = reshape(transpose(joined), Shape{3, 5});
                return against(shaped, local);
            };
        });
}

TEST_CASE("gradcheck: row_softmax (plain and causal)") {
    check_op(
        "row_softmax", 20,
        [](Rng& rng) {
            return std::vector<NodePtr<double>>{leaf(rand_t({4, 4}, rng, 1.5), true)};
        },
        [](Rng& rng) {
            const bool causal = rng.uniform() < 0.5;
            Rng r2(rng.next_u64());
            return [r2, causal](const std::vector<NodePtr<double>>& in) mutable {
                Rng local = r2;
                return against(row_softmax(in[0], causal), local);
            };
        });
}

TEST_CASE("gradcheck: layer_norm wrt x, gamma, beta") {
    check_op(
        "layer_norm", 20,
        [](Rng& rng) {
            return std::vector<NodePtr<double>>{leaf(rand_t({8}, rng, 2.0), true),
                                                leaf(rand_t({8}, rng), true),
                                                leaf(rand_t({8}, rng), true)};
        },
        [](Rng& rng) {
            Rng r2(rng.next_u64());
            return [r2](const std::vector<NodePtr<double>>& in) mutable {
                Rng local = r2;
                return against(layer_norm(in[0], in[1], in[2], 1e-5), local);
            };
        });
}

TEST_CASE("gradcheck: layer_norm on matrix rows") {
    check_op(
        "layer_norm_rows", 10,
        [](Rng& rng) {
            return std::vector<NodePtr<double>>{leaf(rand_t({4, 8}, rng, 2.0), true),
                                                leaf(rand_t({8}, rng), true),
                                                leaf(rand_t({8}, rng), true)};
        },
        [](Rng& rng) {
            Rng r2(rng.next_u64());
            return [r2](const std::vector<NodePtr<double>>& in) mutable {
                Rng local = r2;
                return against(layer_norm(in[0], in[1], in[2], 1e-5), local);
            };
        });
}

TEST_CASE("gradcheck: rms_norm wrt x and theta") {
    check_op(
        "rms_norm", 20,
        [](Rng& rng) {
            return std::vector<NodePtr<double>>{leaf(rand_t({4, 8}, rng, 2.0), true),
                                                leaf(rand_t({8}, rng), true)};
        },
        [](Rng& rng) {
            Rng r2(rng.next_u64());
            return [r2](const std::vector<NodePtr<double>>& in) mutable {
                Rng local = r2;
                return against(rms_norm(in[0], in[1], 1e-5), local);
            };
        });
}

TEST_CASE("gradcheck: silu") {
    check_op(
        "silu", 20,
        [](Rng& rng) {
            return std::vector<NodePtr<double>>{leaf(rand_t({3, 5}, rng, 2.0), true)};
        },
        [](Rng& rng) {
            Rng r2(rng.next_u64());
            return [r2](const std::vector<NodePtr<double>>& in) mutable {
                Rng local = r2;
                return against(silu(in[0]), local);
            };
        });
}

TEST_CASE("gradcheck: rope_apply") {
    check_op(
        "rope_apply", 20,
        [](Rng& rng) {
            return std::vector<NodePtr<double>>{leaf(rand_t({4, 6}, rng), true)};
        },
        [](Rng& rng) {
            const std::size_t offset = rng.uniform_index(5);
            Rng r2(rng.next_u64());
            return [r2, offset](const std::vector<NodePtr<double>>& in) mutable {
                Rng local = r2;
                return against(rope_apply(in[0], 10000.0, offset), local);
            };
        });
}

TEST_CASE("gradcheck: embedding_gather wrt table") {
    check_op(
        "embedding_gather", 20,
        [](Rng& rng) {
            return std::vector<NodePtr<double>>{leaf(rand_t({7, 5}, rng), true)};
        },
        [](Rng& rng) {
            std::vector<std::int32_t> tokens;
            for (int i = 0; i < 6; ++i)
                tokens.push_back(static_cast<std::int32_t>(rng.uniform_index(7)));
            Rng r2(rng.next_u64());
            return [r2, tokens](const std::vector<NodePtr<double>>& in) mutable {
                Rng local = r2;
                return against(embedding_gather(in[0], tokens), local);
            };
        });
}

TEST_CASE("gradcheck: cross_entropy_mean") {
    check_op(
        "cross_entropy_mean", 20,
        [](Rng& rng) {
            return std::vector<NodePtr<double>>{leaf(rand_t({5, 6}, rng, 1.5), true)};
        },
        [](Rng& rng) {
            std::vector<std::int32_t> targets;
            for (int i = 0; i < 5; ++i)
                targets.push_back(static_cast<std::int32_t>(rng.uniform_index(6)));
            return [targets](const std::vector<NodePtr<double>>& in) {
                return cross_entropy_mean(in[0], targets);
            };
        });
}

TEST_CASE("gradcheck: l2_mean wrt both sides") {
    check_op(
        "l2_mean", 20,
        [](Rng& rng) {
            return std::vector<NodePtr<double>>{leaf(rand_t({4, 3}, rng), true),
                                                leaf(rand_t({4, 3}, rng), true)};
        },
        [](Rng&) {
            return [](const std::vector<NodePtr<double>>& in) { return l2_mean(in[0], in[1]); };
        });
}

TEST_CASE("gradcheck: identity reshape is exact at zero") {
    // sum(reshape(x)) at x = 0 makes the central difference exact.
    auto x = leaf(Tensor<double>(Shape{2, 3}, 0.0), true);
    const double err = finite_diff_check<double>(
        {x},
        [](const std::vector<NodePtr<double>>& in) {
            auto flat = reshape(in[0], Shape{1, 6});
            return matmul(flat, constant(Tensor<double>(Shape{6, 1}, 1.0)));
        },
        kH);
    CHECK(err == 0.0);
}

TEST_CASE("finite_diff_check rejects bad h") {
    auto x = leaf(Tensor<double>(Shape{2}, 1.0), true);
    auto build = [](const std::vector<NodePtr<double>>& in) {
        return l2_mean(in[0], constant(Tensor<double>(Shape{2}, 0.0)));
    };
    CHECK_THROWS_AS(finite_diff_check<double>({x}, build, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(finite_diff_check<double>({x}, build, 0.01), std::invalid_argument);
}
