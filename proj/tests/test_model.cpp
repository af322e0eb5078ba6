#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "kept/gradcheck.hpp"
#include "kept/model.hpp"

using namespace kept;

namespace {

// Small double-precision config for gradient spot checks.
ModelConfig midget(NormKind kind) {
    ModelConfig c;
    c.vocab_size = 11;
    c.hidden_dim = 8;
    c.mlp_dim = 24;
    c.n_heads = 2;
    c.head_dim = 4;
    c.n_layers = 2;
    c.rope_base = 10000.0;
    c.norm_kind = kind;
    c.max_seq_len = 16;
    return c;
}

}  // namespace

TEST_CASE("ModelConfig validation") {
    ModelConfig c = ModelConfig::toy(NormKind::layer_norm);
    CHECK_NOTHROW(c.validate());
    CHECK_NOTHROW(ModelConfig::paper_scale(NormKind::rms_norm).validate());

    ModelConfig bad_heads = c;
    bad_heads.n_heads = 3;
    CHECK_THROWS_AS(bad_heads.validate(), std::invalid_argument);

    ModelConfig bad_mlp = c;
    bad_mlp.mlp_dim = 128;
    CHECK_THROWS_AS(bad_mlp.validate(), std::invalid_argument);
}

TEST_CASE("paper-scale preset carries the production dimensions") {
    const ModelConfig c = ModelConfig::paper_scale(NormKind::rms_norm);
    CHECK(c.vocab_size == 84608);
    CHECK(c.hidden_dim == 5120);
    CHECK(c.mlp_dim == 15360);
    CHECK(c.n_heads == 40);
    CHECK(c.head_dim == 128);
    CHECK(c.n_layers == 40);
    CHECK(c.rope_base == 5e7);
}

TEST_CASE("build_model produces exactly the expected path set") {
    const ModelConfig src = ModelConfig::toy(NormKind::layer_norm);
    const ModelConfig tgt = ModelConfig::toy(NormKind::rms_norm);
    const auto src_store = build_model<float>(src, 0);
    const auto tgt_store = build_model<float>(tgt, 0);

    // 2 head/tail tensors + per layer (7 projections + 2 sites x params) +
    // final-norm params.
    const std::size_t N = src.n_layers;
    CHECK(src_store.size() == 2 + N * (7 + 2 * 2) + 2);
    CHECK(tgt_store.size() == 2 + N * (7 + 2 * 1) + 1);
    CHECK_NOTHROW(validate_store(src_store, src));
    CHECK_NOTHROW(validate_store(tgt_store, tgt));

    for (const auto& site : norm_site_paths(src)) {
        CHECK(src_store.count(site + ".gamma") == 1);
        CHECK(src_store.count(site + ".beta") == 1);
        CHECK(src_store.count(site + ".theta") == 0);
        CHECK(tgt_store.count(site + ".theta") == 1);
        CHECK(tgt_store.count(site + ".gamma") == 0);
    }
}

TEST_CASE("path sets of the two families differ only at norm sites") {
    const ModelConfig src = ModelConfig::toy(NormKind::layer_norm);
    const ModelConfig tgt = ModelConfig::toy(NormKind::rms_norm);
    std::set<std::string> src_paths, tgt_paths;
    for (const auto& p : expected_paths(src)) src_paths.insert(p);
    for (const auto& p : expected_paths(tgt)) tgt_paths.insert(p);
    for (const auto& p : src_paths) {
        if (tgt_paths.count(p)) continue;
        CHECK((p.ends_with(".gamma") || p.ends_with(".beta")));
    }
    for (const auto& p : tgt_paths) {
        if (src_paths.count(p)) continue;
        CHECK(p.ends_with(".theta"));
    }
}

TEST_CASE("build_model is deterministic in the seed") {
    const ModelConfig cfg = ModelConfig::toy(NormKind::layer_norm);
    const auto a = build_model<float>(cfg, 42);
    const auto b = build_model<float>(cfg, 42);
    const auto c = build_model<float>(cfg, 43);
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("initialization: truncated normal weights, unit gammas, zero betas") {
    const ModelConfig cfg = ModelConfig::toy(NormKind::layer_norm);
    const auto store = build_model<float>(cfg, 7);
    for (const auto& [path, t] : store) {
        if (path.ends_with(".gamma")) {
            for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 1.0f);
        } else if (path.ends_with(".beta")) {
            for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.0f);
        } else {
            float mx = 0;
            for (std::size_t i = 0; i < t.numel(); ++i) mx = std::max(mx, std::abs(t[i]));
            CHECK(mx <= 0.04f);  // 2 sigma cut
            CHECK(mx > 0.0f);
        }
    }
}

TEST_CASE("forward shape contract and errors") {
    const ModelConfig cfg = midget(NormKind::rms_norm);
    Model<double> model(cfg, build_model<double>(cfg, 1), false);

    const std::int32_t tok[] = {5};
    auto out = model.forward(tok, true);
    CHECK(out.logits->value.shape() == Shape{1, cfg.vocab_size});
    REQUIRE(out.hiddens.size() == cfg.n_layers + 1);
    for (const auto& h : out.hiddens) CHECK(h->value.shape() == Shape{1, cfg.hidden_dim});

    const std::int32_t bad[] = {5, 11};
    CHECK_THROWS_AS(model.forward(bad, false), std::invalid_argument);
    std::vector<std::int32_t> long_seq(cfg.max_seq_len + 1, 1);
    CHECK_THROWS_AS(model.forward(long_seq, false), std::invalid_argument);
}

TEST_CASE("causal masking: prefix logits ignore suffix tokens") {
    const ModelConfig cfg = midget(NormKind::layer_norm);
    Model<double> model(cfg, build_model<double>(cfg, 3), false);

    const std::vector<std::int32_t> a = {1, 2, 3, 4, 5, 6};
    std::vector<std::int32_t> b = a;
    b[4] = 9;
    b[5] = 0;
    auto out_a = model.forward(a, false);
    auto out_b = model.forward(b, false);
    const std::size_t V = cfg.vocab_size;
    for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t v = 0; v < V; ++v)
            CHECK(out_a.logits->value[j * V + v] == out_b.logits->value[j * V + v]);
}

TEST_CASE("want_hiddens does not change the logits") {
    const ModelConfig cfg = midget(NormKind::rms_norm);
    Model<double> model(cfg, build_model<double>(cfg, 4), false);
    const std::vector<std::int32_t> toks = {0, 3, 7, 2};
    auto with = model.forward(toks, true);
    auto without = model.forward(toks, false);
    CHECK(with.logits->value == without.logits->value);
}

TEST_CASE("doubling rope_base moves multi-position logits but not position 0") {
    ModelConfig cfg = midget(NormKind::rms_norm);
    const auto store = build_model<double>(cfg, 5);
    Model<double> m1(cfg, store, false);
    ModelConfig cfg2 = cfg;
    cfg2.rope_base = cfg.rope_base * 2;
    Model<double> m2(cfg2, store, false);

    const std::int32_t single[] = {4};
    CHECK(m1.forward(single, false).logits->value == m2.forward(single, false).logits->value);

    const std::vector<std::int32_t> multi = {4, 8, 1, 5};
    const auto l1 = m1.forward(multi, false).logits->value;
    const auto l2 = m2.forward(multi, false).logits->value;
    double max_diff = 0;
    for (std::size_t i = 0; i < l1.numel(); ++i)
        max_diff = std::max(max_diff, std::abs(l1[i] - l2[i]));
    CHECK(max_diff > 0.0);
}

TEST_CASE("lm_loss examples") {
    // Uniform logits over V = 4.
    DistillOutputs<double> uniform;
    uniform.logits = constant(Tensor<double>(Shape{2, 4}, 0.0));
    const std::int32_t t1[] = {1, 3};
    CHECK(scalar_value(lm_loss(uniform, t1)) == Catch::Approx(std::log(4.0)).epsilon(1e-12));

    // Large-margin logits at the target drive the loss to ~0.
    Tensor<double> hot(Shape{2, 4}, 0.0);
    hot[0 * 4 + 1] = 50.0;
    hot[1 * 4 + 3] = 50.0;
    DistillOutputs<double> peaked;
    peaked.logits = constant(hot);
    CHECK(scalar_value(lm_loss(peaked, t1)) < 1e-12);

    // Random 2-position case against an independent log-softmax evaluation.
    Rng rng(17);
    Tensor<double> z(Shape{2, 5});
    for (std::size_t i = 0; i < z.numel(); ++i) z[i] = rng.normal();
    const std::int32_t targets[] = {2, 0};
    double expected = 0;
    for (std::size_t j = 0; j < 2; ++j) {
        double mx = z[j * 5];
        for (std::size_t v = 1; v < 5; ++v) mx = std::max(mx, z[j * 5 + v]);
        double denom = 0;
        for (std::size_t v = 0; v < 5; ++v) denom += std::exp(z[j * 5 + v] - mx);
        expected += mx + std::log(denom) - z[j * 5 + targets[j]];
    }
    expected /= 2;
    DistillOutputs<double> random_out;
    random_out.logits = constant(z);
    CHECK(scalar_value(lm_loss(random_out, targets)) == Catch::Approx(expected).epsilon(1e-12));

    const std::int32_t wrong_len[] = {1};
    CHECK_THROWS_AS(lm_loss(uniform, wrong_len), std::invalid_argument);
}

TEST_CASE("lm_loss gradient through the full model (finite differences)") {
    for (NormKind kind : {NormKind::layer_norm, NormKind::rms_norm}) {
        const ModelConfig cfg = midget(kind);
        // Scale the projections up so the attention softmax is away from its
        // uniform plateau; at 0.02-scale init the q/k gradients sit at the
        // finite-difference noise floor.
        auto store = build_model<double>(cfg, 11);
        for (auto& [path, t] : store) {
            if (path.ends_with(".gamma") || path.ends_with(".beta") || path.ends_with(".theta"))
                continue;
            for (std::size_t i = 0; i < t.numel(); ++i) t[i] *= 6.0;
        }
        Model<double> model(cfg, store, true);
        const std::vector<std::int32_t> tokens = {1, 5, 2, 9};
        const std::vector<std::int32_t> targets = {5, 2, 9, 10};

        std::vector<std::string> checked = {
            "embed.tokens",
            "layers.0.attn.q_proj",
            "layers.0.mlp.down_proj",
            kind == NormKind::layer_norm ? "layers.1.input_norm.gamma" : "layers.1.input_norm.theta",
            "lm_head",
        };
        if (kind == NormKind::layer_norm) checked.push_back("layers.0.post_attn_norm.beta");

        for (const auto& path : checked) {
            const double err = finite_diff_check<double>(
                {model.param(path)},
                [&](const std::vector<NodePtr<double>>&) {
                    return lm_loss(model.forward(tokens, false), targets);
                },
                1e-4);
            INFO(path);
            CHECK(err <= 1e-4);
        }
    }
}

TEST_CASE("snapshot round-trips the parameters and hash detects changes") {
    const ModelConfig cfg = midget(NormKind::layer_norm);
    const auto store = build_model<double>(cfg, 2);
    Model<double> model(cfg, store, true);
    CHECK(model.snapshot() == store);

    const std::uint64_t h0 = model.content_hash();
    model.param("lm_head")->value[0] += 1.0;
    CHECK(model.content_hash() != h0);
}
