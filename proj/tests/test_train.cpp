#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "kept/gradcheck.hpp"
#include "kept/mapping.hpp"
#include "kept/train.hpp"

using namespace kept;

namespace {

ModelConfig midget(NormKind kind) {
    ModelConfig c;
    c.vocab_size = 256;
    c.hidden_dim = 16;
    c.mlp_dim = 48;
    c.n_heads = 2;
    c.head_dim = 8;
    c.n_layers = 2;
    c.rope_base = 1e5;
    c.norm_kind = kind;
    c.max_seq_len = 64;
    return c;
}

PackedDataset tiny_corpus(std::size_t seq_len) {
    return pack_documents({make_probe_corpora(3).text.substr(0, 6000)}, seq_len, 256, "unit");
}

}  // namespace

TEST_CASE("cosine_lr endpoints and shape") {
    TrainConfig cfg = TrainConfig::toy_preset(Objective::pretrain);
    cfg.lr = 1.0;
    cfg.warmup_steps = 100;
    cfg.total_steps = 1000;

    CHECK(cosine_lr(0, cfg) == 0.0);
    CHECK(cosine_lr(100, cfg) == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(cosine_lr(1000, cfg) == Catch::Approx(0.0).margin(1e-15));
    CHECK(cosine_lr(550, cfg) == Catch::Approx(0.5).epsilon(1e-12));  // decay midpoint
    CHECK_THROWS_AS(cosine_lr(1001, cfg), std::invalid_argument);

    // Non-decreasing through warmup, non-increasing after.
    for (std::size_t s = 1; s <= 100; ++s) CHECK(cosine_lr(s, cfg) >= cosine_lr(s - 1, cfg));
    for (std::size_t s = 101; s <= 1000; ++s) CHECK(cosine_lr(s, cfg) <= cosine_lr(s - 1, cfg));
}

TEST_CASE("adamw: pure decoupled decay when gradients vanish") {
    TrainConfig cfg = TrainConfig::toy_preset(Objective::pretrain);
    cfg.weight_decay = 0.1;
    std::map<std::string, NodePtr<double>> params;
    params.emplace("p", leaf(Tensor<double>(Shape{3}, {1.0, -2.0, 0.5}), true));
    std::map<std::string, Tensor<double>> grads;
    grads.emplace("p", Tensor<double>(Shape{3}, 0.0));
    OptimizerState<double> state;
    adamw_step(params, grads, state, 0.01, cfg);
    CHECK(params.at("p")->value[0] == Catch::Approx(1.0 * (1 - 0.001)).epsilon(1e-12));
    CHECK(params.at("p")->value[1] == Catch::Approx(-2.0 * (1 - 0.001)).epsilon(1e-12));
    CHECK(params.at("p")->value[2] == Catch::Approx(0.5 * (1 - 0.001)).epsilon(1e-12));
}

TEST_CASE("adamw: first step is approximately a sign step") {
    TrainConfig cfg = TrainConfig::toy_preset(Objective::pretrain);
    cfg.weight_decay = 0.0;
    std::map<std::string, NodePtr<double>> params;
    params.emplace("p", leaf(Tensor<double>(Shape{2}, {3.0, -1.0}), true));
    std::map<std::string, Tensor<double>> grads;
    grads.emplace("p", Tensor<double>(Shape{2}, {0.25, -4.0}));
    OptimizerState<double> state;
    adamw_step(params, grads, state, 0.01, cfg);
    CHECK(params.at("p")->value[0] == Catch::Approx(3.0 - 0.01).epsilon(1e-6));
    CHECK(params.at("p")->value[1] == Catch::Approx(-1.0 + 0.01).epsilon(1e-6));
}

TEST_CASE("adamw matches an independent reference on a 1-D quadratic") {
    // Reference implementation maintained separately from the library path.
    TrainConfig cfg = TrainConfig::toy_preset(Objective::pretrain);
    cfg.weight_decay = 0.05;
    cfg.beta1 = 0.9;
    cfg.beta2 = 0.95;
    const double lr = 0.1;

    double ref_p = 2.0, ref_m = 0.0, ref_v = 0.0;
    std::map<std::string, NodePtr<double>> params;
    params.emplace("p", leaf(Tensor<double>::scalar(2.0), true));
    OptimizerState<double> state;

    for (int t = 1; t <= 2; ++t) {
        // loss = (p - 1)^2 -> grad = 2 (p - 1), evaluated at the current p.
        const double g_ref = 2.0 * (ref_p - 1.0);
        ref_m = 0.9 * ref_m + 0.1 * g_ref;
        ref_v = 0.95 * ref_v + 0.05 * g_ref * g_ref;
        const double m_hat = ref_m / (1.0 - std::pow(0.9, t));
        const double v_hat = ref_v / (1.0 - std::pow(0.95, t));
        ref_p -= lr * (m_hat / (std::sqrt(v_hat) + 1e-8) + 0.05 * ref_p);

        const double g = 2.0 * (params.at("p")->value[0] - 1.0);
        std::map<std::string, Tensor<double>> grads;
        grads.emplace("p", Tensor<double>::scalar(g));
        adamw_step(params, grads, state, lr, cfg);
        CHECK(params.at("p")->value[0] == Catch::Approx(ref_p).margin(1e-10));
    }
}

TEST_CASE("adamw rejects mismatched or non-finite gradients") {
    TrainConfig cfg = TrainConfig::toy_preset(Objective::pretrain);
    std::map<std::string, NodePtr<double>> params;
    params.emplace("p", leaf(Tensor<double>(Shape{2}, 1.0), true));
    OptimizerState<double> state;

    std::map<std::string, Tensor<double>> missing;
    CHECK_THROWS_AS(adamw_step(params, missing, state, 0.01, cfg), std::invalid_argument);

    std::map<std::string, Tensor<double>> wrong_shape;
    wrong_shape.emplace("p", Tensor<double>(Shape{3}, 0.0));
    CHECK_THROWS_AS(adamw_step(params, wrong_shape, state, 0.01, cfg), std::invalid_argument);

    std::map<std::string, Tensor<double>> bad;
    Tensor<double> g(Shape{2}, 0.0);
    g[1] = std::numeric_limits<double>::quiet_NaN();
    bad.emplace("p", g);
    CHECK_THROWS_AS(adamw_step(params, bad, state, 0.01, cfg), std::runtime_error);
}

TEST_CASE("loss_hidden: exact cases and slot mismatch") {
    DistillOutputs<double> teacher, student;
    teacher.hiddens = {constant(Tensor<double>(Shape{1, 2}, 0.0)),
                       constant(Tensor<double>(Shape{1, 2}, 0.0))};
    student.hiddens = {constant(Tensor<double>(Shape{1, 2}, {1.0, 0.0})),
                       constant(Tensor<double>(Shape{1, 2}, {0.0, 2.0}))};
    CHECK(scalar_value(loss_hidden(teacher, student)) == Catch::Approx(2.5).epsilon(1e-12));

    DistillOutputs<double> same;
    same.hiddens = student.hiddens;
    CHECK(scalar_value(loss_hidden(same, student)) == 0.0);

    DistillOutputs<double> short_out;
    short_out.hiddens = {student.hiddens[0]};
    CHECK_THROWS_AS(loss_hidden(teacher, short_out), std::invalid_argument);
    DistillOutputs<double> empty;
    CHECK_THROWS_AS(loss_hidden(empty, student), std::invalid_argument);
}

TEST_CASE("loss_hidden matches an independent formula evaluation") {
    Rng rng(5);
    const std::size_t L = 3, d = 4, slots = 3;
    DistillOutputs<double> teacher, student;
    double expected = 0.0;
    for (std::size_t s = 0; s < slots; ++s) {
        Tensor<double> h(Shape{L, d}), hs(Shape{L, d});
        for (std::size_t i = 0; i < L * d; ++i) {
            h[i] = rng.normal();
            hs[i] = rng.normal();
            expected += (h[i] - hs[i]) * (h[i] - hs[i]);
        }
        teacher.hiddens.push_back(constant(h));
        student.hiddens.push_back(constant(hs));
    }
    expected /= static_cast<double>(L * slots);
    CHECK(scalar_value(loss_hidden(teacher, student)) == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("loss_logits: exact cases and independent formula") {
    DistillOutputs<double> teacher, student;
    teacher.logits = constant(Tensor<double>(Shape{1, 2}, {1.0, 2.0}));
    student.logits = constant(Tensor<double>(Shape{1, 2}, {0.0, 0.0}));
    CHECK(scalar_value(loss_logits(teacher, student)) == Catch::Approx(5.0).epsilon(1e-12));

    DistillOutputs<double> same;
    same.logits = teacher.logits;
    CHECK(scalar_value(loss_logits(teacher, same)) == 0.0);

    Rng rng(6);
    Tensor<double> a(Shape{2, 5}), b(Shape{2, 5});
    double expected = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        a[i] = rng.normal();
        b[i] = rng.normal();
        expected += (a[i] - b[i]) * (a[i] - b[i]);
    }
    expected /= 2.0;
    DistillOutputs<double> ta, sb;
    ta.logits = constant(a);
    sb.logits = constant(b);
    CHECK(scalar_value(loss_logits(ta, sb)) == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("distillation losses are differentiable w.r.t. the student only") {
    const ModelConfig cfg = midget(NormKind::layer_norm);
    Model<double> teacher(cfg, build_model<double>(cfg, 1), false);
    Model<double> student(cfg, build_model<double>(cfg, 2), true);
    const std::vector<std::int32_t> toks = {10, 20, 30, 40};

    const auto t_out = teacher.forward(toks, true);
    const auto s_out = student.forward(toks, true);
    backward(loss_hidden(t_out, s_out));

    CHECK(!teacher.param("embed.tokens")->grad.has_value());
    CHECK(student.param("embed.tokens")->grad.has_value());
}

TEST_CASE("distillation loss gradients pass finite differences through a 2-layer model") {
    const ModelConfig cfg = midget(NormKind::layer_norm);
    ModelConfig tcfg = cfg;
    tcfg.norm_kind = NormKind::rms_norm;
    Model<double> teacher(cfg, build_model<double>(cfg, 1), false);
    Model<double> student(tcfg, build_model<double>(tcfg, 2), true);
    const std::vector<std::int32_t> toks = {5, 9, 2};

    for (const bool hidden : {true, false}) {
        for (const char* path : {"layers.0.attn.v_proj", "final_norm.theta"}) {
            const double err = finite_diff_check<double>(
                {student.param(path)},
                [&](const std::vector<NodePtr<double>>&) {
                    const auto t_out = teacher.forward(toks, hidden);
                    const auto s_out = student.forward(toks, hidden);
                    return hidden ? loss_hidden(t_out, s_out) : loss_logits(t_out, s_out);
                },
                1e-4);
            INFO((hidden ? "hidden" : "logits") << " wrt " << path);
            CHECK(err <= 1e-4);
        }
    }
}

TEST_CASE("xkd fixed point: student equal to teacher stays put") {
    const ModelConfig cfg = midget(NormKind::layer_norm);
    const auto store = build_model<float>(cfg, 4);
    Model<float> teacher(cfg, store, false);
    Model<float> student(cfg, store, true);

    PackedDataset data = tiny_corpus(32);
    TrainConfig tc = TrainConfig::toy_preset(Objective::xkd_logits);
    tc.total_steps = 5;
    tc.warmup_steps = 2;
    tc.seq_len = 32;
    tc.weight_decay = 0.0;

    const auto result = xkd_loop(teacher, student, data, tc);
    for (const auto& row : result.metrics) CHECK(row.loss == 0.0);
    CHECK(student.snapshot() == store);
}

TEST_CASE("train_loop: zero steps leaves the student unchanged") {
    const ModelConfig cfg = midget(NormKind::rms_norm);
    const auto store = build_model<float>(cfg, 8);
    Model<float> student(cfg, store, true);
    PackedDataset data = tiny_corpus(32);
    TrainConfig tc = TrainConfig::toy_preset(Objective::uptrain);
    tc.total_steps = 0;
    tc.warmup_steps = 0;
    tc.seq_len = 32;
    const auto result = ut_loop(student, data, tc);
    CHECK(result.metrics.empty());
    CHECK(student.snapshot() == store);
}

TEST_CASE("training decreases the pretraining loss and is seed-deterministic") {
    const ModelConfig cfg = midget(NormKind::layer_norm);
    PackedDataset data = tiny_corpus(32);
    TrainConfig tc = TrainConfig::toy_preset(Objective::pretrain);
    tc.total_steps = 60;
    tc.warmup_steps = 10;
    tc.seq_len = 32;
    tc.lr = 1e-3;
    tc.eval_every = 30;

    auto run = [&]() {
        Model<float> model(cfg, build_model<float>(cfg, 12), true);
        return pretrain_loop(model, data, tc, &data);
    };
    const auto r1 = run();
    const auto r2 = run();

    REQUIRE(r1.metrics.size() == 60);
    CHECK(r1.metrics.back().loss < r1.metrics.front().loss);
    CHECK(r1.metrics[29].eval_loss.has_value());
    CHECK(!r1.metrics[28].eval_loss.has_value());

    for (std::size_t i = 0; i < 60; ++i) {
        CHECK(r1.metrics[i].loss == r2.metrics[i].loss);
        CHECK(r1.metrics[i].lr == r2.metrics[i].lr);
        CHECK(r1.metrics[i].tokens_seen == r2.metrics[i].tokens_seen);
    }
}

TEST_CASE("xkd_loop leaves the teacher bitwise unchanged and fills agreement columns") {
    const ModelConfig src = midget(NormKind::layer_norm);
    ModelConfig tgt = src;
    tgt.norm_kind = NormKind::rms_norm;
    const auto teacher_store = build_model<float>(src, 21);
    const auto [student_store, rep] =
        convert_store(teacher_store, build_mapping_plan(src, tgt), tgt);

    Model<float> teacher(src, teacher_store, false);
    Model<float> student(tgt, student_store, true);
    const std::uint64_t h0 = teacher.content_hash();

    PackedDataset data = tiny_corpus(32);
    PackedDataset eval_ds = data.slice_sequences(data.n_sequences - 4, 4);
    TrainConfig tc = TrainConfig::toy_preset(Objective::xkd_logits);
    tc.total_steps = 20;
    tc.warmup_steps = 5;
    tc.seq_len = 32;
    tc.eval_every = 10;

    const auto result = xkd_loop(teacher, student, data, tc, &eval_ds);
    CHECK(teacher.content_hash() == h0);
    CHECK(result.metrics[9].top1_agreement.has_value());
    CHECK(result.metrics[9].mean_kl.has_value());
    CHECK(!result.metrics[8].top1_agreement.has_value());
}

TEST_CASE("train_loop argument validation") {
    const ModelConfig cfg = midget(NormKind::rms_norm);
    Model<float> student(cfg, build_model<float>(cfg, 1), true);
    Model<float> frozen(cfg, build_model<float>(cfg, 2), false);
    Model<float> trainable_teacher(cfg, build_model<float>(cfg, 3), true);
    PackedDataset data = tiny_corpus(32);

    TrainConfig xkd = TrainConfig::toy_preset(Objective::xkd_logits);
    xkd.seq_len = 32;
    xkd.total_steps = 1;
    xkd.warmup_steps = 0;
    CHECK_THROWS_AS(train_loop<float>(nullptr, student, data, xkd), std::invalid_argument);
    CHECK_THROWS_AS(train_loop<float>(&trainable_teacher, student, data, xkd),
                    std::invalid_argument);

    TrainConfig ut = TrainConfig::toy_preset(Objective::uptrain);
    ut.seq_len = 64;  // dataset is packed at 32
    ut.total_steps = 1;
    ut.warmup_steps = 0;
    CHECK_THROWS_AS(train_loop<float>(nullptr, student, data, ut), std::invalid_argument);

    TrainConfig bad = TrainConfig::toy_preset(Objective::pretrain);
    bad.warmup_steps = 10;
    bad.total_steps = 5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
