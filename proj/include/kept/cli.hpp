#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kept/checkpoint.hpp"
#include "kept/data.hpp"
#include "kept/eval.hpp"
#include "kept/mapping.hpp"
#include "kept/metrics.hpp"
#include "kept/model.hpp"
#include "kept/runconfig.hpp"
#include "kept/train.hpp"

namespace kept {

namespace cli_detail {

struct LoadedModel {
    Model<float> model;
    CheckpointMeta meta;
};

inline LoadedModel load_model(const std::string& path, bool trainable) {
    auto [store, meta] = load_checkpoint(path);
    validate_store(store, meta.config);
    return {Model<float>(meta.config, store, trainable), std::move(meta)};
}

// Train/eval split: an explicit eval corpus wins; otherwise the tail of the
// packed training data is held out.
struct StageData {
    PackedDataset train;
    std::optional<PackedDataset> eval;
};

inline StageData prepare_data(const RunConfig& rc, std::size_t seq_len, std::size_t vocab_size) {
    StageData d;
    PackedDataset full = load_and_pack(rc.corpus, seq_len, vocab_size);
    if (!rc.eval_corpus.empty()) {
        d.train = std::move(full);
        d.eval = load_and_pack(rc.eval_corpus, seq_len, vocab_size);
        return d;
    }
    const std::size_t k = std::min(rc.eval_sequences, full.n_sequences > 1 ? full.n_sequences - 1 : 0);
    if (k == 0) {
        d.train = std::move(full);
        return d;
    }
    d.train = full.slice_sequences(0, full.n_sequences - k);
    d.eval = full.slice_sequences(full.n_sequences - k, k);
    return d;
}

inline void summarize_run(const TrainResult<float>& result, const std::string& out_dir) {
    if (!result.metrics.empty()) {
        const auto& last = result.metrics.back();
        std::cout << "final step " << last.step << ": loss " << format_number(last.loss);
        if (last.eval_loss) std::cout << ", eval_loss " << format_number(*last.eval_loss);
        if (last.top1_agreement)
            std::cout << ", top1_agreement " << format_number(*last.top1_agreement);
        std::cout << "\n";
    }
    std::cout << "artifacts written to " << out_dir << "\n";
}

inline std::vector<std::int32_t> bytes_to_tokens(const std::string& bytes) {
    std::vector<std::int32_t> tokens;
    tokens.reserve(bytes.size());
    for (unsigned char c : bytes) tokens.push_back(static_cast<std::int32_t>(c));
    return tokens;
}

inline void emit_json(const nlohmann::json& j, const std::string& out_path) {
    const std::string text = j.dump(2);
    if (out_path.empty())
        std::cout << text << "\n";
    else
        write_file(out_path, text + "\n");
}

inline int run_pretrain(const std::string& config_path) {
    RunConfig rc = RunConfig::from_file(config_path);
    rc.require({"model", "train", "corpus"}, "pretrain");
    if (rc.train->objective != Objective::pretrain)
        throw ConfigError("pretrain: train.objective must be 'pretrain'");
    std::filesystem::create_directories(rc.out_dir);

    auto data = prepare_data(rc, rc.train->seq_len, rc.model->vocab_size);
    auto store = build_model<float>(*rc.model, rc.seed);
    Model<float> model(*rc.model, store, true);

    MetricsCsvWriter csv(rc.out_dir + "/metrics.csv");
    TrainHooks hooks;
    hooks.sink = &csv;
    hooks.record_wall = rc.record_wall_time;
    auto result = pretrain_loop(model, data.train, *rc.train,
                                data.eval ? &*data.eval : nullptr, hooks);

    CheckpointMeta meta;
    meta.config = *rc.model;
    meta.provenance = "pretrain(corpus=" + data.train.provenance + ")";
    meta.seed = rc.seed;
    save_checkpoint(model.snapshot(), meta, rc.out_dir + "/model.kept");
    summarize_run(result, rc.out_dir);
    return 0;
}

inline int run_convert(const std::string& source_path, const std::string& out_path,
                       std::string report_path) {
    auto [store, meta] = load_checkpoint(source_path);
    ModelConfig target_cfg = meta.config;
    target_cfg.norm_kind = NormKind::rms_norm;
    const MappingPlan plan = build_mapping_plan(meta.config, target_cfg);
    auto [target_store, report] = convert_store(store, plan, target_cfg);

    CheckpointMeta target_meta;
    target_meta.config = target_cfg;
    target_meta.provenance = "convert(" + meta.provenance + ")";
    target_meta.seed = meta.seed;
    save_checkpoint(target_store, target_meta, out_path);
    if (report_path.empty()) report_path = out_path + ".report.json";
    write_file(report_path, report.to_json() + "\n");
    std::cout << "converted " << report.n_copied << " tensors by identity, " << report.n_opm_sites
              << " norm sites by theta<-gamma\n"
              << "report: " << report_path << "\n";
    return 0;
}

inline int run_distill(const std::string& config_path, bool uptraining) {
    RunConfig rc = RunConfig::from_file(config_path);
    const char* stage = uptraining ? "uptrain" : "distill";
    rc.require({"train", "corpus", "student_checkpoint"}, stage);
    if (uptraining) {
        if (rc.train->objective != Objective::uptrain)
            throw ConfigError("uptrain: train.objective must be 'uptrain'");
    } else {
        rc.require({"teacher_checkpoint"}, stage);
        if (rc.train->objective != Objective::xkd_hidden &&
            rc.train->objective != Objective::xkd_logits)
            throw ConfigError("distill: train.objective must be 'xkd_hidden' or 'xkd_logits'");
    }
    std::filesystem::create_directories(rc.out_dir);

    auto student = load_model(rc.student_checkpoint, true);
    auto data = prepare_data(rc, rc.train->seq_len, student.meta.config.vocab_size);

    MetricsCsvWriter csv(rc.out_dir + "/metrics.csv");
    TrainHooks hooks;
    hooks.sink = &csv;
    hooks.record_wall = rc.record_wall_time;

    TrainResult<float> result;
    if (uptraining) {
        result = ut_loop(student.model, data.train, *rc.train, data.eval ? &*data.eval : nullptr,
                         hooks);
    } else {
        auto teacher = load_model(rc.teacher_checkpoint, false);
        result = xkd_loop(teacher.model, student.model, data.train, *rc.train,
                          data.eval ? &*data.eval : nullptr, hooks);
    }

    CheckpointMeta out_meta = student.meta;
    out_meta.provenance = std::string(stage) + "(" + objective_name(rc.train->objective) +
                          ", from=" + student.meta.provenance + ")";
    out_meta.seed = rc.seed;
    save_checkpoint(student.model.snapshot(), out_meta, rc.out_dir + "/student.kept");
    summarize_run(result, rc.out_dir);
    return 0;
}

inline int run_eval(const std::string& model_path, const std::string& teacher_path,
                    const std::vector<std::string>& data_paths, std::size_t seq_len,
                    std::size_t max_seqs, const std::string& out_path) {
    auto m = load_model(model_path, false);
    PackedDataset data = load_and_pack(data_paths, seq_len, m.meta.config.vocab_size);
    nlohmann::json j;
    const double ce = eval_lm_loss(m.model, data, max_seqs);
    j["eval_loss"] = ce;
    j["perplexity"] = std::exp(ce);
    j["n_sequences"] = max_seqs == 0 ? data.n_sequences : std::min(max_seqs, data.n_sequences);
    if (!teacher_path.empty()) {
        auto t = load_model(teacher_path, false);
        const AgreementReport rep = agreement(t.model, m.model, data, max_seqs);
        j["teacher_eval_loss"] = eval_lm_loss(t.model, data, max_seqs);
        j["top1_agreement"] = rep.top1_match_rate;
        j["mean_kl"] = rep.mean_kl;
        j["mean_logit_l2"] = rep.mean_logit_l2;
    }
    emit_json(j, out_path);
    return 0;
}

inline int run_probe_opm_pilot(const std::string& teacher_path,
                               const std::vector<std::string>& corpus, std::size_t steps, double lr,
                               std::uint64_t seed, const std::string& out_dir) {
    auto teacher = load_model(teacher_path, false);
    ModelConfig target_cfg = teacher.meta.config;
    target_cfg.norm_kind = NormKind::rms_norm;
    const MappingPlan plan = build_mapping_plan(teacher.meta.config, target_cfg);
    auto [student_store, report] = convert_store(teacher.model.snapshot(), plan, target_cfg);
    Model<float> student(target_cfg, student_store, true);

    PackedDataset data = load_and_pack(corpus, teacher.meta.config.max_seq_len > 128
                                                   ? 128
                                                   : teacher.meta.config.max_seq_len,
                                       teacher.meta.config.vocab_size);
    PilotOptions opts;
    opts.lr = lr;
    opts.seed = seed;
    const PilotTrace trace = run_opm_pilot(teacher.model, student, data, steps, opts);

    std::filesystem::create_directories(out_dir);
    std::string csv = "step,median_cosine";
    for (const auto& s : trace.sites) csv += "," + s;
    csv += "\n";
    for (const auto& row : trace.rows) {
        csv += std::to_string(row.step) + "," + format_number(row.median_cosine);
        for (double c : row.cosine) csv += "," + format_number(c);
        csv += "\n";
    }
    write_file(out_dir + "/pilot_trace.csv", csv);

    nlohmann::json j;
    j["steps"] = steps;
    j["initial_median_cosine"] = trace.rows.front().median_cosine;
    j["final_median_cosine"] = trace.rows.back().median_cosine;
    nlohmann::json per_site;
    for (std::size_t s = 0; s < trace.sites.size(); ++s) {
        per_site[trace.sites[s]] = {{"cosine", trace.rows.back().cosine[s]},
                                    {"l2", trace.rows.back().l2[s]}};
    }
    j["final_per_site"] = per_site;
    write_file(out_dir + "/pilot_summary.json", j.dump(2) + "\n");
    std::cout << "pilot median cosine(theta, gamma): " << trace.rows.front().median_cosine << " -> "
              << trace.rows.back().median_cosine << "\n";
    return 0;
}

inline int run_probe_zero_mean(const std::string& model_path,
                               const std::vector<std::string>& data_paths, std::size_t seq_len,
                               std::size_t max_seqs, const std::string& out_path) {
    auto m = load_model(model_path, false);
    PackedDataset data = load_and_pack(data_paths, seq_len, m.meta.config.vocab_size);
    const ZeroMeanStats stats = zero_mean_probe(m.model, data, max_seqs);
    nlohmann::json j;
    j["pooled_median"] = stats.pooled_median;
    nlohmann::json sites;
    for (const auto& [site, st] : stats.sites)
        sites[site] = {{"median", st.median}, {"p95", st.p95}, {"n", st.n}};
    j["sites"] = sites;
    emit_json(j, out_path);
    return 0;
}

inline int run_probe_longctx(const std::string& teacher_path, const std::string& student_path,
                             const std::string& doc_path, std::vector<std::size_t> lengths,
                             const std::string& out_path) {
    auto teacher = load_model(teacher_path, false);
    auto student = load_model(student_path, false);
    const auto tokens = bytes_to_tokens(read_file(doc_path));
    LengthCurve curve;
    curve.lengths = std::move(lengths);
    curve.ppl_teacher = ppl_vs_length(teacher.model, tokens, curve.lengths);
    curve.ppl_student = ppl_vs_length(student.model, tokens, curve.lengths);
    nlohmann::json j;
    double max_rel_gap = 0.0;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < curve.lengths.size(); ++i) {
        const double rel = std::abs(curve.ppl_student[i] / curve.ppl_teacher[i] - 1.0);
        max_rel_gap = std::max(max_rel_gap, rel);
        rows.push_back({{"length", curve.lengths[i]},
                        {"ppl_teacher", curve.ppl_teacher[i]},
                        {"ppl_student", curve.ppl_student[i]},
                        {"rel_gap", rel}});
    }
    j["curve"] = rows;
    j["max_rel_gap"] = max_rel_gap;
    emit_json(j, out_path);
    return 0;
}

inline int run_probe_transfer(const std::string& teacher_path, const std::string& student_path,
                              const std::vector<std::string>& data_paths, std::size_t seq_len,
                              std::size_t max_seqs, const std::string& out_path) {
    auto teacher = load_model(teacher_path, false);
    auto student = load_model(student_path, false);
    PackedDataset data = load_and_pack(data_paths, seq_len, teacher.meta.config.vocab_size);
    const double ce_teacher = eval_lm_loss(teacher.model, data, max_seqs);
    const double ce_student = eval_lm_loss(student.model, data, max_seqs);
    nlohmann::json j;
    j["ce_teacher"] = ce_teacher;
    j["ce_student"] = ce_student;
    j["rel_gap"] = std::abs(ce_student / ce_teacher - 1.0);
    emit_json(j, out_path);
    return 0;
}

inline int run_report(const std::string& metrics_path, const std::string& out_path) {
    const RecoveryCurve curve = recovery_curve_from_csv(metrics_path);
    nlohmann::json j;
    nlohmann::json thresholds;
    for (const auto& [th, step] : curve.first_step_at) {
        const std::string key = format_number(th);
        if (step)
            thresholds[key] = *step;
        else
            thresholds[key] = nullptr;
    }
    j["first_step_at_agreement"] = thresholds;
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : curve.points) {
        nlohmann::json pj = {{"step", p.step}, {"agreement", p.agreement}};
        if (p.eval_loss) pj["eval_loss"] = *p.eval_loss;
        points.push_back(pj);
    }
    j["points"] = points;
    emit_json(j, out_path);
    return 0;
}

}  // namespace cli_detail

// Command-line entry point. Exit codes: 0 success, 1 usage/config error,
// 2 runtime failure.
inline int cli_dispatch(int argc, const char* const* argv) {
    CLI::App app{"kept: LayerNorm->RMSNorm model conversion with teacher-aligned distillation"};
    app.require_subcommand(1);

    std::string config_path, source_path, out_path, report_path, model_path, teacher_path,
        student_path, doc_path, metrics_path;
    std::vector<std::string> data_paths;
    std::size_t seq_len = 128, max_seqs = 0, steps = 2000;
    double lr = 3e-3;
    std::uint64_t seed = 0;
    std::vector<std::size_t> lengths = {128, 256, 512};

    auto* pretrain = app.add_subcommand("pretrain", "Pretrain a model from a JSON run config");
    pretrain->add_option("--config", config_path, "run config JSON")->required();

    auto* convert = app.add_subcommand(
        "convert", "Map a LayerNorm checkpoint onto the RMSNorm template (NPM + OPM)");
    convert->add_option("--source", source_path, "source checkpoint")->required();
    convert->add_option("--out", out_path, "output checkpoint")->required();
    convert->add_option("--report", report_path, "mapping report JSON path");

    auto* distill = app.add_subcommand("distill", "Align a converted student to its frozen teacher");
    distill->add_option("--config", config_path, "run config JSON")->required();

    auto* uptrain = app.add_subcommand("uptrain", "Continue next-token training (baseline)");
    uptrain->add_option("--config", config_path, "run config JSON")->required();

    auto* eval = app.add_subcommand("eval", "Evaluate loss/perplexity and teacher agreement");
    eval->add_option("--model", model_path)->required();
    eval->add_option("--teacher", teacher_path);
    eval->add_option("--data", data_paths)->required();
    eval->add_option("--seq-len", seq_len);
    eval->add_option("--max-seqs", max_seqs);
    eval->add_option("--out", out_path, "write JSON here instead of stdout");

    auto* pilot = app.add_subcommand("probe-opm-pilot",
                                     "Train only randomized norm weights against the frozen teacher");
    pilot->add_option("--teacher", teacher_path)->required();
    pilot->add_option("--corpus", data_paths)->required();
    pilot->add_option("--steps", steps);
    pilot->add_option("--lr", lr);
    pilot->add_option("--seed", seed);
    pilot->add_option("--out-dir", out_path)->required();

    auto* zeromean = app.add_subcommand("probe-zero-mean",
                                        "Distribution of |mean|/RMS over pre-norm activations");
    zeromean->add_option("--model", model_path)->required();
    zeromean->add_option("--data", data_paths)->required();
    zeromean->add_option("--seq-len", seq_len);
    zeromean->add_option("--max-seqs", max_seqs);
    zeromean->add_option("--out", out_path);

    auto* longctx = app.add_subcommand("probe-longctx", "Perplexity versus input length");
    longctx->add_option("--teacher", teacher_path)->required();
    longctx->add_option("--student", student_path)->required();
    longctx->add_option("--doc", doc_path)->required();
    longctx->add_option("--lengths", lengths)->delimiter(',');
    longctx->add_option("--out", out_path);

    auto* transfer = app.add_subcommand("probe-transfer",
                                        "Compare teacher/student CE on a held-out domain");
    transfer->add_option("--teacher", teacher_path)->required();
    transfer->add_option("--student", student_path)->required();
    transfer->add_option("--data", data_paths)->required();
    transfer->add_option("--seq-len", seq_len);
    transfer->add_option("--max-seqs", max_seqs);
    transfer->add_option("--out", out_path);

    auto* report = app.add_subcommand("report", "Summarize a metrics CSV into a recovery curve");
    report->add_option("--metrics", metrics_path)->required();
    report->add_option("--out", out_path);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (pretrain->parsed()) return cli_detail::run_pretrain(config_path);
        if (convert->parsed()) return cli_detail::run_convert(source_path, out_path, report_path);
        if (distill->parsed()) return cli_detail::run_distill(config_path, false);
        if (uptrain->parsed()) return cli_detail::run_distill(config_path, true);
        if (eval->parsed())
            return cli_detail::run_eval(model_path, teacher_path, data_paths, seq_len, max_seqs,
                                        out_path);
        if (pilot->parsed())
            return cli_detail::run_probe_opm_pilot(teacher_path, data_paths, steps, lr, seed,
                                                   out_path);
        if (zeromean->parsed())
            return cli_detail::run_probe_zero_mean(model_path, data_paths, seq_len, max_seqs,
                                                   out_path);
        if (longctx->parsed())
            return cli_detail::run_probe_longctx(teacher_path, student_path, doc_path, lengths,
                                                 out_path);
        if (transfer->parsed())
            return cli_detail::run_probe_transfer(teacher_path, student_path, data_paths, seq_len,
                                                  max_seqs, out_path);
        if (report->parsed()) return cli_detail::run_report(metrics_path, out_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

inline int cli_dispatch(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("kept");
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace kept
