#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kept/checkpoint.hpp"
#include "kept/data.hpp"
#include "kept/model.hpp"
#include "kept/train.hpp"

namespace kept {

// Configuration/usage-class failure, distinct from runtime failure for the
// CLI's exit-code contract.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("RunConfig: unknown key '" + it.key() + "' in " + where);
    }
}

}  // namespace detail

// JSON run configuration. One master seed drives initialization, data order
// and the pilot re-init through labelled substreams.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string out_dir;
    std::optional<ModelConfig> model;
    std::optional<TrainConfig> train;
    std::vector<std::string> corpus;
    std::vector<std::string> eval_corpus;
    std::size_t eval_sequences = 8;  // held-out sequences scored per eval step
    std::string teacher_checkpoint;
    std::string student_checkpoint;
    bool record_wall_time = false;

    static RunConfig from_json(const nlohmann::json& j) {
        detail::reject_unknown_keys(j,
                                    {"seed", "out_dir", "model", "train", "corpus", "eval_corpus",
                                     "eval_sequences", "teacher_checkpoint", "student_checkpoint",
                                     "record_wall_time"},
                                    "top level");
        RunConfig rc;
        if (!j.contains("seed")) throw ConfigError("RunConfig: missing required key 'seed'");
        if (!j.contains("out_dir")) throw ConfigError("RunConfig: missing required key 'out_dir'");
        rc.seed = j.at("seed").get<std::uint64_t>();
        rc.out_dir = j.at("out_dir").get<std::string>();
        if (j.contains("model")) rc.model = parse_model(j.at("model"));
        if (j.contains("train")) rc.train = parse_train(j.at("train"), rc.seed);
        if (j.contains("corpus")) rc.corpus = j.at("corpus").get<std::vector<std::string>>();
        if (j.contains("eval_corpus"))
            rc.eval_corpus = j.at("eval_corpus").get<std::vector<std::string>>();
        if (j.contains("eval_sequences")) rc.eval_sequences = j.at("eval_sequences").get<std::size_t>();
        if (j.contains("teacher_checkpoint"))
            rc.teacher_checkpoint = j.at("teacher_checkpoint").get<std::string>();
        if (j.contains("student_checkpoint"))
            rc.student_checkpoint = j.at("student_checkpoint").get<std::string>();
        if (j.contains("record_wall_time")) rc.record_wall_time = j.at("record_wall_time").get<bool>();
        return rc;
    }

    static RunConfig from_file(const std::string& path) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(path));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("RunConfig: invalid JSON in " + path + ": " + e.what());
        }
        return from_json(j);
    }

    // Stage-specific requirement checks, named per the missing key.
    void require(std::initializer_list<const char*> keys, const std::string& stage) const {
        for (const char* k : keys) {
            const std::string key = k;
            const bool present = (key == "model" && model) || (key == "train" && train) ||
                                 (key == "corpus" && !corpus.empty()) ||
                                 (key == "teacher_checkpoint" && !teacher_checkpoint.empty()) ||
                                 (key == "student_checkpoint" && !student_checkpoint.empty());
            if (!present)
                throw ConfigError("RunConfig: '" + key + "' is required for " + stage);
        }
    }

  private:
    static ModelConfig parse_model(const nlohmann::json& j) {
        if (j.contains("preset")) {
            detail::reject_unknown_keys(j, {"preset", "norm_kind"}, "model");
            const std::string preset = j.at("preset").get<std::string>();
            const NormKind kind =
                j.contains("norm_kind") ? norm_kind_from_name(j.at("norm_kind").get<std::string>())
                                        : NormKind::layer_norm;
            if (preset == "toy") return ModelConfig::toy(kind);
            if (preset == "paper_scale") return ModelConfig::paper_scale(kind);
            throw ConfigError("RunConfig: unknown model preset '" + preset + "'");
        }
        detail::reject_unknown_keys(j,
                                    {"vocab_size", "hidden_dim", "mlp_dim", "n_heads", "head_dim",
                                     "n_layers", "rope_base", "norm_kind", "max_seq_len"},
                                    "model");
        try {
            ModelConfig c = config_from_json(j);
            c.validate();
            return c;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("RunConfig: bad model config: ") + e.what());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("RunConfig: bad model config: ") + e.what());
        }
    }

    static TrainConfig parse_train(const nlohmann::json& j, std::uint64_t seed) {
        detail::reject_unknown_keys(j,
                                    {"preset", "objective", "lr", "warmup_steps", "total_steps",
                                     "weight_decay", "beta1", "beta2", "seq_len", "batch_sequences",
                                     "eval_every"},
                                    "train");
        if (!j.contains("objective"))
            throw ConfigError("RunConfig: missing required key 'objective' in train");
        const Objective obj = objective_from_name(j.at("objective").get<std::string>());
        TrainConfig c;
        if (j.contains("preset")) {
            const std::string preset = j.at("preset").get<std::string>();
            if (preset == "toy")
                c = TrainConfig::toy_preset(obj);
            else if (preset == "paper")
                c = TrainConfig::paper_preset(obj);
            else
                throw ConfigError("RunConfig: unknown train preset '" + preset + "'");
        } else {
            c.objective = obj;
        }
        if (j.contains("lr")) c.lr = j.at("lr").get<double>();
        if (j.contains("warmup_steps")) c.warmup_steps = j.at("warmup_steps").get<std::size_t>();
        if (j.contains("total_steps")) c.total_steps = j.at("total_steps").get<std::size_t>();
        if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
        if (j.contains("beta1")) c.beta1 = j.at("beta1").get<double>();
        if (j.contains("beta2")) c.beta2 = j.at("beta2").get<double>();
        if (j.contains("seq_len")) c.seq_len = j.at("seq_len").get<std::size_t>();
        if (j.contains("batch_sequences"))
            c.batch_sequences = j.at("batch_sequences").get<std::size_t>();
        if (j.contains("eval_every")) c.eval_every = j.at("eval_every").get<std::size_t>();
        c.seed = seed;
        try {
            c.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("RunConfig: bad train config: ") + e.what());
        }
        return c;
    }
};

}  // namespace kept
