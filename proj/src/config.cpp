#include "mtseg/config.hpp"

#include <fstream>
#include <set>

#include "mtseg/error.hpp"

namespace mtseg {
namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const char* section) {
  if (!j.is_object()) throw ConfigError(std::string(section) + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown key '" + key + "' in " + section);
}

template <typename V>
void read(const json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

json to_json(const ModelConfig& c) {
  return {{"encoder_layers", c.encoder_layers}, {"decoder_layers", c.decoder_layers},
          {"attention_heads", c.attention_heads}, {"embedding_dim", c.embedding_dim},
          {"hidden_dim", c.hidden_dim}, {"dropout", c.dropout},
          {"attention_dropout", c.attention_dropout}, {"max_positions", c.max_positions},
          {"multitask", c.multitask}};
}

json to_json(const TrainConfig& c) {
  return {{"lambda_seg", c.lambda_seg}, {"learning_rate", c.learning_rate}, {"beta1", c.beta1},
          {"beta2", c.beta2}, {"epsilon", c.epsilon}, {"batch_size", c.batch_size},
          {"batch_unit", c.batch_unit == BatchUnit::tokens ? "tokens" : "sentences"},
          {"max_epochs", c.max_epochs}, {"dev_beam_width", c.dev_beam_width}, {"dev_every", c.dev_every},
          {"clip_norm", c.clip_norm}, {"seed", c.seed}, {"mode", std::string(mode_name(c.mode))},
          {"threads", c.threads}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  reject_unknown(j,
                 {"encoder_layers", "decoder_layers", "attention_heads", "embedding_dim", "hidden_dim", "dropout",
                  "attention_dropout", "max_positions", "multitask"},
                 "model");
  read(j, "encoder_layers", c.encoder_layers);
  read(j, "decoder_layers", c.decoder_layers);
  read(j, "attention_heads", c.attention_heads);
  read(j, "embedding_dim", c.embedding_dim);
  read(j, "hidden_dim", c.hidden_dim);
  read(j, "dropout", c.dropout);
  read(j, "attention_dropout", c.attention_dropout);
  read(j, "max_positions", c.max_positions);
  read(j, "multitask", c.multitask);
  c.validate();
  return c;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  reject_unknown(j,
                 {"lambda_seg", "learning_rate", "beta1", "beta2", "epsilon", "batch_size", "batch_unit",
                  "max_epochs", "dev_beam_width", "dev_every", "clip_norm", "seed", "mode", "threads"},
                 "train");
  read(j, "lambda_seg", c.lambda_seg);
  read(j, "learning_rate", c.learning_rate);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "epsilon", c.epsilon);
  read(j, "batch_size", c.batch_size);
  read(j, "max_epochs", c.max_epochs);
  read(j, "dev_beam_width", c.dev_beam_width);
  read(j, "dev_every", c.dev_every);
  read(j, "clip_norm", c.clip_norm);
  read(j, "seed", c.seed);
  read(j, "threads", c.threads);
  if (j.contains("batch_unit")) {
    const auto unit = j.at("batch_unit").get<std::string>();
    if (unit == "tokens") c.batch_unit = BatchUnit::tokens;
    else if (unit == "sentences") c.batch_unit = BatchUnit::sentences;
    else throw ConfigError("batch_unit must be tokens or sentences");
  }
  if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  reject_unknown(j, {"model", "train", "delimiters", "synth"}, "config");
  RunConfig rc;
  if (j.contains("model")) rc.model = model_config_from_json(j["model"]);
  if (j.contains("train")) rc.train = train_config_from_json(j["train"]);
  read(j, "delimiters", rc.delimiters);
  if (rc.delimiters.empty()) throw ConfigError("delimiters must not be empty");
  if (j.contains("synth")) rc.synth = j["synth"];
  return rc;
}

}  // namespace mtseg
