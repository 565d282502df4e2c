#pragma once

// JSON run configuration. Keys mirror the ModelConfig and TrainConfig field
// names; unknown keys are rejected so typos do not silently fall back to
// defaults.
//
//   {
//     "model": {"encoder_layers": 4, "decoder_layers": 4, ...},
//     "train": {"lambda_seg": 0.9, "batch_unit": "tokens", "mode": "multitask", ...},
//     "delimiters": "-=",
//     "synth": {"endpoint": "...", "model": "...", "temperature": 0.7, ...}
//   }

#include <filesystem>
#include <string>

#include <json.hpp>

#include "mtseg/model.hpp"
#include "mtseg/training.hpp"

namespace mtseg {

nlohmann::json to_json(const ModelConfig& config);
nlohmann::json to_json(const TrainConfig& config);
// Overlays the keys present in `j` on `base`. Throws ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string delimiters = std::string(igt::kDefaultDelimiters);
  nlohmann::json synth = nlohmann::json::object();
};

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace mtseg
