#pragma once

// Self-describing model file: an 8-byte magic, a little-endian uint64 header
// length, a JSON header and the raw parameter arrays. The header carries the
// model config, the three vocabularies, training metadata and a table of
// tensors (name, shape, byte offset into the data section).

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "mtseg/model.hpp"
#include "mtseg/vocab.hpp"

namespace mtseg {

struct CheckpointInfo {
  Vocabularies vocabs;
  std::string language;
  std::string delimiters = std::string(igt::kDefaultDelimiters);
  int epoch = 0;
  double dev_accuracy = 0.0;
  std::uint64_t seed = 0;
  nlohmann::json train_config = nlohmann::json::object();
};

template <typename T>
struct LoadedModel {
  std::unique_ptr<SegGlossModel<T>> model;
  CheckpointInfo info;
};

// Writes to a temporary sibling and renames, so readers never see a
// partial file.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const SegGlossModel<T>& model, const CheckpointInfo& info);

// Parameters stored in either precision load into either precision.
template <typename T>
LoadedModel<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace mtseg
