#include "mtseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mtseg/config.hpp"
#include "mtseg/error.hpp"

namespace mtseg {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'M', 'T', 'S', 'E', 'G', 'C', 'K', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

json vocab_json(const Vocabulary& v) { return v.corpus_symbols(); }

Vocabulary vocab_from(const json& j) { return Vocabulary::from_symbols(j.get<std::vector<std::string>>()); }

template <typename S, typename D>
void convert(const char* bytes, std::size_t count, D* out) {
  for (std::size_t i = 0; i < count; ++i) {
    S s;
    std::memcpy(&s, bytes + i * sizeof(S), sizeof(S));
    out[i] = static_cast<D>(s);
  }
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const SegGlossModel<T>& model, const CheckpointInfo& info) {
  json header;
  header["format"] = 1;
  header["dtype"] = dtype_name<T>();
  header["model"] = to_json(model.config());
  header["vocab"] = {{"source", vocab_json(info.vocabs.source)},
                     {"segmentation", vocab_json(info.vocabs.segmentation)},
                     {"gloss", vocab_json(info.vocabs.gloss)}};
  header["language"] = info.language;
  header["delimiters"] = info.delimiters;
  header["train_state"] = {{"epoch", info.epoch}, {"dev_accuracy", info.dev_accuracy}};
  header["seed"] = model.seed();
  header["train_config"] = info.train_config;
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const Param<T>* p : model.parameters()) {
    tensors.push_back({{"name", p->name}, {"rows", p->value.rows}, {"cols", p->value.cols}, {"offset", offset}});
    offset += p->value.size() * sizeof(T);
  }
  header["tensors"] = tensors;
  const std::string text = header.dump();

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp);
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const Param<T>* p : model.parameters())
      out.write(reinterpret_cast<const char*>(p->value.data.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(T)));
    if (!out) throw IoError("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
LoadedModel<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw IoError(path.string() + " is not a checkpoint");
  if (len > (std::uint64_t{1} << 30)) throw IoError(path.string() + ": implausible header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError(path.string() + ": truncated header");
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  LoadedModel<T> out;
  try {
    const json h = json::parse(text);
    const std::string dtype = h.at("dtype").get<std::string>();
    if (dtype != "f32" && dtype != "f64") throw IoError(path.string() + ": unknown dtype " + dtype);
    const std::size_t width = dtype == "f32" ? 4 : 8;
    auto& info = out.info;
    info.vocabs = {vocab_from(h.at("vocab").at("source")), vocab_from(h.at("vocab").at("segmentation")),
                   vocab_from(h.at("vocab").at("gloss"))};
    info.language = h.value("language", "");
    info.delimiters = h.value("delimiters", std::string(igt::kDefaultDelimiters));
    info.epoch = h.at("train_state").value("epoch", 0);
    info.dev_accuracy = h.at("train_state").value("dev_accuracy", 0.0);
    info.seed = h.at("seed").get<std::uint64_t>();
    info.train_config = h.value("train_config", json::object());
    const ModelConfig config = model_config_from_json(h.at("model"));
    VocabSizes sizes{info.vocabs.source.size(), info.vocabs.segmentation.size(),
                     config.multitask ? info.vocabs.gloss.size() : 0};
    out.model = std::make_unique<SegGlossModel<T>>(config, sizes, info.seed);

    std::size_t loaded = 0;
    for (const auto& t : h.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      Param<T>* p = out.model->find_parameter(name);
      if (!p) throw IoError(path.string() + ": unexpected tensor " + name);
      if (t.at("rows").get<int>() != p->value.rows || t.at("cols").get<int>() != p->value.cols)
        throw IoError(path.string() + ": shape mismatch for " + name);
      const auto offset = t.at("offset").get<std::uint64_t>();
      const std::size_t n = p->value.size();
      if (offset + n * width > data.size()) throw IoError(path.string() + ": truncated tensor " + name);
      if (width == 4)
        convert<float>(data.data() + offset, n, p->value.data.data());
      else
        convert<double>(data.data() + offset, n, p->value.data.data());
      ++loaded;
    }
    if (loaded != out.model->parameters().size()) throw IoError(path.string() + ": missing tensors");
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": bad checkpoint header: " + e.what());
  }
  return out;
}

template void save_checkpoint<float>(const std::filesystem::path&, const SegGlossModel<float>&, const CheckpointInfo&);
template void save_checkpoint<double>(const std::filesystem::path&, const SegGlossModel<double>&,
                                      const CheckpointInfo&);
template LoadedModel<float> load_checkpoint<float>(const std::filesystem::path&);
template LoadedModel<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace mtseg
