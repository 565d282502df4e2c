#include "mtseg/decoding.hpp"

#include <fstream>
#include <thread>

#include "mtseg/error.hpp"

namespace mtseg {

int default_max_len(int source_length) { return 2 * source_length + 8; }

template <typename T>
void ModelScorer<T>::step(std::span<State*> states, std::span<const int> tokens, Matrix<double>& log_probs) const {
  Matrix<T> lp;
  model_.step(memory_, states, tokens, lp);
  log_probs.resize(lp.rows, lp.cols);
  std::copy(lp.data.begin(), lp.data.end(), log_probs.data.begin());
}

namespace {

int clamp_max_len(int requested, int source_length, int max_positions) {
  const int len = requested > 0 ? requested : default_max_len(source_length);
  // BOS occupies position 0, so at most max_positions tokens can be fed.
  return std::min(len, max_positions);
}

}  // namespace

template <typename T>
Hypothesis beam_search(const SegGlossModel<T>& model, Stream stream, std::span<const int> source,
                       BeamOptions options) {
  const Matrix<T> encoded = model.encode_word(source);
  options.max_len = clamp_max_len(options.max_len, static_cast<int>(source.size()), model.config().max_positions);
  const ModelScorer<T> scorer(model, stream, encoded);
  return beam_search(scorer, options);
}

template <typename T>
Hypothesis greedy_decode(const SegGlossModel<T>& model, Stream stream, std::span<const int> source, int max_len) {
  const Matrix<T> encoded = model.encode_word(source);
  const ModelScorer<T> scorer(model, stream, encoded);
  return greedy_search(scorer, clamp_max_len(max_len, static_cast<int>(source.size()), model.config().max_positions));
}

DetokenizedText detokenize(const Hypothesis& hypothesis, const Vocabulary& vocab) {
  const auto syms = vocab.decode(hypothesis.tokens);
  return {symbols::detokenize(syms), hypothesis.truncated};
}

template <typename T>
std::vector<Prediction> predict(const SegGlossModel<T>& model, const Vocabularies& vocabs,
                                std::span<const std::string> surfaces, const BeamOptions& options,
                                bool with_gloss, int threads) {
  if (with_gloss && !model.has_gloss_decoder()) throw Error("gloss prediction needs a multitask model");
  std::vector<Prediction> out(surfaces.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < surfaces.size(); i += stride) {
      Prediction& p = out[i];
      p.surface = surfaces[i];
      const auto ids = vocabs.source.encode(symbols::tokenize_source(surfaces[i]));
      if (ids.empty()) continue;
      const auto seg = detokenize(beam_search(model, Stream::segmentation, ids, options), vocabs.segmentation);
      p.segmentation = seg.text;
      p.segmentation_truncated = seg.truncated;
      if (with_gloss) {
        const auto gl = detokenize(beam_search(model, Stream::gloss, ids, options), vocabs.gloss);
        p.gloss = gl.text;
        p.gloss_truncated = gl.truncated;
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, threads));
  if (n == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work, t, n);
  }
  return out;
}

void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : predictions) out << p.surface << '\t' << p.segmentation << '\t' << p.gloss << '\n';
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<Prediction> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Prediction p;
    const auto t1 = line.find('\t');
    if (t1 == std::string::npos) throw ParseError("prediction line without tab: " + line, 0);
    const auto t2 = line.find('\t', t1 + 1);
    p.surface = line.substr(0, t1);
    p.segmentation = line.substr(t1 + 1, t2 == std::string::npos ? std::string::npos : t2 - t1 - 1);
    if (t2 != std::string::npos) p.gloss = line.substr(t2 + 1);
    out.push_back(std::move(p));
  }
  return out;
}

template class ModelScorer<float>;
template class ModelScorer<double>;
template Hypothesis beam_search<float>(const SegGlossModel<float>&, Stream, std::span<const int>, BeamOptions);
template Hypothesis beam_search<double>(const SegGlossModel<double>&, Stream, std::span<const int>, BeamOptions);
template Hypothesis greedy_decode<float>(const SegGlossModel<float>&, Stream, std::span<const int>, int);
template Hypothesis greedy_decode<double>(const SegGlossModel<double>&, Stream, std::span<const int>, int);
template std::vector<Prediction> predict<float>(const SegGlossModel<float>&, const Vocabularies&,
                                                std::span<const std::string>, const BeamOptions&, bool, int);
template std::vector<Prediction> predict<double>(const SegGlossModel<double>&, const Vocabularies&,
                                                 std::span<const std::string>, const BeamOptions&, bool, int);

}  // namespace mtseg
