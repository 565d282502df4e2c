#pragma once

// Beam search over any incremental scorer, plus the model adapter and
// batch prediction helpers.
//
// A scorer provides:
//   using State = ...;
//   State initial() const;
//   int vocab_size() const;
//   void step(std::span<State*> states, std::span<const int> tokens,
//             Matrix<Real>& log_probs) const;   // one row per state
// where `step` consumes the last token of each hypothesis and advances its
// state.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <span>
#include <string>
#include <vector>

#include "mtseg/model.hpp"
#include "mtseg/tensor.hpp"
#include "mtseg/vocab.hpp"

namespace mtseg {

struct Hypothesis {
  std::vector<int> tokens;  // starts with BOS; ends with EOS when finished
  double log_prob = 0.0;
  bool finished = false;
  bool truncated = false;  // max_len reached without EOS
};

struct BeamOptions {
  int beam_width = 5;
  int max_len = 0;  // 0: 2 * source length + 8
  bool length_normalize = false;
};

int default_max_len(int source_length);

namespace detail {

// Higher score first; equal scores prefer the shorter sequence, then the
// lexicographically smaller id sequence.
inline bool better(double score_a, const std::vector<int>& a, double score_b, const std::vector<int>& b) {
  if (score_a != score_b) return score_a > score_b;
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

inline double final_score(const Hypothesis& h, bool length_normalize) {
  if (!length_normalize) return h.log_prob;
  return h.log_prob / static_cast<double>(std::max<std::size_t>(1, h.tokens.size() - 1));
}

}  // namespace detail

template <typename Scorer>
Hypothesis beam_search(const Scorer& scorer, const BeamOptions& options) {
  using State = typename Scorer::State;
  if (options.beam_width < 1) throw std::invalid_argument("beam_width must be >= 1");
  if (options.max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  const int width = options.beam_width;
  const int vocab = scorer.vocab_size();

  struct Live {
    Hypothesis hyp;
    State state;
  };
  struct Candidate {
    double score;
    int parent;
    int token;
  };

  std::vector<Live> live;
  live.push_back({Hypothesis{{Vocabulary::kBos}, 0.0, false, false}, scorer.initial()});
  std::vector<Hypothesis> finished;
  Matrix<double> log_probs;
  std::vector<Candidate> candidates;
  std::vector<int> seq_a, seq_b;

  for (int step = 0; step < options.max_len && !live.empty(); ++step) {
    std::vector<State*> states;
    std::vector<int> tokens;
    for (auto& l : live) {
      states.push_back(&l.state);
      tokens.push_back(l.hyp.tokens.back());
    }
    scorer.step(std::span<State*>(states), std::span<const int>(tokens), log_probs);

    candidates.clear();
    for (int i = 0; i < static_cast<int>(live.size()); ++i) {
      for (int v = 0; v < vocab; ++v) {
        if (v == Vocabulary::kPad || v == Vocabulary::kBos) continue;
        const double lp = log_probs(i, v);
        if (!std::isfinite(lp)) continue;
        candidates.push_back({live[static_cast<std::size_t>(i)].hyp.log_prob + lp, i, v});
      }
    }
    // Candidates all share one length, so ties fall back to id order of the
    // extended sequences.
    auto extended = [&](const Candidate& c, std::vector<int>& out) {
      out = live[static_cast<std::size_t>(c.parent)].hyp.tokens;
      out.push_back(c.token);
    };
    std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      extended(a, seq_a);
      extended(b, seq_b);
      return seq_a < seq_b;
    });

    std::vector<Live> next;
    for (const Candidate& c : candidates) {
      if (static_cast<int>(next.size()) >= width) break;
      Hypothesis h = live[static_cast<std::size_t>(c.parent)].hyp;
      h.tokens.push_back(c.token);
      h.log_prob = c.score;
      if (c.token == Vocabulary::kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next.push_back({std::move(h), live[static_cast<std::size_t>(c.parent)].state});
      }
    }
    live = std::move(next);

    if (finished.empty() || live.empty()) continue;
    if (options.length_normalize) {
      if (static_cast<int>(finished.size()) >= width) break;
      continue;
    }
    // Scores only decrease as hypotheses grow, so no live hypothesis can
    // overtake the best finished one.
    double best_finished = -std::numeric_limits<double>::infinity();
    for (const auto& f : finished) best_finished = std::max(best_finished, f.log_prob);
    double best_live = -std::numeric_limits<double>::infinity();
    for (const auto& l : live) best_live = std::max(best_live, l.hyp.log_prob);
    if (best_finished >= best_live) break;
  }

  auto pick = [&](std::vector<Hypothesis>& pool) {
    return *std::min_element(pool.begin(), pool.end(), [&](const Hypothesis& a, const Hypothesis& b) {
      return detail::better(detail::final_score(a, options.length_normalize), a.tokens,
                            detail::final_score(b, options.length_normalize), b.tokens);
    });
  };
  if (!finished.empty()) return pick(finished);
  std::vector<Hypothesis> unfinished;
  for (auto& l : live) unfinished.push_back(std::move(l.hyp));
  if (unfinished.empty()) return Hypothesis{{Vocabulary::kBos}, 0.0, false, true};
  Hypothesis best = pick(unfinished);
  best.truncated = true;
  return best;
}

// Stepwise argmax, no beam. Reference for beam_width == 1.
template <typename Scorer>
Hypothesis greedy_search(const Scorer& scorer, int max_len) {
  using State = typename Scorer::State;
  Hypothesis h{{Vocabulary::kBos}, 0.0, false, false};
  State state = scorer.initial();
  Matrix<double> log_probs;
  for (int step = 0; step < max_len; ++step) {
    State* sp = &state;
    const int tok = h.tokens.back();
    scorer.step(std::span<State*>(&sp, 1), std::span<const int>(&tok, 1), log_probs);
    int best = -1;
    for (int v = 0; v < scorer.vocab_size(); ++v) {
      if (v == Vocabulary::kPad || v == Vocabulary::kBos) continue;
      if (best < 0 || log_probs(0, v) > log_probs(0, best)) best = v;
    }
    h.tokens.push_back(best);
    h.log_prob += log_probs(0, best);
    if (best == Vocabulary::kEos) {
      h.finished = true;
      return h;
    }
  }
  h.truncated = true;
  return h;
}

// Adapts a trained model and one encoded word to the scorer interface.
template <typename T>
class ModelScorer {
 public:
  using State = DecoderState<T>;

  ModelScorer(const SegGlossModel<T>& model, Stream stream, const Matrix<T>& encoded)
      : model_(model), stream_(stream), memory_(model.prepare_memory(stream, encoded)) {}

  State initial() const { return model_.initial_state(stream_); }
  int vocab_size() const { return model_.decoder(stream_).projection.value.rows; }
  void step(std::span<State*> states, std::span<const int> tokens, Matrix<double>& log_probs) const;

 private:
  const SegGlossModel<T>& model_;
  Stream stream_;
  DecoderMemory<T> memory_;
};

template <typename T>
Hypothesis beam_search(const SegGlossModel<T>& model, Stream stream, std::span<const int> source,
                       BeamOptions options);

template <typename T>
Hypothesis greedy_decode(const SegGlossModel<T>& model, Stream stream, std::span<const int> source,
                         int max_len = 0);

struct DetokenizedText {
  std::string text;
  bool truncated = false;
};

DetokenizedText detokenize(const Hypothesis& hypothesis, const Vocabulary& vocab);

struct Prediction {
  std::string surface;
  std::string segmentation;
  std::string gloss;  // empty unless gloss decoding was requested
  bool segmentation_truncated = false;
  bool gloss_truncated = false;
};

// Decodes every word; results keep input order regardless of `threads`.
template <typename T>
std::vector<Prediction> predict(const SegGlossModel<T>& model, const Vocabularies& vocabs,
                                std::span<const std::string> surfaces, const BeamOptions& options,
                                bool with_gloss, int threads = 1);

// surface<TAB>predicted_segmentation<TAB>predicted_gloss per line.
void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

}  // namespace mtseg
