#pragma once

// Decoding test scorers: next-symbol distributions given as pure functions of
// the consumed prefix, plus exhaustive enumeration of the best sequence.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "mtseg/decoding.hpp"
#include "mtseg/random.hpp"

namespace toy {

using mtseg::Matrix;
using mtseg::Rng;
using mtseg::Vocabulary;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Next-symbol distribution as a pure function of the consumed prefix.
struct TableScorer {
  using State = std::vector<int>;
  int vocab = 0;
  std::function<std::vector<double>(const std::vector<int>&)> dist;  // probabilities

  State initial() const { return {}; }
  int vocab_size() const { return vocab; }
  void step(std::span<State*> states, std::span<const int> tokens, Matrix<double>& log_probs) const {
    log_probs.resize(static_cast<int>(states.size()), vocab);
    for (std::size_t i = 0; i < states.size(); ++i) {
      states[i]->push_back(tokens[i]);
      const auto p = dist(*states[i]);
      for (int v = 0; v < vocab; ++v) log_probs(static_cast<int>(i), v) = p[v] > 0 ? std::log(p[v]) : kNegInf;
    }
  }
};

inline constexpr int A = 3, B = 4;

// Greedy takes A (0.6) and ends on A A EOS (0.12); the best sequence is B EOS
// (0.36).
inline TableScorer greedy_trap() {
  TableScorer s;
  s.vocab = 5;
  s.dist = [](const std::vector<int>& prefix) {
    std::vector<double> p(5, 0.0);
    const std::vector<int> body(prefix.begin() + 1, prefix.end());
    auto set = [&](double eos, double a, double b) {
      p[Vocabulary::kEos] = eos;
      p[A] = a;
      p[B] = b;
    };
    if (body.size() >= 3) set(1.0, 0.0, 0.0);
    else if (body.empty()) set(0.0, 0.6, 0.4);
    else if (body == std::vector<int>{A}) set(0.3, 0.4, 0.3);
    else if (body == std::vector<int>{B}) set(0.9, 0.05, 0.05);
    else set(0.5, 0.25, 0.25);
    return p;
  };
  return s;
}

// Random but deterministic distributions keyed by the prefix.
inline TableScorer random_scorer(std::uint64_t seed, int vocab) {
  TableScorer s;
  s.vocab = vocab;
  s.dist = [seed, vocab](const std::vector<int>& prefix) {
    std::uint64_t h = seed * 0x9E3779B97F4A7C15ull;
    for (int t : prefix) h = (h ^ static_cast<std::uint64_t>(t)) * 0x100000001B3ull;
    Rng rng(h);
    std::vector<double> p(static_cast<std::size_t>(vocab));
    double sum = 0;
    for (int v = 0; v < vocab; ++v) {
      p[v] = (v == Vocabulary::kPad || v == Vocabulary::kBos) ? 0.0 : std::exp(3.0 * mtseg::uniform_unit(rng));
      sum += p[v];
    }
    for (auto& x : p) x /= sum;
    return p;
  };
  return s;
}

// Best finished sequence by exhaustive enumeration up to max_len symbols.
inline double enumerate_best(const TableScorer& s, int max_len) {
  double best = kNegInf;
  std::function<void(std::vector<int>&, double)> walk = [&](std::vector<int>& prefix, double lp) {
    if (static_cast<int>(prefix.size()) > max_len) return;
    const auto p = s.dist(prefix);
    for (int v = 0; v < s.vocab; ++v) {
      if (p[v] <= 0 || v == Vocabulary::kPad || v == Vocabulary::kBos) continue;
      const double next = lp + std::log(p[v]);
      if (v == Vocabulary::kEos) {
        best = std::max(best, next);
      } else {
        prefix.push_back(v);
        walk(prefix, next);
        prefix.pop_back();
      }
    }
  };
  std::vector<int> prefix = {Vocabulary::kBos};
  walk(prefix, 0.0);
  return best;
}

}  // namespace toy
