#pragma once

// Segmentation scoring: word accuracy, micro-averaged morpheme F1 over
// per-word multisets, and summed Levenshtein distance. All comparisons are
// case-sensitive and run on NFC-normalized text.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtseg/igt.hpp"

namespace mtseg::metrics {

struct SegmentationPair {
  std::string gold;
  std::string predicted;
};

// Percentage in [0, 100]. Throws Error on an empty list.
double word_accuracy(std::span<const SegmentationPair> pairs);

struct MorphemeScore {
  double precision = 0.0;  // fractions in [0, 1]
  double recall = 0.0;
  double f1 = 0.0;
  long true_positives = 0;
  long predicted = 0;
  long gold = 0;
};

// Position-insensitive: true positives are the multiset intersection size.
MorphemeScore morpheme_f1(std::span<const SegmentationPair> pairs,
                          std::string_view delimiters = igt::kDefaultDelimiters);
// Position-sensitive variant: morpheme i of the prediction must equal
// morpheme i of the gold analysis.
MorphemeScore morpheme_f1_positional(std::span<const SegmentationPair> pairs,
                                     std::string_view delimiters = igt::kDefaultDelimiters);

// Unit-cost insert/delete/substitute distance over code points.
std::size_t levenshtein(std::string_view a, std::string_view b);

long edit_distance_sum(std::span<const SegmentationPair> pairs);

struct WordDiagnostic {
  std::string gold;
  std::string predicted;
  std::size_t distance = 0;
};

struct EvalReport {
  double word_accuracy = 0.0;  // percentages
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double positional_f1 = 0.0;
  long edit_distance_sum = 0;
  std::vector<WordDiagnostic> per_word;
};

EvalReport evaluate(std::span<const SegmentationPair> pairs,
                    std::string_view delimiters = igt::kDefaultDelimiters);

}  // namespace mtseg::metrics
