#include "mtseg/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include <unicode/utf8.h>

#include "mtseg/error.hpp"
#include "mtseg/unicode.hpp"

namespace mtseg::metrics {
namespace {

void require_nonempty(std::span<const SegmentationPair> pairs) {
  if (pairs.empty()) throw Error("cannot score an empty prediction list");
}

std::vector<std::string> morphemes(std::string_view text, std::string_view delimiters) {
  return igt::split_morphemes(unicode::nfc(text), delimiters).morphemes;
}

MorphemeScore finish(long tp, long predicted, long gold) {
  MorphemeScore s;
  s.true_positives = tp;
  s.predicted = predicted;
  s.gold = gold;
  s.precision = predicted > 0 ? static_cast<double>(tp) / predicted : 0.0;
  s.recall = gold > 0 ? static_cast<double>(tp) / gold : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

std::vector<UChar32> decode(std::string_view s) {
  std::vector<UChar32> out;
  const auto* p = reinterpret_cast<const uint8_t*>(s.data());
  const auto n = static_cast<int32_t>(s.size());
  for (int32_t i = 0; i < n;) {
    UChar32 c;
    U8_NEXT(p, i, n, c);
    out.push_back(c);
  }
  return out;
}

}  // namespace

double word_accuracy(std::span<const SegmentationPair> pairs) {
  require_nonempty(pairs);
  const auto correct = std::count_if(pairs.begin(), pairs.end(), [](const SegmentationPair& p) {
    return unicode::nfc(p.gold) == unicode::nfc(p.predicted);
  });
  return 100.0 * static_cast<double>(correct) / static_cast<double>(pairs.size());
}

MorphemeScore morpheme_f1(std::span<const SegmentationPair> pairs, std::string_view delimiters) {
  require_nonempty(pairs);
  long tp = 0, predicted = 0, gold = 0;
  for (const auto& pair : pairs) {
    std::map<std::string, long> counts;
    const auto g = morphemes(pair.gold, delimiters);
    const auto p = morphemes(pair.predicted, delimiters);
    for (const auto& m : g) ++counts[m];
    for (const auto& m : p) {
      auto it = counts.find(m);
      if (it != counts.end() && it->second > 0) {
        --it->second;
        ++tp;
      }
    }
    gold += static_cast<long>(g.size());
    predicted += static_cast<long>(p.size());
  }
  return finish(tp, predicted, gold);
}

MorphemeScore morpheme_f1_positional(std::span<const SegmentationPair> pairs, std::string_view delimiters) {
  require_nonempty(pairs);
  long tp = 0, predicted = 0, gold = 0;
  for (const auto& pair : pairs) {
    const auto g = morphemes(pair.gold, delimiters);
    const auto p = morphemes(pair.predicted, delimiters);
    for (std::size_t i = 0; i < std::min(g.size(), p.size()); ++i) tp += g[i] == p[i];
    gold += static_cast<long>(g.size());
    predicted += static_cast<long>(p.size());
  }
  return finish(tp, predicted, gold);
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  const auto x = decode(a);
  const auto y = decode(b);
  std::vector<std::size_t> row(y.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= x.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (x[i - 1] == y[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[y.size()];
}

long edit_distance_sum(std::span<const SegmentationPair> pairs) {
  require_nonempty(pairs);
  long total = 0;
  for (const auto& p : pairs)
    total += static_cast<long>(levenshtein(unicode::nfc(p.predicted), unicode::nfc(p.gold)));
  return total;
}

EvalReport evaluate(std::span<const SegmentationPair> pairs, std::string_view delimiters) {
  EvalReport r;
  r.word_accuracy = word_accuracy(pairs);
  const auto f = morpheme_f1(pairs, delimiters);
  r.precision = 100.0 * f.precision;
  r.recall = 100.0 * f.recall;
  r.f1 = 100.0 * f.f1;
  r.positional_f1 = 100.0 * morpheme_f1_positional(pairs, delimiters).f1;
  for (const auto& p : pairs) {
    const auto dist = levenshtein(unicode::nfc(p.predicted), unicode::nfc(p.gold));
    r.per_word.push_back({p.gold, p.predicted, dist});
    r.edit_distance_sum += static_cast<long>(dist);
  }
  return r;
}

}  // namespace mtseg::metrics
