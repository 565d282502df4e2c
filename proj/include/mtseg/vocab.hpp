#pragma once

// Symbol streams and vocabularies. Three streams exist: source characters,
// canonical segmentation characters with boundary symbols, and gloss
// symbols where lexical labels are spelled out and grammatical labels stay
// atomic ("work-1SG.II" -> w o r k <-> 1SG.II).

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtseg/igt.hpp"

namespace mtseg {

enum class Stream { segmentation, gloss };

std::string_view stream_name(Stream stream) noexcept;

namespace symbols {

inline constexpr std::string_view kPad = "<pad>";
inline constexpr std::string_view kBos = "<s>";
inline constexpr std::string_view kEos = "</s>";
inline constexpr std::string_view kUnk = "<unk>";

// "<->" for '-'. Labels are cut on delimiters, so no corpus symbol can
// contain a delimiter and collide with a boundary symbol.
std::string boundary(char delimiter);
bool is_boundary(std::string_view symbol);
bool is_control(std::string_view symbol);

// A grammatical label has no lowercase letter ("1SG.II", "CCNJ").
bool is_grammatical_label(std::string_view label);

std::vector<std::string> tokenize_source(std::string_view surface);
std::vector<std::string> tokenize_segmentation(const igt::Segmented& segmented);
std::vector<std::string> tokenize_gloss(const igt::Segmented& segmented);
// Labels joined with '-'.
std::vector<std::string> tokenize_gloss(std::span<const std::string> labels);

// Inverse of both target tokenizers: drops control symbols, renders
// boundaries as their delimiter and concatenates everything else.
std::string detokenize(std::span<const std::string> symbols);

}  // namespace symbols

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  Vocabulary();
  // Sorted, deduplicated; reserved names are dropped from the input.
  static Vocabulary from_symbols(std::vector<std::string> corpus_symbols);

  int size() const { return static_cast<int>(symbols_.size()); }
  int id(std::string_view symbol) const;  // kUnk when absent
  bool contains(std::string_view symbol) const;
  const std::string& symbol(int id) const;
  // Corpus symbols only, in id order.
  std::vector<std::string> corpus_symbols() const;

  std::vector<int> encode(std::span<const std::string> symbols) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

  bool operator==(const Vocabulary& other) const { return symbols_ == other.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, int, std::less<>> index_;
};

struct Vocabularies {
  Vocabulary source;
  Vocabulary segmentation;
  Vocabulary gloss;
};

// Built from training examples only; throws on an empty set.
Vocabularies build_vocabularies(std::span<const igt::WordExample> train,
                                std::string_view delimiters = igt::kDefaultDelimiters);

struct EncodedExample {
  std::vector<int> source;
  std::vector<int> segmentation;  // without BOS/EOS
  std::vector<int> gloss;         // without BOS/EOS
};

EncodedExample encode_example(const igt::WordExample& example, const Vocabularies& vocabs,
                              std::string_view delimiters = igt::kDefaultDelimiters);

}  // namespace mtseg
