#pragma once

// Interlinear glossed text: corpus parsing, word-level example extraction,
// unique-word splitting and the split file format.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mtseg::igt {

inline constexpr std::string_view kDefaultDelimiters = "-=";

// Backslash tier markers of the SIGMORPHON 2023 release.
struct TierMarkers {
  std::string transcription = "\\t";
  std::string segmentation = "\\m";
  std::string gloss = "\\g";
  std::string translation = "\\l";
};

struct IGTEntry {
  std::string transcription;
  std::string segmentation;
  std::string gloss;
  std::optional<std::string> translation;
  int line = 0;  // first line of the block, 1-based
};

struct ParseIssue {
  int line = 0;
  std::string message;
};

struct ParseResult {
  std::vector<IGTEntry> entries;
  std::vector<ParseIssue> issues;
};

enum class ParseMode { lenient, strict };

// Strict mode throws ParseError on the first malformed entry; lenient mode
// records it in `issues` and continues. Both throw on an empty corpus.
ParseResult parse_igt(std::istream& in, const TierMarkers& markers = {},
                      ParseMode mode = ParseMode::lenient);
ParseResult parse_igt_corpus(const std::filesystem::path& path, const TierMarkers& markers = {},
                             ParseMode mode = ParseMode::lenient);

// A token cut on morpheme delimiters. delimiters[i] sits between
// morphemes[i] and morphemes[i + 1].
struct Segmented {
  std::vector<std::string> morphemes;
  std::string delimiters;
};

Segmented split_morphemes(std::string_view token, std::string_view delimiters = kDefaultDelimiters);
std::string join_morphemes(const Segmented& segmented);

struct WordExample {
  std::string surface;
  std::string segmentation;  // canonical tier token, e.g. "hahla'lst-'y"
  std::string gloss;         // gloss tier token, e.g. "work-1SG.II"
  std::vector<std::string> canonical_morphemes;
  std::vector<std::string> gloss_morphemes;
  std::string language;
  bool alignment_warning = false;  // morpheme and gloss counts differ
  bool synthetic = false;          // provenance: generated, not gold

  bool same_triple(const WordExample& other) const {
    return surface == other.surface && segmentation == other.segmentation && gloss == other.gloss;
  }
};

// Builds a validated example. Throws Error if any morpheme is empty or the
// surface form contains whitespace.
WordExample make_example(std::string surface, std::string segmentation, std::string gloss,
                         std::string language,
                         std::string_view delimiters = kDefaultDelimiters);

struct ExtractResult {
  std::vector<WordExample> examples;
  std::vector<std::string> warnings;
};

ExtractResult extract_word_examples(std::span<const IGTEntry> entries, const std::string& language,
                                    std::string_view delimiters = kDefaultDelimiters);

struct DataSplit {
  std::vector<WordExample> train;
  std::vector<WordExample> dev;
  std::vector<WordExample> test;
  std::uint64_t seed = 0;
};

// Deduplicates on (surface, segmentation, gloss), shuffles with `seed` and
// cuts 6:2:2 with dev and test sizes floored, remainder to train.
DataSplit split_unique_words(std::span<const WordExample> examples, std::uint64_t seed);

// Nested prefix of the (already shuffled) train part.
std::vector<WordExample> take_fraction(std::span<const WordExample> train, double fraction);

// One record per line: surface<TAB>segmentation<TAB>gloss.
void write_split_file(const std::filesystem::path& path, std::span<const WordExample> examples);
std::vector<WordExample> read_split_file(const std::filesystem::path& path,
                                         const std::string& language,
                                         std::string_view delimiters = kDefaultDelimiters);

void write_split(const std::filesystem::path& dir, const DataSplit& split);
DataSplit read_split(const std::filesystem::path& dir, const std::string& language,
                     std::string_view delimiters = kDefaultDelimiters);

}  // namespace mtseg::igt
