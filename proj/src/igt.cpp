#include "mtseg/igt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <tuple>

#include "mtseg/error.hpp"
#include "mtseg/random.hpp"
#include "mtseg/unicode.hpp"

namespace mtseg::igt {
namespace {

struct RawBlock {
  int line = 0;
  std::vector<std::pair<int, std::string>> lines;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

// Returns the tier content if `line` starts with `marker` followed by
// whitespace or end of line.
std::optional<std::string_view> tier_content(std::string_view line, std::string_view marker) {
  if (line.substr(0, marker.size()) != marker) return std::nullopt;
  std::string_view rest = line.substr(marker.size());
  if (!rest.empty() && rest.front() != ' ' && rest.front() != '\t') return std::nullopt;
  return trim(rest);
}

void report(ParseResult& result, ParseMode mode, int line, std::string message) {
  if (mode == ParseMode::strict) throw ParseError("line " + std::to_string(line) + ": " + message, line);
  result.issues.push_back({line, std::move(message)});
}

void parse_block(const RawBlock& block, const TierMarkers& markers, ParseMode mode,
                 ParseResult& result) {
  struct Slot {
    const std::string* marker;
    const char* name;
    std::optional<std::string> value;
  };
  Slot slots[4] = {{&markers.transcription, "transcription", {}},
                   {&markers.segmentation, "segmentation", {}},
                   {&markers.gloss, "gloss", {}},
                   {&markers.translation, "translation", {}}};
  bool ok = true;
  for (const auto& [line_no, text] : block.lines) {
    for (auto& slot : slots) {
      if (auto content = tier_content(text, *slot.marker)) {
        if (slot.value) {
          report(result, mode, line_no, std::string("duplicate ") + slot.name + " tier");
          ok = false;
        }
        slot.value = unicode::nfc(*content);
        break;
      }
    }
    // Lines with other markers (e.g. part-of-speech tiers) are ignored.
  }
  for (int i = 0; i < 3; ++i) {
    if (!slots[i].value) {
      report(result, mode, block.line,
             std::string("missing ") + slots[i].name + " tier (" + *slots[i].marker + ")");
      ok = false;
    } else if (unicode::split_whitespace(*slots[i].value).empty()) {
      report(result, mode, block.line, std::string("empty ") + slots[i].name + " tier");
      ok = false;
    }
  }
  if (!ok) return;
  IGTEntry entry;
  entry.transcription = std::move(*slots[0].value);
  entry.segmentation = std::move(*slots[1].value);
  entry.gloss = std::move(*slots[2].value);
  if (slots[3].value) entry.translation = std::move(*slots[3].value);
  entry.line = block.line;
  result.entries.push_back(std::move(entry));
}

}  // namespace

ParseResult parse_igt(std::istream& in, const TierMarkers& markers, ParseMode mode) {
  ParseResult result;
  std::vector<RawBlock> blocks;
  RawBlock current;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    const std::string_view t = trim(line);
    if (t.empty()) {
      if (!current.lines.empty()) blocks.push_back(std::move(current));
      current = RawBlock{};
      continue;
    }
    if (current.lines.empty()) current.line = line_no;
    current.lines.emplace_back(line_no, std::string(t));
  }
  if (!current.lines.empty()) blocks.push_back(std::move(current));
  if (blocks.empty()) throw ParseError("empty corpus", 0);
  for (const auto& block : blocks) parse_block(block, markers, mode, result);
  if (result.entries.empty()) throw ParseError("empty corpus: no well-formed entries", 0);
  return result;
}

ParseResult parse_igt_corpus(const std::filesystem::path& path, const TierMarkers& markers,
                             ParseMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read IGT corpus: " + path.string());
  try {
    return parse_igt(in, markers, mode);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

Segmented split_morphemes(std::string_view token, std::string_view delimiters) {
  Segmented out;
  std::string current;
  for (char c : token) {
    if (delimiters.find(c) != std::string_view::npos) {
      out.morphemes.push_back(std::move(current));
      out.delimiters.push_back(c);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  out.morphemes.push_back(std::move(current));
  return out;
}

std::string join_morphemes(const Segmented& segmented) {
  std::string out;
  for (std::size_t i = 0; i < segmented.morphemes.size(); ++i) {
    if (i > 0) out.push_back(segmented.delimiters[i - 1]);
    out += segmented.morphemes[i];
  }
  return out;
}

WordExample make_example(std::string surface, std::string segmentation, std::string gloss,
                         std::string language, std::string_view delimiters) {
  if (surface.empty() || unicode::has_whitespace(surface))
    throw Error("surface form is empty or contains whitespace: '" + surface + "'");
  WordExample ex;
  ex.canonical_morphemes = split_morphemes(segmentation, delimiters).morphemes;
  ex.gloss_morphemes = split_morphemes(gloss, delimiters).morphemes;
  auto has_empty = [](const std::vector<std::string>& v) {
    return std::any_of(v.begin(), v.end(), [](const std::string& m) { return m.empty(); });
  };
  if (has_empty(ex.canonical_morphemes)) throw Error("empty morpheme in segmentation '" + segmentation + "'");
  if (has_empty(ex.gloss_morphemes)) throw Error("empty morpheme in gloss '" + gloss + "'");
  ex.alignment_warning = ex.canonical_morphemes.size() != ex.gloss_morphemes.size();
  ex.surface = std::move(surface);
  ex.segmentation = std::move(segmentation);
  ex.gloss = std::move(gloss);
  ex.language = std::move(language);
  return ex;
}

ExtractResult extract_word_examples(std::span<const IGTEntry> entries, const std::string& language,
                                    std::string_view delimiters) {
  ExtractResult result;
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const IGTEntry& entry = entries[e];
    const auto words = unicode::split_whitespace(entry.transcription);
    const auto segs = unicode::split_whitespace(entry.segmentation);
    const auto glosses = unicode::split_whitespace(entry.gloss);
    if (words.size() != segs.size() || words.size() != glosses.size()) {
      std::ostringstream msg;
      msg << "entry " << e << " (line " << entry.line << "): tier token counts " << words.size()
          << "/" << segs.size() << "/" << glosses.size() << " differ; entry skipped";
      result.warnings.push_back(msg.str());
      continue;
    }
    for (std::size_t i = 0; i < words.size(); ++i) {
      try {
        result.examples.push_back(make_example(words[i], segs[i], glosses[i], language, delimiters));
      } catch (const Error& err) {
        std::ostringstream msg;
        msg << "entry " << e << " (line " << entry.line << "), token " << i << ": " << err.what();
        result.warnings.push_back(msg.str());
      }
    }
  }
  return result;
}

DataSplit split_unique_words(std::span<const WordExample> examples, std::uint64_t seed) {
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, const WordExample*> unique;
  for (const auto& ex : examples) unique.try_emplace(Key{ex.surface, ex.segmentation, ex.gloss}, &ex);
  if (unique.size() < 5)
    throw Error("need at least 5 unique examples to split, got " + std::to_string(unique.size()));

  std::vector<WordExample> pool;
  pool.reserve(unique.size());
  for (const auto& [key, ex] : unique) pool.push_back(*ex);
  Rng rng(seed);
  seeded_shuffle(pool, rng);

  const std::size_t n = pool.size();
  const std::size_t n_dev = n / 5;
  const std::size_t n_test = n / 5;
  const std::size_t n_train = n - n_dev - n_test;
  DataSplit split;
  split.seed = seed;
  split.train.assign(pool.begin(), pool.begin() + static_cast<long>(n_train));
  split.dev.assign(pool.begin() + static_cast<long>(n_train),
                   pool.begin() + static_cast<long>(n_train + n_dev));
  split.test.assign(pool.begin() + static_cast<long>(n_train + n_dev), pool.end());
  return split;
}

std::vector<WordExample> take_fraction(std::span<const WordExample> train, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("train fraction must be in (0, 1]");
  auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(train.size()) + 1e-9));
  n = std::clamp<std::size_t>(n, std::min<std::size_t>(1, train.size()), train.size());
  return {train.begin(), train.begin() + static_cast<long>(n)};
}

void write_split_file(const std::filesystem::path& path, std::span<const WordExample> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& ex : examples) out << ex.surface << '\t' << ex.segmentation << '\t' << ex.gloss << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<WordExample> read_split_file(const std::filesystem::path& path,
                                         const std::string& language, std::string_view delimiters) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<WordExample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos)
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields",
                       line_no);
    try {
      out.push_back(make_example(line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1),
                                 line.substr(t2 + 1), language, delimiters));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  return out;
}

void write_split(const std::filesystem::path& dir, const DataSplit& split) {
  std::filesystem::create_directories(dir);
  write_split_file(dir / "train.tsv", split.train);
  write_split_file(dir / "dev.tsv", split.dev);
  write_split_file(dir / "test.tsv", split.test);
  std::ofstream(dir / "seed.txt") << split.seed << '\n';
}

DataSplit read_split(const std::filesystem::path& dir, const std::string& language,
                     std::string_view delimiters) {
  DataSplit split;
  split.train = read_split_file(dir / "train.tsv", language, delimiters);
  split.dev = read_split_file(dir / "dev.tsv", language, delimiters);
  split.test = read_split_file(dir / "test.tsv", language, delimiters);
  std::ifstream seed_in(dir / "seed.txt");
  if (seed_in) seed_in >> split.seed;
  return split;
}

}  // namespace mtseg::igt
