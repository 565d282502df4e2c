#include "mtseg/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "mtseg/error.hpp"
#include "mtseg/unicode.hpp"

namespace mtseg {

std::string_view stream_name(Stream stream) noexcept {
  return stream == Stream::segmentation ? "segmentation" : "gloss";
}

namespace symbols {

std::string boundary(char delimiter) { return std::string{'<', delimiter, '>'}; }

bool is_boundary(std::string_view symbol) {
  return symbol.size() == 3 && symbol.front() == '<' && symbol.back() == '>' &&
         std::ispunct(static_cast<unsigned char>(symbol[1])) && symbol[1] != '<' && symbol[1] != '>';
}

bool is_control(std::string_view symbol) {
  return symbol == kPad || symbol == kBos || symbol == kEos || symbol == kUnk;
}

bool is_grammatical_label(std::string_view label) { return !unicode::has_lowercase(label); }

std::vector<std::string> tokenize_source(std::string_view surface) {
  return unicode::code_points(surface);
}

std::vector<std::string> tokenize_segmentation(const igt::Segmented& segmented) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < segmented.morphemes.size(); ++i) {
    if (i > 0) out.push_back(boundary(segmented.delimiters[i - 1]));
    for (auto& cp : unicode::code_points(segmented.morphemes[i])) out.push_back(std::move(cp));
  }
  return out;
}

std::vector<std::string> tokenize_gloss(const igt::Segmented& segmented) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < segmented.morphemes.size(); ++i) {
    if (i > 0) out.push_back(boundary(segmented.delimiters[i - 1]));
    const std::string& label = segmented.morphemes[i];
    if (is_grammatical_label(label)) {
      out.push_back(label);
    } else {
      for (auto& cp : unicode::code_points(label)) out.push_back(std::move(cp));
    }
  }
  return out;
}

std::vector<std::string> tokenize_gloss(std::span<const std::string> labels) {
  igt::Segmented s;
  s.morphemes.assign(labels.begin(), labels.end());
  s.delimiters.assign(labels.empty() ? 0 : labels.size() - 1, '-');
  return tokenize_gloss(s);
}

std::string detokenize(std::span<const std::string> symbols) {
  std::string out;
  for (const auto& s : symbols) {
    if (is_control(s)) continue;
    if (is_boundary(s))
      out.push_back(s[1]);
    else
      out += s;
  }
  return out;
}

}  // namespace symbols

Vocabulary::Vocabulary() {
  for (auto s : {symbols::kPad, symbols::kBos, symbols::kEos, symbols::kUnk}) {
    index_.emplace(std::string(s), size());
    symbols_.emplace_back(s);
  }
}

Vocabulary Vocabulary::from_symbols(std::vector<std::string> corpus_symbols) {
  std::sort(corpus_symbols.begin(), corpus_symbols.end());
  corpus_symbols.erase(std::unique(corpus_symbols.begin(), corpus_symbols.end()), corpus_symbols.end());
  Vocabulary v;
  for (auto& s : corpus_symbols) {
    if (s.empty() || symbols::is_control(s)) continue;
    v.index_.emplace(s, v.size());
    v.symbols_.push_back(std::move(s));
  }
  return v;
}

int Vocabulary::id(std::string_view symbol) const {
  const auto it = index_.find(symbol);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view symbol) const { return index_.find(symbol) != index_.end(); }

const std::string& Vocabulary::symbol(int id) const {
  if (id < 0 || id >= size()) throw Error("symbol id out of range: " + std::to_string(id));
  return symbols_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::corpus_symbols() const {
  return {symbols_.begin() + kReserved, symbols_.end()};
}

std::vector<int> Vocabulary::encode(std::span<const std::string> symbols) const {
  std::vector<int> ids;
  ids.reserve(symbols.size());
  for (const auto& s : symbols) ids.push_back(id(s));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(symbol(i));
  return out;
}

Vocabularies build_vocabularies(std::span<const igt::WordExample> train,
                                std::string_view delimiters) {
  if (train.empty()) throw Error("cannot build vocabularies from an empty training set");
  std::set<std::string> src, seg, gloss;
  for (const auto& ex : train) {
    for (auto& s : symbols::tokenize_source(ex.surface)) src.insert(std::move(s));
    for (auto& s : symbols::tokenize_segmentation(igt::split_morphemes(ex.segmentation, delimiters)))
      seg.insert(std::move(s));
    for (auto& s : symbols::tokenize_gloss(igt::split_morphemes(ex.gloss, delimiters)))
      gloss.insert(std::move(s));
  }
  return {Vocabulary::from_symbols({src.begin(), src.end()}),
          Vocabulary::from_symbols({seg.begin(), seg.end()}),
          Vocabulary::from_symbols({gloss.begin(), gloss.end()})};
}

EncodedExample encode_example(const igt::WordExample& example, const Vocabularies& vocabs,
                              std::string_view delimiters) {
  EncodedExample out;
  out.source = vocabs.source.encode(symbols::tokenize_source(example.surface));
  out.segmentation = vocabs.segmentation.encode(
      symbols::tokenize_segmentation(igt::split_morphemes(example.segmentation, delimiters)));
  out.gloss = vocabs.gloss.encode(symbols::tokenize_gloss(igt::split_morphemes(example.gloss, delimiters)));
  return out;
}

}  // namespace mtseg
