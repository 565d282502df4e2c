#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mtseg/error.hpp"
#include "mtseg/igt.hpp"

using namespace mtseg;
using namespace mtseg::igt;

namespace {

const char* kGitksanBlock =
    "\\t Ii hahla'lsdi'y goohl IBM\n"
    "\\m ii hahla'lst-'y goo-hl IBM\n"
    "\\g CCNJ work-1SG.II LOC-CN IBM\n"
    "\\l And I worked for IBM.\n";

ParseResult parse_text(const std::string& text, ParseMode mode = ParseMode::lenient) {
  std::istringstream in(text);
  return parse_igt(in, {}, mode);
}

std::vector<WordExample> numbered(int n) {
  std::vector<WordExample> out;
  for (int i = 0; i < n; ++i) {
    const std::string s = "w" + std::to_string(i);
    out.push_back(make_example(s, s + "-a", "x" + std::to_string(i) + "-PL", "tst"));
  }
  return out;
}

}  // namespace

TEST_CASE("four-tier block parses into one entry") {
  const auto r = parse_text(kGitksanBlock);
  REQUIRE(r.entries.size() == 1);
  CHECK(r.issues.empty());
  const auto& e = r.entries[0];
  CHECK(e.transcription == "Ii hahla'lsdi'y goohl IBM");
  CHECK(e.segmentation == "ii hahla'lst-'y goo-hl IBM");
  CHECK(e.gloss == "CCNJ work-1SG.II LOC-CN IBM");
  REQUIRE(e.translation.has_value());
  CHECK(*e.translation == "And I worked for IBM.");
  CHECK(e.line == 1);
}

TEST_CASE("entries keep file order and line numbers") {
  const std::string text = std::string(kGitksanBlock) + "\n\n\\t a\n\\m a\n\\g A\n";
  const auto r = parse_text(text);
  REQUIRE(r.entries.size() == 2);
  CHECK(r.entries[1].transcription == "a");
  CHECK(r.entries[1].line == 7);
  CHECK_FALSE(r.entries[1].translation.has_value());
}

TEST_CASE("empty corpus is an error") {
  CHECK_THROWS_WITH_AS(parse_text(""), doctest::Contains("empty corpus"), ParseError);
  CHECK_THROWS_AS(parse_text("\n  \n\n"), ParseError);
}

TEST_CASE("missing gloss tier names the tier and line") {
  const std::string text = std::string(kGitksanBlock) + "\n\\t a b\n\\m a b\n\\l no gloss\n";
  SUBCASE("lenient collects") {
    const auto r = parse_text(text);
    CHECK(r.entries.size() == 1);
    REQUIRE(r.issues.size() == 1);
    CHECK(r.issues[0].line == 6);
    CHECK(r.issues[0].message.find("gloss") != std::string::npos);
  }
  SUBCASE("strict aborts") {
    try {
      parse_text(text, ParseMode::strict);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 6);
      CHECK(std::string(e.what()).find("gloss") != std::string::npos);
    }
  }
}

TEST_CASE("unreadable file") {
  CHECK_THROWS_AS(parse_igt_corpus("/nonexistent/corpus.txt"), IoError);
}

TEST_CASE("word extraction from the Gitksan block") {
  const auto r = parse_text(kGitksanBlock);
  const auto x = extract_word_examples(r.entries, "git");
  REQUIRE(x.examples.size() == 4);
  CHECK(x.warnings.empty());
  const auto& w = x.examples[1];
  CHECK(w.surface == "hahla'lsdi'y");
  CHECK(w.segmentation == "hahla'lst-'y");
  CHECK(w.canonical_morphemes == std::vector<std::string>{"hahla'lst", "'y"});
  CHECK(w.gloss_morphemes == std::vector<std::string>{"work", "1SG.II"});
  CHECK_FALSE(w.alignment_warning);
  const auto& ibm = x.examples[3];
  CHECK(ibm.surface == "IBM");
  CHECK(ibm.canonical_morphemes == std::vector<std::string>{"IBM"});
  CHECK(ibm.gloss_morphemes == std::vector<std::string>{"IBM"});
}

TEST_CASE("unequal tier token counts contribute nothing") {
  IGTEntry e{"a b c d", "a b c", "A B C D", std::nullopt, 12};
  const auto x = extract_word_examples(std::span(&e, 1), "tst");
  CHECK(x.examples.empty());
  REQUIRE(x.warnings.size() == 1);
  CHECK(x.warnings[0].find("entry 0") != std::string::npos);
}

TEST_CASE("morpheme/gloss count mismatch carries a warning flag") {
  const auto w = make_example("abc", "a-b-c", "x-Y", "tst");
  CHECK(w.alignment_warning);
  CHECK_THROWS_AS(make_example("ab", "a--b", "x-Y", "tst"), Error);
  CHECK_THROWS_AS(make_example("a b", "a", "x", "tst"), Error);
}

TEST_CASE("delimiters are configurable and joined back exactly") {
  const auto s = split_morphemes("lu=ka-ra", "-=");
  CHECK(s.morphemes == std::vector<std::string>{"lu", "ka", "ra"});
  CHECK(s.delimiters == "=-");
  CHECK(join_morphemes(s) == "lu=ka-ra");
  const auto only_dash = split_morphemes("lu=ka-ra", "-");
  CHECK(only_dash.morphemes == std::vector<std::string>{"lu=ka", "ra"});
}

TEST_CASE("tier conservation over extracted examples") {
  const auto x = extract_word_examples(parse_text(kGitksanBlock).entries, "git");
  for (const auto& w : x.examples) CHECK(join_morphemes(split_morphemes(w.segmentation)) == w.segmentation);
}

TEST_CASE("split 10 unique examples 6/2/2") {
  const auto ex = numbered(10);
  const auto s = split_unique_words(ex, 0);
  CHECK(s.train.size() == 6);
  CHECK(s.dev.size() == 2);
  CHECK(s.test.size() == 2);
  CHECK(s.seed == 0);
}

TEST_CASE("split sizes floor dev and test") {
  const auto s = split_unique_words(numbered(539), 1);
  CHECK(s.dev.size() == 107);
  CHECK(s.test.size() == 107);
  CHECK(s.train.size() == 325);
}

TEST_CASE("split is deterministic, deduplicated and disjoint") {
  auto ex = numbered(50);
  ex.push_back(ex[3]);
  ex.push_back(ex[7]);
  // Same surface, different analysis: kept as a distinct example.
  ex.push_back(make_example("w3", "w-3", "x-Y", "tst"));
  const auto a = split_unique_words(ex, 42);
  const auto b = split_unique_words(ex, 42);
  CHECK(a.train.size() + a.dev.size() + a.test.size() == 51);
  auto same = [](const std::vector<WordExample>& x, const std::vector<WordExample>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!x[i].same_triple(y[i])) return false;
    return true;
  };
  CHECK(same(a.train, b.train));
  CHECK(same(a.dev, b.dev));
  CHECK(same(a.test, b.test));
  const auto c = split_unique_words(ex, 43);
  CHECK_FALSE(same(a.train, c.train));

  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const auto* part : {&a.train, &a.dev, &a.test})
    for (const auto& w : *part) CHECK(seen.insert({w.surface, w.segmentation, w.gloss}).second);
}

TEST_CASE("fewer than 5 unique examples is an error") {
  auto ex = numbered(4);
  ex.push_back(ex[0]);
  CHECK_THROWS_AS(split_unique_words(ex, 0), Error);
}

TEST_CASE("take_fraction is a nested prefix") {
  const auto ex = numbered(10);
  const auto q = take_fraction(ex, 0.25);
  const auto h = take_fraction(ex, 0.5);
  CHECK(q.size() == 2);
  CHECK(h.size() == 5);
  for (std::size_t i = 0; i < q.size(); ++i) CHECK(q[i].same_triple(h[i]));
  CHECK(take_fraction(ex, 1.0).size() == 10);
  CHECK_THROWS_AS(take_fraction(ex, 0.0), ConfigError);
  CHECK_THROWS_AS(take_fraction(ex, 1.5), ConfigError);
}

TEST_CASE("split files round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "mtseg_test_igt_split";
  std::filesystem::remove_all(dir);
  const auto s = split_unique_words(numbered(20), 5);
  write_split(dir, s);
  const auto r = read_split(dir, "tst");
  REQUIRE(r.train.size() == s.train.size());
  CHECK(r.seed == 5);
  for (std::size_t i = 0; i < r.train.size(); ++i) CHECK(r.train[i].same_triple(s.train[i]));
  CHECK(r.train[0].language == "tst");

  std::ifstream in(dir / "train.tsv");
  std::string line;
  std::getline(in, line);
  CHECK(line == s.train[0].surface + "\t" + s.train[0].segmentation + "\t" + s.train[0].gloss);
  std::filesystem::remove_all(dir);
}
