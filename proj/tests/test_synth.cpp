#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>

#include "mtseg/error.hpp"
#include "mtseg/synth.hpp"

using namespace mtseg;
using namespace mtseg::synth;
namespace fs = std::filesystem;

namespace {

const fs::path kData = fs::path(MTSEG_TEST_DATA) / "synth";

igt::DataSplit ntu() { return igt::read_split(kData / "ntu", "ntu"); }

std::vector<PromptJob> jobs(const std::vector<igt::WordExample>& train) {
  const auto inventory = extract_inventory(train);
  PromptOptions po;
  po.language_name = language_display_name("ntu");
  std::vector<PromptJob> out;
  for (const auto& s : mine_stems(train)) out.push_back({build_prompt(s, inventory, po), s});
  return out;
}

GenerateOptions fast(std::size_t budget) {
  GenerateOptions o;
  o.budget = budget;
  o.requests_per_second = 0.0;
  return o;
}

struct Expected {
  const char* stem;
  const char* surface;
  const char* reason;
};

// Every record produced from the fixture responses, in prompt order.
const std::vector<Expected> kPartition = {
    {"ki", "kinzbe", ""},         {"ki", "kitrxq", "inventory"},  {"ki", "lutr", "stem"},
    {"ki", "ki bo", "malformed"}, {"ki", "kinzbe", "duplicate"},  {"lu", "", "unparseable"},
    {"pr", "prtrnzpe", ""},       {"pr", "prnzmk", "alignment"},  {"pr", "prnzpe", "duplicate"},
    {"pr", "prmkbe", ""},         {"sa", "", "unparseable"},
};

class CountingClient : public LlmClient {
 public:
  explicit CountingClient(fs::path dir) : inner_(std::move(dir)) {}
  std::string complete(const std::string& prompt) override {
    ++calls;
    return inner_.complete(prompt);
  }
  int calls = 0;

 private:
  FixtureClient inner_;
};

class FlakyClient : public LlmClient {
 public:
  std::string complete(const std::string&) override {
    if (++calls < 3) throw TransportError("503");
    return "word: prtrnz, canonical segmentation: pr-tr-nz, gloss: go-GDIR.IN-3AUG";
  }
  int calls = 0;
};

}  // namespace

TEST_CASE("alternating words") {
  const std::vector<igt::WordExample> words = {
      igt::make_example("hahla'lsdi'y", "hahla'lst-'y", "work-1SG.II", "git"),
      igt::make_example("goohl", "goo-hl", "LOC-CN", "git"),
  };
  const auto alt = find_alternating_words(words);
  REQUIRE(alt.size() == 1);
  CHECK(alt[0].surface == "hahla'lsdi'y");
  CHECK(find_alternating_words({}).empty());
}

TEST_CASE("stem mining and inventory on the fixture split") {
  const auto split = ntu();
  REQUIRE(split.train.size() == 12);
  const auto stems = mine_stems(split.train);
  REQUIRE(stems.size() == 4);
  const std::vector<std::pair<std::string, std::string>> expect = {{"ki", "eat"}, {"lu", "see"}, {"pr", "go"},
                                                                   {"sa", "fish"}};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(stems[i].stem == expect[i].first);
    CHECK(stems[i].meaning == expect[i].second);
    CHECK(!stems[i].examples.empty());
    CHECK(stems[i].examples.size() <= 5);
  }
  // Alternating words come first.
  CHECK(stems[2].examples[0].surface == "prtrp");

  const auto inv = extract_inventory(split.train);
  CHECK(inv.entries.size() == 4);
  CHECK(inv.entries.at("3AUG") == std::vector<std::string>{"nz"});
  CHECK(inv.entries.at("PDIR.HITHER") == std::vector<std::string>{"mq"});
  CHECK(inv.contains("COS"));
  CHECK_FALSE(inv.contains("go"));
}

TEST_CASE("prompt contents") {
  const auto split = ntu();
  const auto js = jobs(split.train);
  REQUIRE(js.size() == 4);
  const auto& p = js[2].prompt;
  CHECK(p.find("Natügu") != std::string::npos);
  CHECK(p.find("\"pr\"") != std::string::npos);
  CHECK(p.find("\"go\"") != std::string::npos);
  CHECK(p.find("surface form: prtrp, canonical segmentation: pr-tr-mq, gloss: go-GDIR.IN-PDIR.HITHER") !=
        std::string::npos);
  CHECK(p.find("Grammatical gloss \"3AUG\", its morpheme is \"nz\"") != std::string::npos);
  CHECK(p.find("generate 3 new words") != std::string::npos);
  CHECK(p.find("2-5") != std::string::npos);
  CHECK(prompt_id(p) == "12e68175406f32a0");
  CHECK(prompt_id(p).size() == 16);
  CHECK(prompt_id(p) != prompt_id(p + " "));

  PromptOptions po;
  po.n_words = 0;
  const auto inv = extract_inventory(split.train);
  CHECK_THROWS_AS(build_prompt(js[0].stem, inv, po), ConfigError);
  CHECK_THROWS_AS(build_prompt(js[0].stem, MorphemeInventory{}, PromptOptions{}), ConfigError);
  CHECK(language_display_name("lez") == "Lezgi");
  CHECK(language_display_name("xyz") == "xyz");
}

TEST_CASE("response parsing") {
  const auto one = parse_response("word: prtrnzpe, canonical segmentation: pr-tr-nz-pe, gloss: go-GDIR.IN-3AUG-COS");
  REQUIRE(one.size() == 1);
  CHECK(one[0].surface == "prtrnzpe");
  CHECK(one[0].segmentation == "pr-tr-nz-pe");
  CHECK(one[0].gloss == "go-GDIR.IN-3AUG-COS");

  const auto md = parse_response(
      "1. **Surface form**: `abc`, **canonical segmentation**: ab-c, **gloss**: x-Y.\n"
      "- \"word: de, canonical segmentation: d-e, gloss: z-W\"\n");
  REQUIRE(md.size() == 2);
  CHECK(md[0].surface == "abc");
  CHECK(md[0].gloss == "x-Y");
  CHECK(md[1].surface == "de");
  CHECK(md[1].gloss == "z-W");

  CHECK(parse_response("").empty());
  CHECK(parse_response("I cannot help with that.").empty());
}

TEST_CASE("validator rules") {
  const auto split = ntu();
  const auto inv = extract_inventory(split.train);
  const Validator v(inv, split.train);
  const auto stem = mine_stems(split.train)[2];
  REQUIRE(stem.stem == "pr");
  CHECK(v.check({"prtrnzpe", "pr-tr-nz-pe", "go-GDIR.IN-3AUG-COS"}, stem).empty());
  CHECK(v.check({"prnzmk", "pr-nz-mq", "go-3AUG"}, stem) == "alignment");
  CHECK(v.check({"kitr", "ki-tr", "eat-GDIR.IN"}, stem) == "stem");
  CHECK(v.check({"prtr", "pr-tr", "walk-GDIR.IN"}, stem) == "stem");
  CHECK(v.check({"prxq", "pr-xq", "go-FUT"}, stem) == "inventory");
  CHECK(v.check({"prnzpe", "pr-nz-pe", "go-3AUG-COS"}, stem) == "duplicate");
  CHECK(v.check({"pr tr", "pr-tr", "go-GDIR.IN"}, stem) == "malformed");
  CHECK(v.check({"prtr", "pr--tr", "go--GDIR.IN"}, stem) == "malformed");
  CHECK(v.check({"", "pr", "go"}, stem) == "malformed");
}

TEST_CASE("fixture generation gives the frozen partition") {
  const auto split = ntu();
  const auto js = jobs(split.train);
  const auto inv = extract_inventory(split.train);
  const Validator v(inv, split.train);
  FixtureClient client(kData / "fixtures");
  const auto records = generate(client, js, v, fast(100));
  REQUIRE(records.size() == kPartition.size());
  std::map<std::string, int> counts;
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].stem == kPartition[i].stem);
    CHECK(records[i].surface == kPartition[i].surface);
    CHECK(records[i].reason == kPartition[i].reason);
    CHECK((records[i].status == Status::accepted) == records[i].reason.empty());
    CHECK(records[i].prompt_id.size() == 16);
    ++counts[records[i].reason];
  }
  CHECK(counts[""] == 3);
  CHECK(counts["unparseable"] == 2);
  CHECK(counts["duplicate"] == 2);

  // Every accepted triple passes the rules on its own.
  for (const auto& r : records) {
    if (r.status != Status::accepted) continue;
    const auto it = std::find_if(js.begin(), js.end(), [&](const PromptJob& j) { return j.stem.stem == r.stem; });
    REQUIRE(it != js.end());
    CHECK(v.check({r.surface, r.segmentation, r.gloss}, it->stem).empty());
  }

  const auto pool = accepted_examples(records, "ntu");
  REQUIRE(pool.size() == 3);
  CHECK(pool[0].surface == "kinzbe");
  CHECK(pool[1].surface == "prtrnzpe");
  CHECK(pool[2].surface == "prmkbe");
  for (const auto& w : pool) CHECK(w.synthetic);
}

TEST_CASE("budget caps accepted examples") {
  const auto split = ntu();
  const auto js = jobs(split.train);
  const auto inv = extract_inventory(split.train);
  const Validator v(inv, split.train);
  FixtureClient client(kData / "fixtures");
  const auto records = generate(client, js, v, fast(2));
  const auto accepted = std::count_if(records.begin(), records.end(),
                                      [](const SyntheticExample& r) { return r.status == Status::accepted; });
  CHECK(accepted == 2);
  CHECK(std::any_of(records.begin(), records.end(), [](const SyntheticExample& r) { return r.reason == "budget"; }));
  CHECK_THROWS_AS(generate(client, js, v, fast(0)), ConfigError);
}

TEST_CASE("cache is reused and generation is deterministic") {
  const auto split = ntu();
  const auto js = jobs(split.train);
  const auto inv = extract_inventory(split.train);
  const Validator v(inv, split.train);
  const auto path = fs::temp_directory_path() / "mtseg_test_synth.jsonl";
  fs::remove(path);

  CountingClient first(kData / "fixtures");
  SynthCache cache(path);
  const auto a = generate(first, js, v, fast(100), &cache);
  CHECK(first.calls == 4);

  CountingClient second(kData / "fixtures");
  SynthCache reopened(path);
  const auto b = generate(second, js, v, fast(100), &reopened);
  CHECK(second.calls == 0);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].surface == b[i].surface);
    CHECK(a[i].reason == b[i].reason);
  }
  CHECK(reopened.records().size() == a.size());
  fs::remove(path);
}

TEST_CASE("transport errors are retried") {
  const auto split = ntu();
  const auto js = jobs(split.train);
  const auto inv = extract_inventory(split.train);
  const Validator v(inv, split.train);
  std::vector<PromptJob> one = {js[2]};
  FlakyClient client;
  auto o = fast(10);
  o.initial_backoff = std::chrono::milliseconds(1);
  const auto records = generate(client, one, v, o);
  CHECK(client.calls == 3);
  REQUIRE(records.size() == 1);
  CHECK(records[0].status == Status::accepted);

  FlakyClient never;
  o.max_retries = 1;
  CHECK_THROWS_AS(generate(never, one, v, o), Error);
}

TEST_CASE("mixing") {
  CHECK(mix_count(1236, 0.25) == 309);
  CHECK(mix_count(12, 0.75) == 9);
  CHECK(mix_count(12, 0.0) == 0);

  const auto split = ntu();
  const std::vector<igt::WordExample> pool = {
      igt::make_example("kinzbe", "ki-nz-pe", "eat-3AUG-COS", "ntu"),
      igt::make_example("prtrnzpe", "pr-tr-nz-pe", "go-GDIR.IN-3AUG-COS", "ntu"),
      igt::make_example("prmkbe", "pr-mq-pe", "go-PDIR.HITHER-COS", "ntu"),
  };
  const auto same = mix(split.train, pool, 0.0, 1);
  REQUIRE(same.size() == split.train.size());
  for (std::size_t i = 0; i < same.size(); ++i) CHECK(same[i].surface == split.train[i].surface);

  const auto a = mix(split.train, pool, 0.25, 5);
  const auto b = mix(split.train, pool, 0.25, 5);
  REQUIRE(a.size() == 15);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].surface == b[i].surface);
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    CHECK(a[i].surface == split.train[i].surface);
    CHECK(a[i].segmentation == split.train[i].segmentation);
    CHECK(a[i].gloss == split.train[i].gloss);
  }
  CHECK_THROWS_AS(mix(split.train, pool, 0.5, 5), Error);
}
