#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>

#include "mtseg/decoding.hpp"
#include "mtseg/random.hpp"
#include "mtseg/training.hpp"
#include "scorers.hpp"
#include "toy_language.hpp"

using namespace mtseg;
using namespace toy;

namespace {

BeamOptions beam(int width, int max_len) {
  BeamOptions o;
  o.beam_width = width;
  o.max_len = max_len;
  return o;
}

}  // namespace

TEST_CASE("greedy trap: beam 2 recovers the enumerated optimum") {
  const auto s = greedy_trap();
  const double best = enumerate_best(s, 4);
  CHECK(best == doctest::Approx(std::log(0.36)));

  const auto g = greedy_search(s, 8);
  CHECK(g.tokens == std::vector<int>{Vocabulary::kBos, A, A, Vocabulary::kEos});
  CHECK(g.log_prob == doctest::Approx(std::log(0.12)));

  const auto b1 = beam_search(s, beam(1, 8));
  CHECK(b1.tokens == g.tokens);
  const auto b2 = beam_search(s, beam(2, 8));
  CHECK(b2.finished);
  CHECK(b2.tokens == std::vector<int>{Vocabulary::kBos, B, Vocabulary::kEos});
  CHECK(b2.log_prob == doctest::Approx(best));
}

TEST_CASE("beam 1 equals greedy on 100 random inputs") {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto s = random_scorer(seed, 7);
    const auto g = greedy_search(s, 10);
    const auto b = beam_search(s, beam(1, 10));
    CHECK(g.tokens == b.tokens);
    CHECK(g.log_prob == doctest::Approx(b.log_prob).epsilon(1e-12));
    CHECK(g.truncated == b.truncated);
  }
}

TEST_CASE("wider beams never return a worse hypothesis on random scorers") {
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    const auto s = random_scorer(seed, 6);
    double prev = kNegInf;
    for (int w = 1; w <= 6; ++w) {
      const auto h = beam_search(s, beam(w, 5));
      if (!h.finished) continue;
      CHECK(h.log_prob >= prev - 1e-12);
      prev = h.log_prob;
      ++checked;
    }
    // A beam as wide as the search space is exact.
    const auto exact = beam_search(s, beam(6 * 6 * 6 * 6 * 6, 5));
    CHECK(exact.log_prob == doctest::Approx(enumerate_best(s, 4)));
  }
  CHECK(checked > 0);
}

TEST_CASE("hypothesis invariants") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto s = random_scorer(seed, 8);
    const auto h = beam_search(s, beam(3, 12));
    REQUIRE(!h.tokens.empty());
    CHECK(h.tokens.front() == Vocabulary::kBos);
    if (h.finished) CHECK(h.tokens.back() == Vocabulary::kEos);
    for (std::size_t i = 1; i < h.tokens.size(); ++i) {
      CHECK(h.tokens[i] != Vocabulary::kPad);
      CHECK(h.tokens[i] != Vocabulary::kBos);
    }
    CHECK(h.log_prob <= 0.0);
  }
}

TEST_CASE("no EOS within max_len gives a truncated hypothesis") {
  TableScorer s;
  s.vocab = 5;
  s.dist = [](const std::vector<int>&) { return std::vector<double>{0, 0, 0, 0.5, 0.5}; };
  const auto h = beam_search(s, beam(2, 4));
  CHECK_FALSE(h.finished);
  CHECK(h.truncated);
  CHECK(h.tokens.size() == 5);
  CHECK_THROWS_AS(beam_search(s, beam(0, 4)), std::invalid_argument);
}

TEST_CASE("ties prefer the lexicographically smaller id sequence") {
  TableScorer s;
  s.vocab = 5;
  s.dist = [](const std::vector<int>& prefix) {
    if (prefix.size() == 1) return std::vector<double>{0, 0, 0, 0.5, 0.5};
    return std::vector<double>{0, 0, 1.0, 0, 0};
  };
  const auto h = beam_search(s, beam(3, 5));
  CHECK(h.tokens == std::vector<int>{Vocabulary::kBos, 3, Vocabulary::kEos});
}

TEST_CASE("default max_len") {
  CHECK(default_max_len(5) == 18);
  CHECK(default_max_len(0) == 8);
}

TEST_CASE("detokenize segmentation and gloss hypotheses") {
  const auto seg_vocab = Vocabulary::from_symbols({"h", "a", "p", "y", "n", "e", "s", symbols::boundary('-')});
  std::vector<int> ids = {Vocabulary::kBos};
  for (const char* c : {"h", "a", "p", "p", "y"}) ids.push_back(seg_vocab.id(c));
  ids.push_back(seg_vocab.id(symbols::boundary('-')));
  for (const char* c : {"n", "e", "s", "s"}) ids.push_back(seg_vocab.id(c));
  ids.push_back(Vocabulary::kEos);
  const auto t = detokenize(Hypothesis{ids, -1.0, true, false}, seg_vocab);
  CHECK(t.text == "happy-ness");
  CHECK_FALSE(t.truncated);

  const auto gloss_vocab = Vocabulary::from_symbols({"w", "o", "r", "k", "1SG.II", symbols::boundary('-')});
  std::vector<int> g = {Vocabulary::kBos};
  for (const char* c : {"w", "o", "r", "k"}) g.push_back(gloss_vocab.id(c));
  g.push_back(gloss_vocab.id(symbols::boundary('-')));
  g.push_back(gloss_vocab.id("1SG.II"));
  g.push_back(Vocabulary::kEos);
  CHECK(detokenize(Hypothesis{g, -1.0, true, false}, gloss_vocab).text == "work-1SG.II");

  std::vector<int> cut(ids.begin(), ids.begin() + 4);
  const auto tr = detokenize(Hypothesis{cut, -3.0, false, true}, seg_vocab);
  CHECK(tr.text == "hap");
  CHECK(tr.truncated);
}

TEST_CASE("predictions file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "mtseg_test_predictions.tsv";
  const std::vector<Prediction> p = {{"happiness", "happy-ness", "happy-NMLZ"}, {"walded", "walt-ed", ""}};
  write_predictions(path, p);
  const auto r = read_predictions(path);
  REQUIRE(r.size() == 2);
  CHECK(r[0].surface == "happiness");
  CHECK(r[0].segmentation == "happy-ness");
  CHECK(r[0].gloss == "happy-NMLZ");
  CHECK(r[1].gloss.empty());
  std::filesystem::remove(path);
}

TEST_CASE("overfit toy model segments happiness as happy-ness") {
  const auto words = toy::sample(32, 3);
  REQUIRE(words.front().surface == "happiness");
  const auto vocabs = build_vocabularies(words);
  ModelConfig mc;
  mc.encoder_layers = 2;
  mc.decoder_layers = 2;
  mc.embedding_dim = 64;
  mc.hidden_dim = 128;
  mc.dropout = mc.attention_dropout = 0.0;
  SegGlossModel<float> model(mc, vocab_sizes(vocabs), 7);
  TrainConfig tc;
  tc.max_epochs = 120;
  tc.dev_every = 40;
  tc.seed = 7;
  train(model, vocabs, words, words, tc);

  const std::vector<std::string> surfaces = {"happiness"};
  const auto pred = predict(model, vocabs, surfaces, BeamOptions{}, true);
  CHECK(pred[0].segmentation == "happy-ness");
  CHECK(pred[0].gloss == "happy-NMLZ");

  SUBCASE("beam 1 equals greedy on the trained model") {
    for (const auto& w : words) {
      const auto src = encode_example(w, vocabs).source;
      BeamOptions o;
      o.beam_width = 1;
      const auto b = beam_search(model, Stream::segmentation, src, o);
      const auto g = greedy_decode(model, Stream::segmentation, src);
      CHECK(b.tokens == g.tokens);
    }
  }
  SUBCASE("threaded prediction keeps input order") {
    std::vector<std::string> all;
    for (const auto& w : words) all.push_back(w.surface);
    const auto one = predict(model, vocabs, all, BeamOptions{}, false, 1);
    const auto three = predict(model, vocabs, all, BeamOptions{}, false, 3);
    REQUIRE(one.size() == three.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
      CHECK(one[i].surface == all[i]);
      CHECK(one[i].segmentation == three[i].segmentation);
    }
  }
}
