#include <doctest.h>

#include <cmath>
#include <vector>

#include "mtseg/error.hpp"
#include "mtseg/model.hpp"
#include "mtseg/random.hpp"
#include "mtseg/training.hpp"

using namespace mtseg;

namespace {

ModelConfig tiny_config(int layers = 1) {
  ModelConfig c;
  c.encoder_layers = layers;
  c.decoder_layers = layers;
  c.attention_heads = 2;
  c.embedding_dim = 8;
  c.hidden_dim = 8;
  c.dropout = 0.0;
  c.attention_dropout = 0.0;
  c.max_positions = 32;
  return c;
}

std::vector<int> random_ids(Rng& rng, int len, int vocab) {
  std::vector<int> ids;
  for (int i = 0; i < len; ++i)
    ids.push_back(Vocabulary::kReserved + static_cast<int>(uniform_below(rng, vocab - Vocabulary::kReserved)));
  return ids;
}

std::vector<EncodedExample> random_examples(Rng& rng, int n, const VocabSizes& v) {
  std::vector<EncodedExample> out;
  for (int i = 0; i < n; ++i) {
    EncodedExample e;
    e.source = random_ids(rng, 2 + static_cast<int>(uniform_below(rng, 4)), v.source);
    e.segmentation = random_ids(rng, 1 + static_cast<int>(uniform_below(rng, 4)), v.segmentation);
    e.gloss = random_ids(rng, 1 + static_cast<int>(uniform_below(rng, 3)), v.gloss);
    out.push_back(std::move(e));
  }
  return out;
}

template <typename T>
JointLoss batch_loss(SegGlossModel<T>& model, const Batch& batch, double lambda, bool backward) {
  TrainCache<T> cache;
  Matrix<T> seg, gloss, dseg, dgloss;
  const bool g = batch.has_gloss;
  model.forward_train(batch, nn::ForwardMode{}, cache, seg, g ? &gloss : nullptr);
  const JointLoss loss = joint_loss<T>(seg, batch.segmentation.output, g ? &gloss : nullptr,
                                       g ? std::span<const int>(batch.gloss.output) : std::span<const int>{}, lambda,
                                       &dseg, g ? &dgloss : nullptr);
  if (backward) {
    model.zero_grad();
    model.backward_train(batch, cache, dseg, g ? &dgloss : nullptr);
  }
  return loss;
}

long linear(long in, long out) { return in * out + out; }

}  // namespace

TEST_CASE("parameter count matches the closed form") {
  ModelConfig c;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.embedding_dim = 8;
  c.hidden_dim = 16;
  c.attention_heads = 4;
  const VocabSizes v{10, 10, 10};
  const long d = 8, h = 16, V = 10;
  const long attn = 4 * linear(d, d);
  const long ffn = linear(d, h) + linear(h, d);
  const long ln = 2 * d;
  const long encoder = V * d + attn + ffn + 2 * ln + ln;
  const long decoder = V * d + 2 * attn + ffn + 3 * ln + ln + V * d;
  CHECK(encoder == 696);
  CHECK(decoder == 1080);

  SegGlossModel<float> multi(c, v, 1);
  CHECK(multi.count_parameters() == encoder + 2 * decoder);
  CHECK(multi.count_parameters() == 2856);
  c.multitask = false;
  SegGlossModel<float> single(c, v, 1);
  CHECK(single.count_parameters() == encoder + decoder);
  CHECK(multi.count_parameters() - single.count_parameters() == decoder);
  CHECK_FALSE(single.has_gloss_decoder());

  SegGlossModel<float> again(c, v, 99);
  CHECK(again.count_parameters() == single.count_parameters());
}

TEST_CASE("config validation") {
  ModelConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.attention_heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.hidden_dim = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("encode shape and padding mask") {
  SegGlossModel<double> m(tiny_config(), {9, 8, 8}, 3);
  const std::vector<std::vector<int>> seqs = {{4, 5, 6, 7, 8}, {4, 5, 6}};
  const auto batch = PaddedBatch::from_sequences(seqs);
  const auto s = m.encode(batch);
  CHECK(s.batch == 2);
  CHECK(s.width == 5);
  CHECK(s.dim == 8);
  CHECK(s.data.size() == 2u * 5 * 8);
  CHECK_FALSE(s.masked(1, 2));
  CHECK(s.masked(1, 3));
  CHECK(s.masked(1, 4));
  for (int t = 3; t < 5; ++t)
    for (int k = 0; k < 8; ++k) CHECK(s.at(1, t)[k] == 0.0);

  // Padding does not leak into the shorter word.
  const auto alone = m.encode_word(seqs[1]);
  for (int t = 0; t < 3; ++t)
    for (int k = 0; k < 8; ++k) CHECK(s.at(1, t)[k] == doctest::Approx(alone(t, k)).epsilon(1e-12));
}

TEST_CASE("duplicated words encode identically") {
  SegGlossModel<float> m(tiny_config(2), {9, 8, 8}, 3);
  const std::vector<std::vector<int>> seqs = {{4, 6, 8}, {4, 6, 8}};
  const auto s = m.encode(PaddedBatch::from_sequences(seqs));
  for (int t = 0; t < 3; ++t)
    for (int k = 0; k < 8; ++k) CHECK(s.at(0, t)[k] == s.at(1, t)[k]);
}

TEST_CASE("degenerate and oversized inputs") {
  SegGlossModel<float> m(tiny_config(), {9, 8, 8}, 3);
  CHECK_THROWS_AS(m.encode_word(std::vector<int>{}), Error);
  CHECK_THROWS_AS(m.encode_word(std::vector<int>(33, 4)), Error);
}

TEST_CASE("decode_step is a normalized log-distribution") {
  SegGlossModel<double> m(tiny_config(), {9, 7, 11}, 5);
  const auto enc = m.encode_word(std::vector<int>{4, 5, 6});
  Rng rng(1);
  for (Stream s : {Stream::segmentation, Stream::gloss}) {
    const int V = s == Stream::segmentation ? 7 : 11;
    for (int trial = 0; trial < 10; ++trial) {
      auto prefix = random_ids(rng, static_cast<int>(uniform_below(rng, 5)), V);
      prefix.insert(prefix.begin(), Vocabulary::kBos);
      const auto lp = m.decode_step(s, enc, prefix);
      REQUIRE(lp.size() == static_cast<std::size_t>(V));
      double sum = 0;
      for (double x : lp) sum += std::exp(x);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
}

TEST_CASE("gloss decoder on a single-task model is an error") {
  ModelConfig c = tiny_config();
  c.multitask = false;
  SegGlossModel<float> m(c, {9, 7, 11}, 5);
  const auto enc = m.encode_word(std::vector<int>{4, 5});
  CHECK_THROWS_AS(m.decode_step(Stream::gloss, enc, std::vector<int>{Vocabulary::kBos}), Error);
}

TEST_CASE("causality: extending the prefix leaves earlier steps unchanged") {
  SegGlossModel<double> m(tiny_config(2), {9, 9, 9}, 8);
  const auto enc = m.encode_word(std::vector<int>{4, 5, 6, 7});
  const std::vector<int> shortp = {Vocabulary::kBos, 5, 6};
  const std::vector<int> longp = {Vocabulary::kBos, 5, 6, 8, 4};
  const auto a = m.decode_all(Stream::segmentation, enc, shortp);
  const auto b = m.decode_all(Stream::segmentation, enc, longp);
  for (int r = 0; r < a.rows; ++r)
    for (int c = 0; c < a.cols; ++c) CHECK(a(r, c) == doctest::Approx(b(r, c)).epsilon(1e-12));
  const auto last = m.decode_step(Stream::segmentation, enc, shortp);
  for (int c = 0; c < a.cols; ++c) CHECK(last[c] == doctest::Approx(a(a.rows - 1, c)).epsilon(1e-12));
}

TEST_CASE("incremental step matches full recomputation") {
  SegGlossModel<double> m(tiny_config(2), {9, 9, 9}, 8);
  const auto enc = m.encode_word(std::vector<int>{4, 5, 6, 7});
  const std::vector<int> prefix = {Vocabulary::kBos, 5, 6, 8, 4};
  for (Stream s : {Stream::segmentation, Stream::gloss}) {
    const auto full = m.decode_all(s, enc, prefix);
    const auto mem = m.prepare_memory(s, enc);
    auto state = m.initial_state(s);
    Matrix<double> lp;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
      DecoderState<double>* sp = &state;
      m.step(mem, std::span<DecoderState<double>*>(&sp, 1), std::span<const int>(&prefix[i], 1), lp);
      for (int c = 0; c < full.cols; ++c)
        CHECK(lp(0, c) == doctest::Approx(full(static_cast<int>(i), c)).epsilon(1e-10));
    }
  }
}

TEST_CASE("zero output projection gives a uniform distribution") {
  SegGlossModel<double> m(tiny_config(), {9, 7, 9}, 2);
  m.decoder(Stream::segmentation).projection.value.zero();
  const auto enc = m.encode_word(std::vector<int>{4, 8});
  const auto lp = m.decode_step(Stream::segmentation, enc, std::vector<int>{Vocabulary::kBos, 5});
  for (double x : lp) CHECK(x == doctest::Approx(-std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("shared encoder is untouched by gloss decoder parameters") {
  SegGlossModel<float> m(tiny_config(2), {9, 9, 9}, 4);
  const std::vector<int> src = {4, 5, 6, 7, 8};
  const auto before = m.encode_word(src);
  const auto seg_before = m.decode_step(Stream::segmentation, before, std::vector<int>{Vocabulary::kBos, 6});
  m.decoder(Stream::gloss).visit([](Param<float>& p) {
    for (auto& x : p.value.data) x += 0.5f;
  });
  const auto after = m.encode_word(src);
  CHECK(before.data == after.data);
  const auto seg_after = m.decode_step(Stream::segmentation, after, std::vector<int>{Vocabulary::kBos, 6});
  CHECK(seg_before == seg_after);
}

TEST_CASE("dropout-off forward is deterministic; same seed gives same parameters") {
  SegGlossModel<float> a(tiny_config(), {9, 9, 9}, 6);
  SegGlossModel<float> b(tiny_config(), {9, 9, 9}, 6);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.data == pb[i]->value.data);
  const auto e1 = a.encode_word(std::vector<int>{4, 5, 6});
  const auto e2 = a.encode_word(std::vector<int>{4, 5, 6});
  CHECK(e1.data == e2.data);
}

TEST_CASE("analytic gradients match central differences") {
  const VocabSizes v{6, 6, 6};
  SegGlossModel<double> m(tiny_config(), v, 13);
  Rng rng(21);
  const auto examples = random_examples(rng, 3, v);
  std::vector<const EncodedExample*> members;
  for (const auto& e : examples) members.push_back(&e);
  const Batch batch = Batch::build(members, true);
  const double lambda = 0.7;

  batch_loss(m, batch, lambda, true);
  std::vector<std::vector<double>> analytic;
  for (auto* p : m.parameters()) analytic.push_back(p->grad.data);

  const double h = 1e-5;
  long total = 0, good = 0;
  auto params = m.parameters();
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& val = params[pi]->value.data;
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double saved = val[i];
      val[i] = saved + h;
      const double up = batch_loss(m, batch, lambda, false).total;
      val[i] = saved - h;
      const double down = batch_loss(m, batch, lambda, false).total;
      val[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[pi][i];
      const double scale = std::max({std::abs(a), std::abs(numeric), 1e-6});
      ++total;
      if (std::abs(a - numeric) / scale < 1e-4) ++good;
    }
  }
  MESSAGE(good << "/" << total << " parameters within tolerance");
  CHECK(static_cast<double>(good) >= 0.95 * static_cast<double>(total));
}
