#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "mtseg/error.hpp"
#include "mtseg/training.hpp"
#include "toy_language.hpp"

using namespace mtseg;

namespace {

Matrix<double> random_logits(Rng& rng, int rows, int cols) {
  Matrix<double> m(rows, cols);
  for (auto& x : m.data) x = uniform_unit(rng) * 6.0 - 3.0;
  return m;
}

std::vector<int> random_targets(Rng& rng, int n, int vocab, bool with_pad = true) {
  std::vector<int> t;
  for (int i = 0; i < n; ++i) t.push_back(Vocabulary::kEos + static_cast<int>(uniform_below(rng, vocab - 2)));
  if (with_pad && n > 2) t[1] = Vocabulary::kPad;
  return t;
}

ModelConfig small_config() {
  ModelConfig mc;
  mc.encoder_layers = 1;
  mc.decoder_layers = 1;
  mc.attention_heads = 2;
  mc.embedding_dim = 16;
  mc.hidden_dim = 32;
  mc.dropout = 0.1;
  mc.attention_dropout = 0.1;
  return mc;
}

double grad_norm(const DecoderStack<double>& dec) {
  double sq = 0;
  dec.visit([&](const Param<double>& p) {
    for (double g : p.grad.data) sq += g * g;
  });
  return std::sqrt(sq);
}

}  // namespace

TEST_CASE("combine_losses arithmetic") {
  CHECK(combine_losses(0.5, 2.0, 4.0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(combine_losses(1.0, 2.0, 4.0) == 2.0);
  CHECK(combine_losses(0.0, 2.0, 4.0) == 4.0);
  CHECK(combine_losses(0.3, 2.0, std::nullopt) == 2.0);
}

TEST_CASE("uniform predictions give ln V") {
  for (int V : {5, 7, 50}) {
    Matrix<double> logits(5, V);
    const std::vector<int> targets = {3, 4, 2, 3, Vocabulary::kPad};
    CHECK(token_cross_entropy<double>(logits, targets, nullptr) == doctest::Approx(std::log(double(V))).epsilon(1e-12));
  }
}

TEST_CASE("cross-entropy gradient is softmax minus one-hot, PAD skipped") {
  Rng rng(1);
  const auto logits = random_logits(rng, 4, 6);
  const std::vector<int> targets = {3, Vocabulary::kPad, 5, 2};
  Matrix<double> d;
  token_cross_entropy<double>(logits, targets, &d, 2.0);
  for (int c = 0; c < 6; ++c) CHECK(d(1, c) == 0.0);
  double sum = 0;
  for (int c = 0; c < 6; ++c) sum += d(0, c);
  CHECK(sum == doctest::Approx(0.0).epsilon(1e-12));
  const double h = 1e-6;
  for (int r : {0, 2, 3})
    for (int c = 0; c < 6; ++c) {
      auto up = logits, down = logits;
      up(r, c) += h;
      down(r, c) -= h;
      const double num = 2.0 * (token_cross_entropy<double>(up, targets, nullptr) - token_cross_entropy<double>(down, targets, nullptr)) / (2 * h);
      CHECK(d(r, c) == doctest::Approx(num).epsilon(1e-6));
    }
}

TEST_CASE("lambda 1: total equals seg and the gloss gradient is zero") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto seg = random_logits(rng, 6, 9);
    const auto gloss = random_logits(rng, 4, 7);
    const auto st = random_targets(rng, 6, 9);
    const auto gt = random_targets(rng, 4, 7);
    Matrix<double> dseg, dgloss;
    const auto l = joint_loss<double>(seg, st, &gloss, gt, 1.0, &dseg, &dgloss);
    CHECK(std::abs(l.total - l.seg) < 1e-9);
    CHECK(l.gloss > 0.0);
    for (double g : dgloss.data) CHECK(g == 0.0);
  }
}

TEST_CASE("lambda 1 on a multitask model leaves gloss decoder gradients at zero") {
  const auto words = toy::sample(12, 4);
  const auto vocabs = build_vocabularies(words);
  ModelConfig mc = small_config();
  mc.dropout = mc.attention_dropout = 0.0;
  SegGlossModel<double> model(mc, vocab_sizes(vocabs), 3);
  std::vector<EncodedExample> enc;
  for (const auto& w : words) enc.push_back(encode_example(w, vocabs));
  std::vector<const EncodedExample*> members;
  for (const auto& e : enc) members.push_back(&e);
  const Batch batch = Batch::build(members, true);
  TrainCache<double> cache;
  Matrix<double> seg, gloss, dseg, dgloss;
  model.forward_train(batch, nn::ForwardMode{}, cache, seg, &gloss);
  const auto l = joint_loss<double>(seg, batch.segmentation.output, &gloss, batch.gloss.output, 1.0, &dseg, &dgloss);
  CHECK(std::abs(l.total - l.seg) < 1e-9);
  model.zero_grad();
  model.backward_train(batch, cache, dseg, &dgloss);
  CHECK(grad_norm(model.decoder(Stream::gloss)) == 0.0);
  CHECK(grad_norm(model.decoder(Stream::segmentation)) > 0.0);
}

TEST_CASE("total loss is linear in lambda") {
  Rng rng(9);
  const auto seg = random_logits(rng, 5, 8);
  const auto gloss = random_logits(rng, 5, 8);
  const auto st = random_targets(rng, 5, 8, false);
  const auto gt = random_targets(rng, 5, 8, false);
  const auto l0 = joint_loss<double>(seg, st, &gloss, gt, 0.0);
  const auto l1 = joint_loss<double>(seg, st, &gloss, gt, 1.0);
  for (double lambda = 0.0; lambda <= 1.0; lambda += 0.125) {
    const auto l = joint_loss<double>(seg, st, &gloss, gt, lambda);
    CHECK(std::abs(l.total - (lambda * l1.total + (1 - lambda) * l0.total)) < 1e-9);
  }
  // Monotone: with seg < gloss the total falls as lambda grows.
  if (l1.seg < l0.gloss) CHECK(joint_loss<double>(seg, st, &gloss, gt, 0.9).total < joint_loss<double>(seg, st, &gloss, gt, 0.5).total);
}

TEST_CASE("joint_loss input errors") {
  Rng rng(2);
  const auto seg = random_logits(rng, 3, 5);
  const auto st = random_targets(rng, 3, 5, false);
  CHECK_THROWS_AS(joint_loss<double>(seg, st, nullptr, {}, 1.5), Error);
  CHECK_THROWS_AS(joint_loss<double>(seg, st, nullptr, {}, -0.1), Error);
  const std::vector<int> short_targets = {3, 4};
  CHECK_THROWS_AS(joint_loss<double>(seg, short_targets, nullptr, {}, 0.5), Error);
}

TEST_CASE("train config validation and single-task lambda") {
  TrainConfig tc;
  CHECK_NOTHROW(tc.validate());
  tc.lambda_seg = 1.2;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.max_epochs = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.mode = TrainMode::single_task;
  tc.lambda_seg = 0.5;
  CHECK(tc.effective_lambda() == 1.0);
  CHECK_FALSE(tc.trains_gloss());
  CHECK(parse_mode("multitask") == TrainMode::multitask);
  CHECK(parse_mode("single_task") == TrainMode::single_task);
  CHECK_THROWS_AS(parse_mode("both"), ConfigError);
}

TEST_CASE("adam first step moves each weight by about lr against the gradient sign") {
  Param<double> p;
  p.allocate("w", 1, 3);
  p.value.data = {1.0, 2.0, 3.0};
  p.grad.data = {0.5, -2.0, 0.0};
  Adam<double> adam(1e-3, 0.9, 0.98, 1e-8);
  Param<double>* ps[] = {&p};
  adam.step(ps);
  CHECK(p.value.data[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
  CHECK(p.value.data[1] == doctest::Approx(2.0 + 1e-3).epsilon(1e-6));
  CHECK(p.value.data[2] == 3.0);
  CHECK(adam.steps() == 1);
}

TEST_CASE("global gradient norm clipping") {
  Param<double> a, b;
  a.allocate("a", 1, 2);
  b.allocate("b", 1, 1);
  a.grad.data = {3.0, 0.0};
  b.grad.data = {4.0};
  Param<double>* ps[] = {&a, &b};
  CHECK(clip_grad_norm<double>(ps, 10.0) == doctest::Approx(5.0));
  CHECK(a.grad.data[0] == 3.0);
  CHECK(clip_grad_norm<double>(ps, 1.0) == doctest::Approx(5.0));
  CHECK(std::hypot(a.grad.data[0], b.grad.data[0]) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("token batches respect the budget and cover every example once") {
  const auto words = toy::all_words();
  const auto vocabs = build_vocabularies(words);
  std::vector<EncodedExample> enc;
  for (const auto& w : words) enc.push_back(encode_example(w, vocabs));
  TrainConfig tc;
  tc.batch_size = 60;
  Rng rng(1);
  const auto batches = make_batches(enc, tc, rng);
  std::vector<int> seen(enc.size(), 0);
  for (const auto& b : batches) {
    long cost = 0;
    for (std::size_t i : b) {
      ++seen[i];
      cost += static_cast<long>(std::max({enc[i].source.size(), enc[i].segmentation.size() + 1, enc[i].gloss.size() + 1}));
    }
    CHECK((cost <= 60 || b.size() == 1));
  }
  for (int s : seen) CHECK(s == 1);

  tc.batch_unit = BatchUnit::sentences;
  tc.batch_size = 16;
  Rng rng2(1);
  const auto sb = make_batches(enc, tc, rng2);
  for (std::size_t i = 0; i + 1 < sb.size(); ++i) CHECK(sb[i].size() == 16);
}

TEST_CASE("mode and model must agree") {
  const auto words = toy::sample(8, 1);
  const auto vocabs = build_vocabularies(words);
  SegGlossModel<float> multi(small_config(), vocab_sizes(vocabs), 1);
  TrainConfig tc;
  tc.max_epochs = 1;
  tc.mode = TrainMode::single_task;
  CHECK_THROWS_AS(train(multi, vocabs, words, words, tc), ConfigError);
}

TEST_CASE("non-finite loss aborts naming the epoch") {
  const auto words = toy::sample(8, 1);
  const auto vocabs = build_vocabularies(words);
  SegGlossModel<float> model(small_config(), vocab_sizes(vocabs), 1);
  for (auto& x : model.decoder(Stream::segmentation).projection.value.data) x = std::numeric_limits<float>::quiet_NaN();
  TrainConfig tc;
  tc.max_epochs = 3;
  CHECK_THROWS_WITH_AS(train(model, vocabs, words, words, tc), doctest::Contains("epoch 1"), Error);
}

TEST_CASE("fixed seed gives identical loss logs and parameters") {
  const auto words = toy::sample(24, 2);
  const auto dev = toy::sample(6, 9);
  const auto vocabs = build_vocabularies(words);
  TrainConfig tc;
  tc.max_epochs = 4;
  tc.batch_size = 60;
  tc.seed = 17;
  auto run = [&] {
    SegGlossModel<float> m(small_config(), vocab_sizes(vocabs), tc.seed);
    auto state = train(m, vocabs, words, dev, tc);
    std::vector<float> flat;
    for (const auto* p : std::as_const(m).parameters()) flat.insert(flat.end(), p->value.data.begin(), p->value.data.end());
    return std::pair(state, flat);
  };
  const auto [a, pa] = run();
  const auto [b, pb] = run();
  REQUIRE(a.log.size() == 4);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].total == b.log[i].total);
    CHECK(a.log[i].seg == b.log[i].seg);
    CHECK(a.log[i].gloss == b.log[i].gloss);
  }
  CHECK(pa == pb);
}

TEST_CASE("the returned model is the best-dev checkpoint") {
  const auto words = toy::sample(32, 3);
  const auto dev = toy::sample(12, 5);
  const auto vocabs = build_vocabularies(words);
  ModelConfig mc = small_config();
  SegGlossModel<float> model(mc, vocab_sizes(vocabs), 2);
  TrainConfig tc;
  tc.max_epochs = 12;
  tc.batch_size = 100;
  tc.dev_beam_width = 2;
  int improvements = 0;
  TrainHooks hooks;
  hooks.on_improve = [&](const TrainState&) { ++improvements; };
  const auto state = train(model, vocabs, words, dev, tc, hooks);
  double best = -1;
  int best_epoch = 0;
  double running = -1;
  for (const auto& e : state.log) {
    REQUIRE(e.dev_accuracy.has_value());
    if (*e.dev_accuracy > best) {
      best = *e.dev_accuracy;
      best_epoch = e.epoch;
    }
    running = std::max(running, *e.dev_accuracy);
    CHECK(running >= best);
  }
  CHECK(state.best_dev_accuracy == best);
  CHECK(state.best_epoch == best_epoch);
  CHECK(improvements >= 1);
  CHECK(segmentation_accuracy(model, vocabs, dev, 2) == doctest::Approx(best));
}

TEST_CASE("epoch log line format") {
  std::ostringstream out;
  write_epoch_log(out, {3, 1.5, 1.25, 3.75, 42.5});
  CHECK(out.str() == "epoch=3 L_total=1.500000 L_seg=1.250000 L_gloss=3.750000 dev_acc=42.50\n");
}

TEST_CASE("empty lambda grid is an error") {
  igt::DataSplit split;
  split.train = toy::sample(10, 1);
  split.dev = split.test = toy::sample(3, 2);
  CHECK_THROWS_AS(sweep_lambda(split, {}, small_config(), TrainConfig{}, false), ConfigError);
}

TEST_CASE("lambda sweep reports multitask lambda 1 and single-task separately") {
  igt::DataSplit split;
  split.train = toy::sample(16, 1);
  split.dev = toy::sample(4, 2);
  split.test = toy::sample(4, 3);
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.dev_beam_width = 1;
  const double grid[] = {1.0};
  const auto rows = sweep_lambda(split, grid, small_config(), tc, true);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].label == "1");
  CHECK(rows[0].mode == TrainMode::multitask);
  CHECK(rows[1].label == "Single-task Baseline");
  CHECK(rows[1].mode == TrainMode::single_task);
  std::ostringstream out;
  write_sweep_table(out, rows);
  CHECK(out.str().rfind("label\tlambda\tmode\tACC\tF1\tED\n", 0) == 0);
}

TEST_CASE("overfit a 32-word toy corpus") {
  const auto words = toy::sample(32, 3);
  const Vocabularies vocabs = build_vocabularies(words);
  ModelConfig mc;
  mc.encoder_layers = 2;
  mc.decoder_layers = 2;
  mc.embedding_dim = 64;
  mc.hidden_dim = 128;
  mc.dropout = 0.0;
  mc.attention_dropout = 0.0;
  SegGlossModel<float> model(mc, vocab_sizes(vocabs), 7);
  TrainConfig tc;
  tc.max_epochs = 300;
  tc.dev_every = 50;
  tc.seed = 7;
  train(model, vocabs, words, words, tc);
  CHECK(segmentation_accuracy(model, vocabs, words, 5) >= 95.0);
}
