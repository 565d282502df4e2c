#include "mtseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mtseg/error.hpp"
#include "mtseg/kernels.hpp"

namespace mtseg {

std::string_view mode_name(TrainMode mode) noexcept {
  return mode == TrainMode::multitask ? "multitask" : "single_task";
}

TrainMode parse_mode(std::string_view text) {
  if (text == "multitask" || text == "M") return TrainMode::multitask;
  if (text == "single_task" || text == "single-task" || text == "S") return TrainMode::single_task;
  throw ConfigError("unknown mode '" + std::string(text) + "' (expected multitask or single_task)");
}

void TrainConfig::validate() const {
  if (!(lambda_seg >= 0.0 && lambda_seg <= 1.0)) throw ConfigError("lambda must be in [0, 1]");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (dev_beam_width < 1) throw ConfigError("dev_beam_width must be >= 1");
  if (dev_every < 1) throw ConfigError("dev_every must be >= 1");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be >= 0");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

// ------------------------------------------------------------------ losses

template <typename T>
double token_cross_entropy(const Matrix<T>& logits, std::span<const int> targets, Matrix<T>* dlogits,
                           double scale) {
  if (static_cast<std::size_t>(logits.rows) != targets.size())
    throw Error("logits have " + std::to_string(logits.rows) + " rows but " + std::to_string(targets.size()) +
                " targets were given");
  const int v = logits.cols;
  long count = 0;
  for (int t : targets) {
    if (t < 0 || t >= v) throw Error("target id " + std::to_string(t) + " outside vocabulary of " + std::to_string(v));
    if (t != Vocabulary::kPad) ++count;
  }
  if (dlogits) dlogits->resize(logits.rows, v);
  if (count == 0) return 0.0;
  double sum = 0.0;
  std::vector<T> lp(static_cast<std::size_t>(v));
  const double inv = 1.0 / static_cast<double>(count);
  for (int r = 0; r < logits.rows; ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t == Vocabulary::kPad) continue;
    kernels::log_softmax<T>(v, logits.row(r), lp.data());
    sum -= static_cast<double>(lp[static_cast<std::size_t>(t)]);
    if (dlogits) {
      T* d = dlogits->row(r);
      const T s = static_cast<T>(scale * inv);
      for (int j = 0; j < v; ++j) d[j] = s * static_cast<T>(std::exp(static_cast<double>(lp[static_cast<std::size_t>(j)])));
      d[t] -= s;
    }
  }
  return sum * inv;
}

double combine_losses(double lambda, double seg, std::optional<double> gloss) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("lambda must be in [0, 1]");
  if (!gloss) return seg;
  return lambda * seg + (1.0 - lambda) * *gloss;
}

template <typename T>
JointLoss joint_loss(const Matrix<T>& seg_logits, std::span<const int> seg_targets, const Matrix<T>* gloss_logits,
                     std::span<const int> gloss_targets, double lambda, Matrix<T>* dseg, Matrix<T>* dgloss) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("lambda must be in [0, 1]");
  JointLoss out;
  const bool has_gloss = gloss_logits != nullptr;
  out.seg = token_cross_entropy(seg_logits, seg_targets, dseg, has_gloss ? lambda : 1.0);
  if (has_gloss) {
    out.gloss = token_cross_entropy(*gloss_logits, gloss_targets, dgloss, 1.0 - lambda);
    out.total = combine_losses(lambda, out.seg, out.gloss);
  } else {
    if (!gloss_targets.empty()) throw Error("gloss targets given without gloss logits");
    out.total = out.seg;
  }
  return out;
}

// --------------------------------------------------------------- optimizer

template <typename T>
void Adam<T>::step(std::span<Param<T>* const> params) {
  if (m_.empty()) {
    for (Param<T>* p : params) {
      m_.emplace_back(p->value.size(), T(0));
      v_.emplace_back(p->value.size(), T(0));
    }
  }
  if (m_.size() != params.size()) throw Error("optimizer parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  const T b1 = static_cast<T>(b1_), b2 = static_cast<T>(b2_);
  const T step = static_cast<T>(lr_ / c1);
  const T rc2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(eps_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i]->value.data;
    const auto& g = params[i]->grad.data;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      w[j] -= step * m[j] / (std::sqrt(v[j]) * rc2 + eps);
    }
  }
}

template <typename T>
double clip_grad_norm(std::span<Param<T>* const> params, double max_norm) {
  double sq = 0.0;
  for (const Param<T>* p : params)
    for (T g : p->grad.data) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / (norm + 1e-6));
    for (Param<T>* p : params)
      for (T& g : p->grad.data) g *= s;
  }
  return norm;
}

// ----------------------------------------------------------------- batches

std::vector<std::vector<std::size_t>> make_batches(std::span<const EncodedExample> examples,
                                                   const TrainConfig& config, Rng& rng) {
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  seeded_shuffle(order, rng);
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> current;
  long used = 0;
  for (std::size_t i : order) {
    long cost = 1;
    if (config.batch_unit == BatchUnit::tokens) {
      const auto& ex = examples[i];
      std::size_t len = std::max(ex.source.size(), ex.segmentation.size() + 1);
      if (config.trains_gloss()) len = std::max(len, ex.gloss.size() + 1);
      cost = static_cast<long>(len);
    }
    if (!current.empty() && used + cost > config.batch_size) {
      batches.push_back(std::move(current));
      current.clear();
      used = 0;
    }
    current.push_back(i);
    used += cost;
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

// ------------------------------------------------------------------- train

template <typename T>
double segmentation_accuracy(const SegGlossModel<T>& model, const Vocabularies& vocabs,
                             std::span<const igt::WordExample> examples, int beam_width, int threads) {
  if (examples.empty()) throw Error("accuracy requested on an empty example set");
  std::vector<std::string> surfaces;
  for (const auto& ex : examples) surfaces.push_back(ex.surface);
  BeamOptions opts;
  opts.beam_width = beam_width;
  const auto preds = predict(model, vocabs, surfaces, opts, false, threads);
  std::vector<metrics::SegmentationPair> pairs;
  for (std::size_t i = 0; i < examples.size(); ++i) pairs.push_back({examples[i].segmentation, preds[i].segmentation});
  return metrics::word_accuracy(pairs);
}

template <typename T>
TrainState train(SegGlossModel<T>& model, const Vocabularies& vocabs, std::span<const igt::WordExample> train,
                 std::span<const igt::WordExample> dev, const TrainConfig& config, const TrainHooks& hooks,
                 std::string_view delimiters) {
  config.validate();
  if (train.empty()) throw Error("empty training set");
  if (config.mode == TrainMode::multitask && !model.has_gloss_decoder())
    throw ConfigError("multitask training needs a model with a gloss decoder");
  if (config.mode == TrainMode::single_task && model.has_gloss_decoder())
    throw ConfigError("single_task training needs a model without a gloss decoder");

  const double lambda = config.effective_lambda();
  const bool with_gloss = model.has_gloss_decoder();
  std::vector<EncodedExample> encoded;
  encoded.reserve(train.size());
  for (const auto& ex : train) encoded.push_back(encode_example(ex, vocabs, delimiters));

  Rng rng(config.seed);
  nn::ForwardMode mode{&rng, model.config().dropout, model.config().attention_dropout};
  Adam<T> adam(config.learning_rate, config.beta1, config.beta2, config.epsilon);
  auto params = model.parameters();

  TrainState state;
  std::vector<std::vector<T>> best;
  auto snapshot = [&] {
    best.clear();
    for (const Param<T>* p : params) best.push_back(p->value.data);
  };

  TrainCache<T> cache;
  Matrix<T> seg_logits, gloss_logits, dseg, dgloss;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto batches = make_batches(encoded, config, rng);
    double sum_total = 0.0, sum_seg = 0.0, sum_gloss = 0.0;
    for (const auto& idx : batches) {
      std::vector<const EncodedExample*> members;
      for (std::size_t i : idx) members.push_back(&encoded[i]);
      const Batch batch = Batch::build(members, with_gloss);
      model.zero_grad();
      model.forward_train(batch, mode, cache, seg_logits, with_gloss ? &gloss_logits : nullptr);
      const JointLoss loss = joint_loss<T>(seg_logits, batch.segmentation.output, with_gloss ? &gloss_logits : nullptr,
                                           with_gloss ? std::span<const int>(batch.gloss.output) : std::span<const int>{},
                                           lambda, &dseg, with_gloss ? &dgloss : nullptr);
      if (!std::isfinite(loss.total))
        throw Error("non-finite loss at epoch " + std::to_string(epoch));
      model.backward_train(batch, cache, dseg, with_gloss ? &dgloss : nullptr);
      clip_grad_norm<T>(params, config.clip_norm);
      adam.step(params);
      sum_total += loss.total;
      sum_seg += loss.seg;
      sum_gloss += loss.gloss;
    }
    const double nb = static_cast<double>(batches.size());
    EpochLog entry{epoch, sum_total / nb, sum_seg / nb, sum_gloss / nb, std::nullopt};
    state.epoch = epoch;

    const bool last = epoch == config.max_epochs;
    if (!dev.empty() && (epoch % config.dev_every == 0 || last)) {
      entry.dev_accuracy = segmentation_accuracy(model, vocabs, dev, config.dev_beam_width, config.threads);
      if (*entry.dev_accuracy > state.best_dev_accuracy) {
        state.best_dev_accuracy = *entry.dev_accuracy;
        state.best_epoch = epoch;
        snapshot();
        if (hooks.on_improve) hooks.on_improve(state);
      }
    } else if (dev.empty() && last) {
      state.best_epoch = epoch;
      snapshot();
      if (hooks.on_improve) hooks.on_improve(state);
    }
    state.log.push_back(entry);
    if (hooks.on_epoch) hooks.on_epoch(entry);
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value.data = best[i];
  return state;
}

void write_epoch_log(std::ostream& out, const EpochLog& e) {
  out << "epoch=" << e.epoch << std::fixed << std::setprecision(6) << " L_total=" << e.total << " L_seg=" << e.seg
      << " L_gloss=" << e.gloss;
  if (e.dev_accuracy) out << std::setprecision(2) << " dev_acc=" << *e.dev_accuracy;
  out << std::defaultfloat << '\n';
}

ModelConfig model_config_for(const ModelConfig& base, TrainMode mode) {
  ModelConfig c = base;
  c.multitask = mode == TrainMode::multitask;
  return c;
}

VocabSizes vocab_sizes(const Vocabularies& vocabs) {
  return {vocabs.source.size(), vocabs.segmentation.size(), vocabs.gloss.size()};
}

RunOutcome fit_and_evaluate(std::span<const igt::WordExample> train_set, std::span<const igt::WordExample> dev,
                            std::span<const igt::WordExample> test, const ModelConfig& model_config,
                            const TrainConfig& train_config, std::string_view delimiters, const TrainHooks& hooks) {
  if (test.empty()) throw Error("empty test set");
  RunOutcome out;
  out.vocabs = build_vocabularies(train_set, delimiters);
  const Vocabularies& vocabs = out.vocabs;
  out.model = std::make_shared<SegGlossModel<float>>(model_config_for(model_config, train_config.mode),
                                                     vocab_sizes(vocabs), train_config.seed);
  auto& model = *out.model;
  out.parameters = model.count_parameters();
  out.state = train(model, vocabs, train_set, dev, train_config, hooks, delimiters);
  std::vector<std::string> surfaces;
  for (const auto& ex : test) surfaces.push_back(ex.surface);
  BeamOptions opts;
  opts.beam_width = train_config.dev_beam_width;
  out.predictions = predict(model, vocabs, surfaces, opts, false, train_config.threads);
  std::vector<metrics::SegmentationPair> pairs;
  for (std::size_t i = 0; i < test.size(); ++i) pairs.push_back({test[i].segmentation, out.predictions[i].segmentation});
  out.test = metrics::evaluate(pairs, delimiters);
  return out;
}

std::vector<SweepRow> sweep_lambda(const igt::DataSplit& split, std::span<const double> grid,
                                   const ModelConfig& model_config, const TrainConfig& train_config,
                                   bool with_single_task, std::string_view delimiters,
                                   const std::function<void(const SweepRow&)>& on_row) {
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  for (double l : grid)
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("lambda grid value outside [0, 1]");
  std::vector<SweepRow> rows;
  auto run_one = [&](const std::string& label, double lambda, TrainMode mode) {
    TrainConfig tc = train_config;
    tc.lambda_seg = lambda;
    tc.mode = mode;
    const RunOutcome r = fit_and_evaluate(split.train, split.dev, split.test, model_config, tc, delimiters);
    rows.push_back({label, lambda, mode, r.test.word_accuracy, r.test.f1, r.test.edit_distance_sum});
    if (on_row) on_row(rows.back());
  };
  for (double l : grid) {
    std::ostringstream label;
    label << l;
    run_one(label.str(), l, TrainMode::multitask);
  }
  if (with_single_task) run_one("Single-task Baseline", 1.0, TrainMode::single_task);
  return rows;
}

void write_sweep_table(std::ostream& out, std::span<const SweepRow> rows) {
  out << "label\tlambda\tmode\tACC\tF1\tED\n";
  out << std::fixed << std::setprecision(2);
  for (const auto& r : rows)
    out << r.label << '\t' << r.lambda << '\t' << mode_name(r.mode) << '\t' << r.accuracy << '\t' << r.f1 << '\t'
        << r.edit_distance << '\n';
  out << std::defaultfloat;
}

template double token_cross_entropy<float>(const Matrix<float>&, std::span<const int>, Matrix<float>*, double);
template double token_cross_entropy<double>(const Matrix<double>&, std::span<const int>, Matrix<double>*, double);
template JointLoss joint_loss<float>(const Matrix<float>&, std::span<const int>, const Matrix<float>*,
                                     std::span<const int>, double, Matrix<float>*, Matrix<float>*);
template JointLoss joint_loss<double>(const Matrix<double>&, std::span<const int>, const Matrix<double>*,
                                      std::span<const int>, double, Matrix<double>*, Matrix<double>*);
template class Adam<float>;
template class Adam<double>;
template double clip_grad_norm<float>(std::span<Param<float>* const>, double);
template double clip_grad_norm<double>(std::span<Param<double>* const>, double);
template double segmentation_accuracy<float>(const SegGlossModel<float>&, const Vocabularies&,
                                             std::span<const igt::WordExample>, int, int);
template double segmentation_accuracy<double>(const SegGlossModel<double>&, const Vocabularies&,
                                              std::span<const igt::WordExample>, int, int);
template TrainState train<float>(SegGlossModel<float>&, const Vocabularies&, std::span<const igt::WordExample>,
                                 std::span<const igt::WordExample>, const TrainConfig&, const TrainHooks&,
                                 std::string_view);
template TrainState train<double>(SegGlossModel<double>&, const Vocabularies&, std::span<const igt::WordExample>,
                                  std::span<const igt::WordExample>, const TrainConfig&, const TrainHooks&,
                                  std::string_view);

}  // namespace mtseg
