#pragma once

// Joint segmentation/gloss training: token-mean cross-entropy, the weighted
// joint objective, Adam, the epoch loop with dev-accuracy checkpoint
// selection, and the lambda sweep.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtseg/decoding.hpp"
#include "mtseg/igt.hpp"
#include "mtseg/metrics.hpp"
#include "mtseg/model.hpp"
#include "mtseg/vocab.hpp"

namespace mtseg {

enum class TrainMode { multitask, single_task };
enum class BatchUnit { tokens, sentences };

std::string_view mode_name(TrainMode mode) noexcept;
TrainMode parse_mode(std::string_view text);  // "multitask" | "single_task"

struct TrainConfig {
  double lambda_seg = 0.9;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-8;
  int batch_size = 400;
  BatchUnit batch_unit = BatchUnit::tokens;
  int max_epochs = 200;
  int dev_beam_width = 5;
  int dev_every = 1;
  double clip_norm = 1.0;  // global gradient norm cap, 0 disables
  std::uint64_t seed = 1;
  TrainMode mode = TrainMode::multitask;
  int threads = 1;  // dev decoding workers

  // Throws ConfigError.
  void validate() const;
  // Single-task mode always trains on segmentation alone.
  double effective_lambda() const { return mode == TrainMode::single_task ? 1.0 : lambda_seg; }
  bool trains_gloss() const { return mode == TrainMode::multitask && effective_lambda() < 1.0; }
};

// Token-mean cross-entropy of logits rows against targets; PAD targets are
// skipped. When dlogits is non-null it receives scale * dLoss/dlogits.
template <typename T>
double token_cross_entropy(const Matrix<T>& logits, std::span<const int> targets, Matrix<T>* dlogits,
                           double scale = 1.0);

struct JointLoss {
  double total = 0.0;
  double seg = 0.0;
  double gloss = 0.0;
};

// total = lambda * seg + (1 - lambda) * gloss; without gloss, total = seg.
double combine_losses(double lambda, double seg, std::optional<double> gloss);

// Computes both stream losses and, when requested, the weighted logit
// gradients. Throws Error on lambda outside [0, 1] or mismatched shapes.
template <typename T>
JointLoss joint_loss(const Matrix<T>& seg_logits, std::span<const int> seg_targets,
                     const Matrix<T>* gloss_logits, std::span<const int> gloss_targets, double lambda,
                     Matrix<T>* dseg = nullptr, Matrix<T>* dgloss = nullptr);

template <typename T>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(std::span<Param<T>* const> params);
  long steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

// Scales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
template <typename T>
double clip_grad_norm(std::span<Param<T>* const> params, double max_norm);

// Shuffled index batches. Token batches close before an example would push
// the sum of per-example max(source, target + 1) lengths past the budget.
std::vector<std::vector<std::size_t>> make_batches(std::span<const EncodedExample> examples,
                                                   const TrainConfig& config, Rng& rng);

struct EpochLog {
  int epoch = 0;
  double total = 0.0;
  double seg = 0.0;
  double gloss = 0.0;
  std::optional<double> dev_accuracy;  // percent
};

struct TrainState {
  int epoch = 0;
  double best_dev_accuracy = -1.0;
  int best_epoch = 0;
  std::string best_checkpoint;
  std::vector<EpochLog> log;
};

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
  // Called after the retained parameters improve.
  std::function<void(const TrainState&)> on_improve;
};

// Segmentation word accuracy (percent) with beam decoding.
template <typename T>
double segmentation_accuracy(const SegGlossModel<T>& model, const Vocabularies& vocabs,
                             std::span<const igt::WordExample> examples, int beam_width, int threads = 1);

// Trains in place and leaves the best-dev parameters in `model`. Throws
// Error on a non-finite loss, naming the epoch.
template <typename T>
TrainState train(SegGlossModel<T>& model, const Vocabularies& vocabs, std::span<const igt::WordExample> train,
                 std::span<const igt::WordExample> dev, const TrainConfig& config, const TrainHooks& hooks = {},
                 std::string_view delimiters = igt::kDefaultDelimiters);

// One line per epoch: epoch, L_total, L_seg, L_gloss, dev ACC.
void write_epoch_log(std::ostream& out, const EpochLog& entry);

ModelConfig model_config_for(const ModelConfig& base, TrainMode mode);
VocabSizes vocab_sizes(const Vocabularies& vocabs);

struct RunOutcome {
  std::shared_ptr<SegGlossModel<float>> model;
  Vocabularies vocabs;
  TrainState state;
  metrics::EvalReport test;
  std::vector<Prediction> predictions;
  long parameters = 0;
};

// Builds vocabularies from train, trains, and scores test with the dev beam.
RunOutcome fit_and_evaluate(std::span<const igt::WordExample> train, std::span<const igt::WordExample> dev,
                            std::span<const igt::WordExample> test, const ModelConfig& model_config,
                            const TrainConfig& train_config, std::string_view delimiters = igt::kDefaultDelimiters,
                            const TrainHooks& hooks = {});

struct SweepRow {
  std::string label;  // "0.9", "Single-task Baseline"
  double lambda = 1.0;
  TrainMode mode = TrainMode::multitask;
  double accuracy = 0.0;
  double f1 = 0.0;
  long edit_distance = 0;
};

// One full train + test evaluation per grid value, plus an optional
// single-task row. Throws ConfigError on an empty grid.
std::vector<SweepRow> sweep_lambda(const igt::DataSplit& split, std::span<const double> grid,
                                   const ModelConfig& model_config, const TrainConfig& train_config,
                                   bool with_single_task, std::string_view delimiters = igt::kDefaultDelimiters,
                                   const std::function<void(const SweepRow&)>& on_row = {});

void write_sweep_table(std::ostream& out, std::span<const SweepRow> rows);

}  // namespace mtseg
