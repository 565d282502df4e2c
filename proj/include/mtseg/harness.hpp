#pragma once

// Experiment orchestration over prepared language directories:
//
//   <data>/<lang>/train.tsv dev.tsv test.tsv seed.txt   (prepare-data)
//   <data>/<lang>/synthetic.jsonl                        (generate-synthetic)
//   <runs>/ledger.jsonl                                  (one JSON row per run)
//   <runs>/<run id>/model.ckpt predictions.tsv train.log
//
// The ledger is append-only; rows are guarded by an exclusive file lock so
// concurrent processes may share it.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtseg/config.hpp"
#include "mtseg/igt.hpp"
#include "mtseg/training.hpp"

namespace mtseg::harness {

struct ExperimentSpec {
  std::string language;
  TrainMode mode = TrainMode::multitask;
  double lambda = 0.9;
  double train_fraction = 1.0;
  double synth_ratio = 0.0;
  std::uint64_t seed = 1;

  // Throws ConfigError.
  void validate() const;
  // Human-readable key, e.g. "lez.multitask.l0.9.f1.s0.seed1".
  std::string label() const;
  bool operator==(const ExperimentSpec&) const = default;
};

// Single-task runs always report lambda 1.
ExperimentSpec normalized(ExperimentSpec spec);

struct ResultRow {
  ExperimentSpec spec;
  std::string config_hash;  // model and training settings outside the spec
  std::string status;       // "ok" | "failed"
  std::string error;
  double accuracy = 0.0;  // percentages
  double f1 = 0.0;
  long edit_distance = 0;
  double seconds = 0.0;
  std::string checkpoint;
  int epochs = 0;
  int best_epoch = 0;
  double best_dev_accuracy = 0.0;
  long train_size = 0;
  long synthetic_added = 0;
  long parameters = 0;

  bool ok() const { return status == "ok"; }
};

nlohmann::json to_json(const ResultRow& row);
ResultRow row_from_json(const nlohmann::json& j);

// Hash of the run config with the spec-controlled fields removed.
std::string config_hash(const RunConfig& config);

class Ledger {
 public:
  explicit Ledger(std::filesystem::path path);
  const std::filesystem::path& path() const { return path_; }
  std::vector<ResultRow> rows() const;
  // Latest successful row for this spec and config.
  std::optional<ResultRow> completed(const ExperimentSpec& spec, const std::string& config_hash) const;
  void append(const ResultRow& row) const;

 private:
  std::filesystem::path path_;
};

struct Workspace {
  std::filesystem::path data_dir;
  std::filesystem::path runs_dir;

  std::filesystem::path language_dir(const std::string& language) const { return data_dir / language; }
  std::filesystem::path synthetic_cache(const std::string& language) const {
    return language_dir(language) / "synthetic.jsonl";
  }
  Ledger ledger() const { return Ledger(runs_dir / "ledger.jsonl"); }
};

struct RunOptions {
  bool force = false;
  std::function<void(const EpochLog&)> on_epoch;
  // When set, grid runs record failed spec errors here and continue.
  std::vector<std::string>* failures = nullptr;
};

// Trains and scores one spec, appending a row to the ledger. A spec already
// completed under the same config returns the recorded row without
// training unless forced. Failures append a failed row and rethrow with the
// spec label attached.
ResultRow run(const ExperimentSpec& spec, const RunConfig& config, const Workspace& workspace,
              const RunOptions& options = {});

// Training examples for a spec: the nested train fraction, then synthetic
// examples mixed at synth_ratio of that fraction.
std::vector<igt::WordExample> training_set(const ExperimentSpec& spec, const igt::DataSplit& split,
                                           const Workspace& workspace, const std::string& delimiters);

// ------------------------------------------------------------------ tables

// One column per language plus "ave", three sub-rows (ACC, F1, ED) per
// model label.
struct MetricTable {
  std::vector<std::string> languages;
  struct Row {
    std::string model;
    std::string metric;  // "ACC" | "F1" | "ED"
    std::vector<std::optional<double>> values;
    std::optional<double> average;
  };
  std::vector<Row> rows;
};

// Display label: "S", "M", "M (lambda=0.8)", "M+LLM (0.25)", "S+LLM (0.5)", with a
// "@50%" suffix for partial training fractions.
std::string model_label(const ExperimentSpec& spec);

// Rows are grouped by model label in first-appearance order; later rows for
// the same spec replace earlier ones. Averages are arithmetic means over the
// languages that have a value.
MetricTable build_table(std::span<const ResultRow> rows, std::span<const std::string> languages);
void write_table(std::ostream& out, const MetricTable& table);

// ------------------------------------------------------------ experiments

struct CurvePoint {
  std::string language;  // "average" for the mean over languages
  TrainMode mode = TrainMode::multitask;
  double fraction = 1.0;
  double accuracy = 0.0;
  double f1 = 0.0;
  double edit_distance = 0.0;
};

// Runs fraction x mode for every language and returns per-language points
// followed by averaged points (when more than one language is given).
std::vector<CurvePoint> learning_curve(std::span<const std::string> languages, std::span<const double> fractions,
                                       std::span<const TrainMode> modes, const RunConfig& config,
                                       const Workspace& workspace, double lambda, std::uint64_t seed,
                                       const RunOptions& options = {});

std::vector<CurvePoint> curve_points(std::span<const ResultRow> rows, std::span<const std::string> languages,
                                     std::span<const double> fractions, std::span<const TrainMode> modes,
                                     double synth_ratio = 0.0);

// curve.tsv plus one "<fraction> <value>" data file per (language, mode,
// metric): curve_<metric>_<language>_<mode>.dat.
void write_curve(const std::filesystem::path& dir, std::span<const CurvePoint> points);

// Runs ratio x mode per language (fraction 1.0) and returns the ledger rows.
std::vector<ResultRow> saturation_grid(std::span<const std::string> languages, std::span<const double> ratios,
                                       std::span<const TrainMode> modes, const RunConfig& config,
                                       const Workspace& workspace, double lambda, std::uint64_t seed,
                                       const RunOptions& options = {});

void validate_fraction(double fraction);
void validate_ratio(double ratio);

}  // namespace mtseg::harness
