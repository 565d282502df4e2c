#include "mtseg/harness.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "mtseg/checkpoint.hpp"
#include "mtseg/error.hpp"
#include "mtseg/synth.hpp"

namespace mtseg::harness {
namespace {

using nlohmann::json;

bool in_set(double v, std::initializer_list<double> allowed) {
  for (double a : allowed)
    if (std::abs(v - a) < 1e-12) return true;
  return false;
}

std::string num(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

std::string hex64(std::string_view text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

class FileLock {
 public:
  FileLock(const std::filesystem::path& path, int flags, int op) {
    fd_ = ::open(path.c_str(), flags, 0644);
    if (fd_ < 0) throw IoError("cannot open ledger " + path.string());
    if (::flock(fd_, op) != 0) {
      ::close(fd_);
      throw IoError("cannot lock ledger " + path.string());
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;
  int fd() const { return fd_; }

 private:
  int fd_;
};

}  // namespace

void validate_fraction(double fraction) {
  if (!in_set(fraction, {0.25, 0.5, 0.75, 1.0}))
    throw ConfigError("train fraction " + num(fraction) + " is not one of 0.25, 0.5, 0.75, 1.0");
}

void validate_ratio(double ratio) {
  if (!in_set(ratio, {0.0, 0.25, 0.5, 0.75}))
    throw ConfigError("synthetic ratio " + num(ratio) + " is not one of 0, 0.25, 0.5, 0.75");
}

void ExperimentSpec::validate() const {
  if (language.empty()) throw ConfigError("experiment needs a language");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must be in [0, 1]");
  validate_fraction(train_fraction);
  validate_ratio(synth_ratio);
}

std::string ExperimentSpec::label() const {
  return language + "." + std::string(mode_name(mode)) + ".l" + num(lambda) + ".f" + num(train_fraction) + ".s" +
         num(synth_ratio) + ".seed" + std::to_string(seed);
}

ExperimentSpec normalized(ExperimentSpec spec) {
  if (spec.mode == TrainMode::single_task) spec.lambda = 1.0;
  return spec;
}

json to_json(const ResultRow& r) {
  return {{"language", r.spec.language},
          {"mode", std::string(mode_name(r.spec.mode))},
          {"lambda", r.spec.lambda},
          {"train_fraction", r.spec.train_fraction},
          {"synth_ratio", r.spec.synth_ratio},
          {"seed", r.spec.seed},
          {"config_hash", r.config_hash},
          {"status", r.status},
          {"error", r.error},
          {"ACC", r.accuracy},
          {"F1", r.f1},
          {"ED", r.edit_distance},
          {"seconds", r.seconds},
          {"checkpoint", r.checkpoint},
          {"epochs", r.epochs},
          {"best_epoch", r.best_epoch},
          {"best_dev_accuracy", r.best_dev_accuracy},
          {"train_size", r.train_size},
          {"synthetic_added", r.synthetic_added},
          {"parameters", r.parameters}};
}

ResultRow row_from_json(const json& j) {
  ResultRow r;
  r.spec.language = j.at("language").get<std::string>();
  r.spec.mode = parse_mode(j.at("mode").get<std::string>());
  r.spec.lambda = j.at("lambda").get<double>();
  r.spec.train_fraction = j.at("train_fraction").get<double>();
  r.spec.synth_ratio = j.at("synth_ratio").get<double>();
  r.spec.seed = j.at("seed").get<std::uint64_t>();
  r.config_hash = j.value("config_hash", "");
  r.status = j.at("status").get<std::string>();
  r.error = j.value("error", "");
  r.accuracy = j.value("ACC", 0.0);
  r.f1 = j.value("F1", 0.0);
  r.edit_distance = j.value("ED", 0L);
  r.seconds = j.value("seconds", 0.0);
  r.checkpoint = j.value("checkpoint", "");
  r.epochs = j.value("epochs", 0);
  r.best_epoch = j.value("best_epoch", 0);
  r.best_dev_accuracy = j.value("best_dev_accuracy", 0.0);
  r.train_size = j.value("train_size", 0L);
  r.synthetic_added = j.value("synthetic_added", 0L);
  r.parameters = j.value("parameters", 0L);
  return r;
}

std::string config_hash(const RunConfig& config) {
  json train = to_json(config.train);
  for (const char* k : {"mode", "lambda_seg", "seed", "threads"}) train.erase(k);
  json model = to_json(config.model);
  model.erase("multitask");
  const json all = {{"model", model}, {"train", train}, {"delimiters", config.delimiters}};
  return hex64(all.dump());
}

// ------------------------------------------------------------------ ledger

Ledger::Ledger(std::filesystem::path path) : path_(std::move(path)) {}

std::vector<ResultRow> Ledger::rows() const {
  std::vector<ResultRow> out;
  if (!std::filesystem::exists(path_)) return out;
  FileLock lock(path_, O_RDONLY, LOCK_SH);
  std::ifstream in(path_, std::ios::binary);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(row_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(path_.string() + ":" + std::to_string(n) + ": " + e.what(), n);
    }
  }
  return out;
}

std::optional<ResultRow> Ledger::completed(const ExperimentSpec& spec, const std::string& hash) const {
  std::optional<ResultRow> found;
  for (auto& r : rows())
    if (r.ok() && r.spec == spec && r.config_hash == hash) found = std::move(r);
  return found;
}

void Ledger::append(const ResultRow& row) const {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  const std::string line = to_json(row).dump() + "\n";
  FileLock lock(path_, O_WRONLY | O_CREAT | O_APPEND, LOCK_EX);
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t w = ::write(lock.fd(), line.data() + done, line.size() - done);
    if (w < 0) throw IoError("write to ledger " + path_.string() + " failed");
    done += static_cast<std::size_t>(w);
  }
}

// --------------------------------------------------------------------- run

std::vector<igt::WordExample> training_set(const ExperimentSpec& spec, const igt::DataSplit& split,
                                           const Workspace& workspace, const std::string& delimiters) {
  auto train = igt::take_fraction(split.train, spec.train_fraction);
  if (spec.synth_ratio <= 0.0) return train;
  const auto cache_path = workspace.synthetic_cache(spec.language);
  if (!std::filesystem::exists(cache_path))
    throw ConfigError("synthetic ratio " + num(spec.synth_ratio) + " needs a synthetic cache at " +
                      cache_path.string());
  const auto records = synth::SynthCache(cache_path).records();
  const auto pool = synth::accepted_examples(records, spec.language, delimiters);
  return synth::mix(train, pool, spec.synth_ratio, spec.seed);
}

ResultRow run(const ExperimentSpec& input, const RunConfig& config, const Workspace& workspace,
              const RunOptions& options) {
  const ExperimentSpec spec = normalized(input);
  spec.validate();
  const std::string hash = config_hash(config);
  const Ledger ledger = workspace.ledger();
  if (!options.force)
    if (auto done = ledger.completed(spec, hash)) return *done;

  ResultRow row;
  row.spec = spec;
  row.config_hash = hash;
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  try {
    const auto split = igt::read_split(workspace.language_dir(spec.language), spec.language, config.delimiters);
    const auto train = training_set(spec, split, workspace, config.delimiters);
    row.train_size = static_cast<long>(train.size());
    row.synthetic_added = static_cast<long>(std::count_if(train.begin(), train.end(), [](const auto& e) { return e.synthetic; }));

    TrainConfig tc = config.train;
    tc.mode = spec.mode;
    tc.lambda_seg = spec.lambda;
    tc.seed = spec.seed;
    const auto run_dir = workspace.runs_dir / (spec.label() + "." + hash.substr(0, 8));
    std::filesystem::create_directories(run_dir);
    std::ofstream log(run_dir / "train.log");
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochLog& e) {
      write_epoch_log(log, e);
      log.flush();
      if (options.on_epoch) options.on_epoch(e);
    };
    const RunOutcome out = fit_and_evaluate(train, split.dev, split.test, config.model, tc, config.delimiters, hooks);

    CheckpointInfo info;
    info.vocabs = out.vocabs;
    info.language = spec.language;
    info.delimiters = config.delimiters;
    info.epoch = out.state.best_epoch;
    info.dev_accuracy = out.state.best_dev_accuracy;
    info.seed = spec.seed;
    info.train_config = to_json(tc);
    row.checkpoint = (run_dir / "model.ckpt").string();
    save_checkpoint(row.checkpoint, *out.model, info);
    write_predictions(run_dir / "predictions.tsv", out.predictions);

    row.status = "ok";
    row.accuracy = out.test.word_accuracy;
    row.f1 = out.test.f1;
    row.edit_distance = out.test.edit_distance_sum;
    row.epochs = out.state.epoch;
    row.best_epoch = out.state.best_epoch;
    row.best_dev_accuracy = out.state.best_dev_accuracy;
    row.parameters = out.parameters;
  } catch (const std::exception& e) {
    row.status = "failed";
    row.error = e.what();
    row.seconds = elapsed();
    ledger.append(row);
    throw Error(spec.label() + ": " + e.what());
  }
  row.seconds = elapsed();
  ledger.append(row);
  return row;
}

// ------------------------------------------------------------------ tables

std::string model_label(const ExperimentSpec& spec) {
  std::string label = spec.mode == TrainMode::multitask ? "M" : "S";
  if (spec.mode == TrainMode::multitask && std::abs(spec.lambda - 0.9) > 1e-12) label += " (lambda=" + num(spec.lambda) + ")";
  if (spec.synth_ratio > 0.0) label += "+LLM (" + num(spec.synth_ratio) + ")";
  if (spec.train_fraction < 1.0) label += " @" + num(spec.train_fraction * 100) + "%";
  return label;
}

MetricTable build_table(std::span<const ResultRow> rows, std::span<const std::string> languages) {
  MetricTable table;
  table.languages.assign(languages.begin(), languages.end());
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, const ResultRow*>> cells;
  for (const auto& r : rows) {
    if (!r.ok()) continue;
    const auto label = model_label(r.spec);
    if (!cells.contains(label)) order.push_back(label);
    cells[label][r.spec.language] = &r;
  }
  for (const auto& label : order) {
    for (const char* metric : {"ACC", "F1", "ED"}) {
      MetricTable::Row row{label, metric, {}, std::nullopt};
      double sum = 0.0;
      int n = 0;
      for (const auto& lang : table.languages) {
        const auto it = cells[label].find(lang);
        if (it == cells[label].end()) {
          row.values.push_back(std::nullopt);
          continue;
        }
        const ResultRow& r = *it->second;
        const double v = metric[0] == 'A' ? r.accuracy : metric[0] == 'F' ? r.f1 : static_cast<double>(r.edit_distance);
        row.values.push_back(v);
        sum += v;
        ++n;
      }
      if (n > 0) row.average = sum / n;
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

void write_table(std::ostream& out, const MetricTable& table) {
  out << "model\tmetric";
  for (const auto& l : table.languages) out << '\t' << l;
  out << "\tave\n";
  auto cell = [&](const std::optional<double>& v, bool integral) {
    out << '\t';
    if (!v) {
      out << '-';
    } else if (integral) {
      out << static_cast<long>(std::llround(*v));
    } else {
      out << std::fixed << std::setprecision(2) << *v << std::defaultfloat;
    }
  };
  for (const auto& row : table.rows) {
    out << row.model << '\t' << row.metric;
    for (const auto& v : row.values) cell(v, row.metric == "ED");
    cell(row.average, false);
    out << '\n';
  }
}

// ------------------------------------------------------------ experiments

namespace {

void run_into(std::vector<ResultRow>& rows, const ExperimentSpec& spec, const RunConfig& config,
              const Workspace& workspace, const RunOptions& options) {
  try {
    rows.push_back(run(spec, config, workspace, options));
  } catch (const Error& e) {
    if (!options.failures) throw;
    options.failures->push_back(e.what());
  }
}

}  // namespace

std::vector<CurvePoint> curve_points(std::span<const ResultRow> rows, std::span<const std::string> languages,
                                     std::span<const double> fractions, std::span<const TrainMode> modes,
                                     double synth_ratio) {
  std::vector<CurvePoint> points;
  auto find = [&](const std::string& lang, TrainMode mode, double fraction) -> const ResultRow* {
    const ResultRow* hit = nullptr;
    for (const auto& r : rows)
      if (r.ok() && r.spec.language == lang && r.spec.mode == mode && std::abs(r.spec.train_fraction - fraction) < 1e-12 &&
          std::abs(r.spec.synth_ratio - synth_ratio) < 1e-12)
        hit = &r;
    return hit;
  };
  for (const auto& lang : languages)
    for (TrainMode mode : modes)
      for (double f : fractions)
        if (const ResultRow* r = find(lang, mode, f))
          points.push_back({lang, mode, f, r->accuracy, r->f1, static_cast<double>(r->edit_distance)});
  if (languages.size() > 1) {
    for (TrainMode mode : modes)
      for (double f : fractions) {
        CurvePoint avg{"average", mode, f, 0.0, 0.0, 0.0};
        int n = 0;
        for (const auto& lang : languages)
          if (const ResultRow* r = find(lang, mode, f)) {
            avg.accuracy += r->accuracy;
            avg.f1 += r->f1;
            avg.edit_distance += static_cast<double>(r->edit_distance);
            ++n;
          }
        if (n == 0) continue;
        avg.accuracy /= n;
        avg.f1 /= n;
        avg.edit_distance /= n;
        points.push_back(avg);
      }
  }
  return points;
}

std::vector<CurvePoint> learning_curve(std::span<const std::string> languages, std::span<const double> fractions,
                                       std::span<const TrainMode> modes, const RunConfig& config,
                                       const Workspace& workspace, double lambda, std::uint64_t seed,
                                       const RunOptions& options) {
  if (languages.empty() || fractions.empty() || modes.empty())
    throw ConfigError("learning curve needs languages, fractions and modes");
  for (double f : fractions) validate_fraction(f);
  std::vector<ResultRow> rows;
  for (const auto& lang : languages)
    for (TrainMode mode : modes)
      for (double f : fractions) run_into(rows, {lang, mode, lambda, f, 0.0, seed}, config, workspace, options);
  return curve_points(rows, languages, fractions, modes);
}

void write_curve(const std::filesystem::path& dir, std::span<const CurvePoint> points) {
  std::filesystem::create_directories(dir);
  std::ofstream table(dir / "curve.tsv");
  if (!table) throw IoError("cannot write " + (dir / "curve.tsv").string());
  table << "language\tmode\tfraction\tACC\tF1\tED\n";
  std::map<std::string, std::ofstream> files;
  for (const auto& p : points) {
    table << p.language << '\t' << mode_name(p.mode) << '\t' << p.fraction << '\t' << p.accuracy << '\t' << p.f1
          << '\t' << p.edit_distance << '\n';
    for (const auto& [metric, value] : {std::pair{"f1", p.f1}, std::pair{"acc", p.accuracy}}) {
      const std::string name = std::string("curve_") + metric + "_" + p.language + "_" + std::string(mode_name(p.mode)) + ".dat";
      auto& f = files[name];
      if (!f.is_open()) f.open(dir / name);
      f << p.fraction << ' ' << value << '\n';
    }
  }
}

std::vector<ResultRow> saturation_grid(std::span<const std::string> languages, std::span<const double> ratios,
                                       std::span<const TrainMode> modes, const RunConfig& config,
                                       const Workspace& workspace, double lambda, std::uint64_t seed,
                                       const RunOptions& options) {
  if (languages.empty() || ratios.empty() || modes.empty())
    throw ConfigError("saturation grid needs languages, ratios and modes");
  for (double r : ratios) validate_ratio(r);
  std::vector<ResultRow> rows;
  for (TrainMode mode : modes)
    for (double r : ratios)
      for (const auto& lang : languages) run_into(rows, {lang, mode, lambda, 1.0, r, seed}, config, workspace, options);
  return rows;
}

}  // namespace mtseg::harness
