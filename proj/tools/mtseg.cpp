// mtseg: data preparation, training, evaluation, synthetic data and
// experiment grids from the command line.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "mtseg/checkpoint.hpp"
#include "mtseg/config.hpp"
#include "mtseg/decoding.hpp"
#include "mtseg/error.hpp"
#include "mtseg/harness.hpp"
#include "mtseg/igt.hpp"
#include "mtseg/kernels.hpp"
#include "mtseg/metrics.hpp"
#include "mtseg/synth.hpp"
#include "mtseg/training.hpp"

namespace fs = std::filesystem;
using namespace mtseg;

namespace {

struct Common {
  std::string config_path;
  std::string data_dir = "data";
  std::string runs_dir = "runs";
  std::optional<int> epochs;
  std::optional<int> threads;
  std::optional<int> decoder_layers;

  RunConfig load() const {
    RunConfig rc = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (epochs) rc.train.max_epochs = *epochs;
    if (threads) rc.train.threads = *threads;
    if (decoder_layers) rc.model.decoder_layers = *decoder_layers;
    rc.model.validate();
    rc.train.validate();
    return rc;
  }
  harness::Workspace workspace() const { return {data_dir, runs_dir}; }
};

void add_common(CLI::App* app, Common& c, bool with_dirs = true) {
  app->add_option("--config", c.config_path, "JSON run config")->check(CLI::ExistingFile);
  if (with_dirs) {
    app->add_option("--data-dir", c.data_dir, "prepared data root")->capture_default_str();
    app->add_option("--runs-dir", c.runs_dir, "run outputs and ledger")->capture_default_str();
  }
  app->add_option("--epochs", c.epochs, "override max_epochs");
  app->add_option("--threads", c.threads, "decoding worker threads");
  app->add_option("--decoder-layers", c.decoder_layers, "override decoder layer count");
}

std::vector<TrainMode> parse_modes(const std::vector<std::string>& names) {
  std::vector<TrainMode> out;
  for (const auto& n : names) out.push_back(parse_mode(n));
  return out;
}

std::ofstream open_out(const std::string& path) {
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

void print_epoch(const EpochLog& e) { write_epoch_log(std::cerr, e); }

// ------------------------------------------------------------ prepare-data

struct PrepareArgs {
  std::vector<std::string> corpora;
  std::string language;
  std::uint64_t seed = 0;
  bool strict = false;
};

int prepare_data(const PrepareArgs& a, const Common& c) {
  const RunConfig rc = c.load();
  std::vector<igt::IGTEntry> entries;
  std::size_t issues = 0;
  for (const auto& path : a.corpora) {
    auto parsed = igt::parse_igt_corpus(path, {}, a.strict ? igt::ParseMode::strict : igt::ParseMode::lenient);
    for (const auto& issue : parsed.issues) std::cerr << path << ":" << issue.line << ": " << issue.message << "\n";
    issues += parsed.issues.size();
    entries.insert(entries.end(), parsed.entries.begin(), parsed.entries.end());
  }
  const auto extracted = igt::extract_word_examples(entries, a.language, rc.delimiters);
  for (const auto& w : extracted.warnings) std::cerr << "warning: " << w << "\n";
  const auto split = igt::split_unique_words(extracted.examples, a.seed);
  const fs::path dir = fs::path(c.data_dir) / a.language;
  fs::create_directories(dir);
  igt::write_split(dir, split);
  std::size_t punct = 0;
  for (const auto& ex : split.train)
    if (std::all_of(ex.surface.begin(), ex.surface.end(), [](unsigned char ch) { return ch < 128 && std::ispunct(ch); }))
      ++punct;
  std::cout << "language\t" << a.language << "\nentries\t" << entries.size() << "\nparse_issues\t" << issues
            << "\nalignment_warnings\t" << extracted.warnings.size() << "\nexamples\t" << extracted.examples.size()
            << "\ntrain\t" << split.train.size() << "\ndev\t" << split.dev.size() << "\ntest\t" << split.test.size()
            << "\npunctuation_train_words\t" << punct << "\nseed\t" << split.seed << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string language;
  std::optional<std::string> mode;
  std::optional<double> lambda;
  std::optional<std::uint64_t> seed;
  double fraction = 1.0;
  double synth_ratio = 0.0;
  std::string out;
};

int train_cmd(const TrainArgs& a, const Common& c) {
  RunConfig rc = c.load();
  if (a.mode) rc.train.mode = parse_mode(*a.mode);
  if (a.lambda) rc.train.lambda_seg = *a.lambda;
  if (a.seed) rc.train.seed = *a.seed;
  rc.train.validate();
  const auto ws = c.workspace();
  const auto split = igt::read_split(ws.language_dir(a.language), a.language, rc.delimiters);
  harness::ExperimentSpec spec{a.language, rc.train.mode, rc.train.lambda_seg, a.fraction, a.synth_ratio, rc.train.seed};
  spec = harness::normalized(spec);
  spec.validate();
  const auto train_set = harness::training_set(spec, split, ws, rc.delimiters);
  const Vocabularies vocabs = build_vocabularies(train_set, rc.delimiters);
  SegGlossModel<float> model(model_config_for(rc.model, rc.train.mode), vocab_sizes(vocabs), rc.train.seed);
  std::cerr << "parameters " << model.count_parameters() << ", train " << train_set.size() << ", dev "
            << split.dev.size() << ", kernels " << kernels::isa_name(kernels::active_isa()) << "\n";
  const std::string out = a.out.empty() ? (fs::path(c.runs_dir) / (spec.label() + ".ckpt")).string() : a.out;
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  CheckpointInfo info;
  info.vocabs = vocabs;
  info.language = a.language;
  info.delimiters = rc.delimiters;
  info.train_config = to_json(rc.train);
  TrainHooks hooks;
  hooks.on_epoch = print_epoch;
  hooks.on_improve = [&](const TrainState& s) {
    info.epoch = s.best_epoch;
    info.dev_accuracy = s.best_dev_accuracy;
    save_checkpoint(out, model, info);
  };
  const TrainState state = train(model, vocabs, train_set, split.dev, rc.train, hooks, rc.delimiters);
  std::cout << "best_epoch\t" << state.best_epoch << "\nbest_dev_accuracy\t" << state.best_dev_accuracy
            << "\ncheckpoint\t" << out << "\n";
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string checkpoint;
  std::string input;
  std::string language;
  std::string part = "test";
  int beam = 5;
  bool gloss = false;
  std::string predictions;
  std::string per_word;
  int threads = 1;
};

int evaluate_cmd(const EvaluateArgs& a, const Common& c) {
  const auto loaded = load_checkpoint<float>(a.checkpoint);
  const auto& info = loaded.info;
  const std::string language = a.language.empty() ? info.language : a.language;
  const fs::path input = a.input.empty() ? fs::path(c.data_dir) / language / (a.part + ".tsv") : fs::path(a.input);
  const auto gold = igt::read_split_file(input, language, info.delimiters);
  if (gold.empty()) throw Error("no examples in " + input.string());
  std::vector<std::string> surfaces;
  for (const auto& ex : gold) surfaces.push_back(ex.surface);
  BeamOptions opts;
  opts.beam_width = a.beam;
  const bool with_gloss = a.gloss && loaded.model->has_gloss_decoder();
  const auto preds = predict(*loaded.model, info.vocabs, surfaces, opts, with_gloss, a.threads);
  if (!a.predictions.empty()) write_predictions(a.predictions, preds);
  std::vector<metrics::SegmentationPair> pairs;
  for (std::size_t i = 0; i < gold.size(); ++i) pairs.push_back({gold[i].segmentation, preds[i].segmentation});
  const auto report = metrics::evaluate(pairs, info.delimiters);
  std::cout << std::fixed << std::setprecision(2) << "words\t" << gold.size() << "\nACC\t" << report.word_accuracy
            << "\nprecision\t" << report.precision << "\nrecall\t" << report.recall << "\nF1\t" << report.f1
            << "\npositional_F1\t" << report.positional_f1 << "\nED\t" << report.edit_distance_sum << "\n";
  if (with_gloss) {
    std::vector<metrics::SegmentationPair> gpairs;
    for (std::size_t i = 0; i < gold.size(); ++i) gpairs.push_back({gold[i].gloss, preds[i].gloss});
    std::cout << "gloss_ACC\t" << metrics::word_accuracy(gpairs) << "\n";
  }
  if (!a.per_word.empty()) {
    auto out = open_out(a.per_word);
    out << "surface\tgold\tpredicted\tdistance\n";
    for (std::size_t i = 0; i < gold.size(); ++i)
      out << gold[i].surface << '\t' << report.per_word[i].gold << '\t' << report.per_word[i].predicted << '\t'
          << report.per_word[i].distance << '\n';
  }
  return 0;
}

// ------------------------------------------------------ generate-synthetic

struct SynthArgs {
  std::string language;
  std::string fixtures;
  std::size_t budget = 0;
  int n_words = 3;
  int min_morphemes = 2;
  int max_morphemes = 5;
  std::size_t max_examples = 5;
  std::string dump_prompts;
  std::optional<int> concurrency;
  std::optional<double> rps;
};

int generate_synthetic(const SynthArgs& a, const Common& c) {
  const RunConfig rc = c.load();
  const auto ws = c.workspace();
  const auto split = igt::read_split(ws.language_dir(a.language), a.language, rc.delimiters);
  const auto stems = synth::mine_stems(split.train, a.max_examples, rc.delimiters);
  const auto inventory = synth::extract_inventory(split.train);
  synth::PromptOptions po;
  po.language_name = synth::language_display_name(a.language);
  po.n_words = a.n_words;
  po.min_morphemes = a.min_morphemes;
  po.max_morphemes = a.max_morphemes;
  std::vector<synth::PromptJob> jobs;
  for (const auto& s : stems) jobs.push_back({synth::build_prompt(s, inventory, po), s});
  std::cerr << stems.size() << " stems, " << inventory.entries.size() << " grammatical labels\n";

  if (!a.dump_prompts.empty()) {
    fs::create_directories(a.dump_prompts);
    for (const auto& j : jobs) {
      std::ofstream out(fs::path(a.dump_prompts) / (synth::prompt_id(j.prompt) + ".prompt.txt"));
      out << j.prompt;
    }
    std::cout << "prompts\t" << jobs.size() << "\n";
    return 0;
  }

  std::unique_ptr<synth::LlmClient> client;
  if (!a.fixtures.empty()) {
    client = std::make_unique<synth::FixtureClient>(a.fixtures);
  } else {
    synth::HttpClientOptions ho;
    const auto& s = rc.synth;
    ho.endpoint = s.value("endpoint", ho.endpoint);
    ho.model = s.value("model", ho.model);
    ho.temperature = s.value("temperature", ho.temperature);
    ho.api_key_env = s.value("api_key_env", ho.api_key_env);
    client = std::make_unique<synth::HttpChatClient>(ho);
  }
  synth::GenerateOptions go;
  go.budget = a.budget;
  go.concurrency = a.concurrency.value_or(rc.synth.value("concurrency", go.concurrency));
  go.requests_per_second = a.rps.value_or(rc.synth.value("requests_per_second", go.requests_per_second));
  if (!a.fixtures.empty()) go.requests_per_second = 0.0;
  synth::Validator validator(inventory, split.train, rc.delimiters);
  synth::SynthCache cache(ws.synthetic_cache(a.language));
  const auto records = synth::generate(*client, jobs, validator, go, &cache);
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) ++counts[r.status == synth::Status::accepted ? "accepted" : "rejected:" + r.reason];
  for (const auto& [k, n] : counts) std::cout << k << '\t' << n << '\n';
  return 0;
}

// ------------------------------------------------------------ experiments

struct GridArgs {
  std::vector<std::string> languages;
  std::vector<double> values;
  std::vector<std::string> modes = {"multitask", "single_task"};
  double lambda = 0.9;
  std::uint64_t seed = 1;
  bool force = false;
  bool single_task = false;
  std::string out;
};

harness::RunOptions run_options(const GridArgs& a, std::vector<std::string>& failures) {
  harness::RunOptions o;
  o.force = a.force;
  o.on_epoch = print_epoch;
  o.failures = &failures;
  return o;
}

int report_failures(const std::vector<std::string>& failures) {
  for (const auto& f : failures) std::cerr << "failed: " << f << "\n";
  return failures.empty() ? 0 : 1;
}

int sweep_lambda_cmd(const GridArgs& a, const Common& c) {
  const RunConfig rc = c.load();
  if (a.values.empty()) throw ConfigError("lambda grid is empty");
  if (a.languages.size() != 1) throw ConfigError("sweep-lambda takes exactly one language");
  std::vector<std::string> failures;
  const auto opts = run_options(a, failures);
  std::vector<SweepRow> rows;
  auto add = [&](const harness::ExperimentSpec& spec, const std::string& label) {
    try {
      const auto r = harness::run(spec, rc, c.workspace(), opts);
      rows.push_back({label, r.spec.lambda, r.spec.mode, r.accuracy, r.f1, r.edit_distance});
    } catch (const Error& e) {
      failures.push_back(e.what());
    }
  };
  for (double l : a.values) {
    std::ostringstream label;
    label << l;
    add({a.languages[0], TrainMode::multitask, l, 1.0, 0.0, a.seed}, label.str());
  }
  if (a.single_task) add({a.languages[0], TrainMode::single_task, 1.0, 1.0, 0.0, a.seed}, "Single-task Baseline");
  if (a.out.empty()) {
    write_sweep_table(std::cout, rows);
  } else {
    auto out = open_out(a.out);
    write_sweep_table(out, rows);
  }
  return report_failures(failures);
}

int learning_curve_cmd(const GridArgs& a, const Common& c) {
  const RunConfig rc = c.load();
  std::vector<std::string> failures;
  const auto modes = parse_modes(a.modes);
  const auto values = a.values.empty() ? std::vector<double>{0.25, 0.5, 0.75, 1.0} : a.values;
  const auto points =
      harness::learning_curve(a.languages, values, modes, rc, c.workspace(), a.lambda, a.seed, run_options(a, failures));
  const fs::path dir = a.out.empty() ? fs::path(c.runs_dir) / "learning_curve" : fs::path(a.out);
  harness::write_curve(dir, points);
  std::ifstream table(dir / "curve.tsv");
  std::cout << table.rdbuf();
  return report_failures(failures);
}

int saturation_grid_cmd(const GridArgs& a, const Common& c) {
  const RunConfig rc = c.load();
  std::vector<std::string> failures;
  const auto modes = parse_modes(a.modes);
  const auto values = a.values.empty() ? std::vector<double>{0.0, 0.25, 0.5, 0.75} : a.values;
  const auto rows =
      harness::saturation_grid(a.languages, values, modes, rc, c.workspace(), a.lambda, a.seed, run_options(a, failures));
  const auto table = harness::build_table(rows, a.languages);
  if (a.out.empty()) {
    harness::write_table(std::cout, table);
  } else {
    auto out = open_out(a.out);
    harness::write_table(out, table);
  }
  return report_failures(failures);
}

struct ReportArgs {
  std::vector<std::string> languages;
  std::vector<double> fractions = {1.0};
  std::string out;
};

int report_cmd(const ReportArgs& a, const Common& c) {
  const auto rows = c.workspace().ledger().rows();
  std::vector<std::string> languages = a.languages;
  if (languages.empty()) {
    for (const auto& r : rows)
      if (std::find(languages.begin(), languages.end(), r.spec.language) == languages.end())
        languages.push_back(r.spec.language);
  }
  std::vector<harness::ResultRow> selected;
  for (const auto& r : rows)
    for (double f : a.fractions)
      if (std::abs(r.spec.train_fraction - f) < 1e-12) selected.push_back(r);
  const auto table = harness::build_table(selected, languages);
  if (a.out.empty()) {
    harness::write_table(std::cout, table);
  } else {
    auto out = open_out(a.out);
    harness::write_table(out, table);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multitask canonical morpheme segmentation toolkit"};
  app.require_subcommand(1);
  Common common;
  int rc = 0;

  PrepareArgs prep;
  auto* p = app.add_subcommand("prepare-data", "Parse IGT corpora and write a 6:2:2 unique-word split");
  p->add_option("--corpus", prep.corpora, "IGT file (repeatable)")->required()->check(CLI::ExistingFile);
  p->add_option("--language", prep.language, "language code")->required();
  p->add_option("--seed", prep.seed, "split seed")->capture_default_str();
  p->add_flag("--strict", prep.strict, "abort on the first malformed entry");
  add_common(p, common);
  p->callback([&] { rc = prepare_data(prep, common); });

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train one model and keep the best-dev checkpoint");
  t->add_option("--language", tr.language)->required();
  t->add_option("--mode", tr.mode, "multitask | single_task");
  t->add_option("--lambda", tr.lambda, "segmentation loss weight");
  t->add_option("--seed", tr.seed);
  t->add_option("--fraction", tr.fraction, "train fraction")->capture_default_str();
  t->add_option("--synth-ratio", tr.synth_ratio, "synthetic ratio")->capture_default_str();
  t->add_option("--out", tr.out, "checkpoint path");
  add_common(t, common);
  t->callback([&] { rc = train_cmd(tr, common); });

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Decode a split with a checkpoint and score it");
  e->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
  e->add_option("--input", ev.input, "gold TSV (default <data-dir>/<language>/<part>.tsv)");
  e->add_option("--language", ev.language);
  e->add_option("--part", ev.part)->check(CLI::IsMember({"train", "dev", "test"}))->capture_default_str();
  e->add_option("--beam", ev.beam)->check(CLI::PositiveNumber)->capture_default_str();
  e->add_flag("--gloss", ev.gloss, "also decode glosses");
  e->add_option("--predictions", ev.predictions, "write predictions TSV");
  e->add_option("--per-word", ev.per_word, "write per-word diagnostics TSV");
  e->add_option("--workers", ev.threads)->check(CLI::PositiveNumber)->capture_default_str();
  add_common(e, common);
  e->callback([&] { rc = evaluate_cmd(ev, common); });

  SynthArgs sy;
  auto* g = app.add_subcommand("generate-synthetic", "Prompt an LLM (or fixtures) for synthetic words");
  g->add_option("--language", sy.language)->required();
  g->add_option("--fixtures", sy.fixtures, "offline response directory");
  g->add_option("--budget", sy.budget, "maximum accepted examples");
  g->add_option("--n-words", sy.n_words)->capture_default_str();
  g->add_option("--min-morphemes", sy.min_morphemes)->capture_default_str();
  g->add_option("--max-morphemes", sy.max_morphemes)->capture_default_str();
  g->add_option("--max-examples", sy.max_examples, "examples per stem in the prompt")->capture_default_str();
  g->add_option("--dump-prompts", sy.dump_prompts, "write prompts to a directory and exit");
  g->add_option("--concurrency", sy.concurrency);
  g->add_option("--rps", sy.rps, "requests per second");
  add_common(g, common);
  g->callback([&] {
    if (sy.dump_prompts.empty() && sy.budget == 0) throw ConfigError("--budget must be positive");
    rc = generate_synthetic(sy, common);
  });

  GridArgs sw;
  auto* s = app.add_subcommand("sweep-lambda", "Train and test one model per lambda");
  s->add_option("--language", sw.languages)->required()->expected(1);
  s->add_option("--grid", sw.values, "lambda values")->delimiter(',')->required();
  s->add_flag("--single-task", sw.single_task, "add the single-task baseline row");
  s->add_option("--seed", sw.seed)->capture_default_str();
  s->add_flag("--force", sw.force, "re-run completed specs");
  s->add_option("--out", sw.out, "table path");
  add_common(s, common);
  s->callback([&] { rc = sweep_lambda_cmd(sw, common); });

  GridArgs lc;
  auto* l = app.add_subcommand("learning-curve", "Train at nested train fractions");
  l->add_option("--languages", lc.languages)->delimiter(',')->required();
  l->add_option("--fractions", lc.values)->delimiter(',');
  l->add_option("--modes", lc.modes)->delimiter(',')->capture_default_str();
  l->add_option("--lambda", lc.lambda)->capture_default_str();
  l->add_option("--seed", lc.seed)->capture_default_str();
  l->add_flag("--force", lc.force);
  l->add_option("--out", lc.out, "output directory");
  add_common(l, common);
  l->callback([&] { rc = learning_curve_cmd(lc, common); });

  GridArgs sg;
  auto* sa = app.add_subcommand("saturation-grid", "Train with synthetic data at several ratios");
  sa->add_option("--languages", sg.languages)->delimiter(',')->required();
  sa->add_option("--ratios", sg.values)->delimiter(',');
  sa->add_option("--modes", sg.modes)->delimiter(',')->capture_default_str();
  sa->add_option("--lambda", sg.lambda)->capture_default_str();
  sa->add_option("--seed", sg.seed)->capture_default_str();
  sa->add_flag("--force", sg.force);
  sa->add_option("--out", sg.out, "table path");
  add_common(sa, common);
  sa->callback([&] { rc = saturation_grid_cmd(sg, common); });

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "Tabulate ledger rows per model and language");
  r->add_option("--languages", rp.languages)->delimiter(',');
  r->add_option("--fractions", rp.fractions)->delimiter(',')->capture_default_str();
  r->add_option("--out", rp.out);
  add_common(r, common);
  r->callback([&] { rc = report_cmd(rp, common); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return rc;
}
