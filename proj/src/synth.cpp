#include "mtseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iterator>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mtseg/random.hpp"
#include "mtseg/unicode.hpp"
#include "mtseg/vocab.hpp"

namespace mtseg::synth {
namespace {

std::string concat(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) out += p;
  return out;
}

// Index of the first morpheme with a lexical gloss, or -1.
int first_lexical(const igt::WordExample& ex) {
  if (ex.alignment_warning) return -1;
  for (std::size_t i = 0; i < ex.gloss_morphemes.size(); ++i)
    if (!symbols::is_grammatical_label(ex.gloss_morphemes[i])) return static_cast<int>(i);
  return -1;
}

std::string trim(std::string_view s) {
  const auto not_junk = [](char c) { return !(std::isspace(static_cast<unsigned char>(c)) || c == '"' || c == '*' || c == '`'); };
  auto b = std::find_if(s.begin(), s.end(), not_junk);
  auto e = std::find_if(s.rbegin(), std::string_view::reverse_iterator(b), not_junk).base();
  return std::string(b, e);
}

}  // namespace

std::vector<igt::WordExample> find_alternating_words(std::span<const igt::WordExample> train,
                                                     std::string_view delimiters) {
  std::vector<igt::WordExample> out;
  for (const auto& ex : train)
    if (concat(igt::split_morphemes(ex.segmentation, delimiters).morphemes) != ex.surface) out.push_back(ex);
  return out;
}

std::vector<StemRecord> mine_stems(std::span<const igt::WordExample> train, std::size_t max_examples,
                                   std::string_view delimiters) {
  const auto alternating = find_alternating_words(train, delimiters);
  std::map<std::pair<std::string, std::string>, StemRecord> by_key;
  auto add = [&](StemRecord& rec, const igt::WordExample& ex) {
    if (rec.examples.size() >= max_examples) return;
    for (const auto& e : rec.examples)
      if (e.same_triple(ex)) return;
    rec.examples.push_back(ex);
  };
  for (const auto& ex : alternating) {
    const int i = first_lexical(ex);
    if (i < 0) continue;
    const auto key = std::make_pair(ex.canonical_morphemes[static_cast<std::size_t>(i)],
                                    ex.gloss_morphemes[static_cast<std::size_t>(i)]);
    auto& rec = by_key[key];
    rec.stem = key.first;
    rec.meaning = key.second;
    add(rec, ex);
  }
  for (const auto& ex : train) {
    const int i = first_lexical(ex);
    if (i < 0) continue;
    auto it = by_key.find({ex.canonical_morphemes[static_cast<std::size_t>(i)],
                           ex.gloss_morphemes[static_cast<std::size_t>(i)]});
    if (it != by_key.end()) add(it->second, ex);
  }
  std::vector<StemRecord> out;
  for (auto& [key, rec] : by_key) out.push_back(std::move(rec));
  return out;
}

MorphemeInventory extract_inventory(std::span<const igt::WordExample> train) {
  std::map<std::string, std::map<std::string, long>> counts;
  for (const auto& ex : train) {
    if (ex.alignment_warning) continue;
    for (std::size_t i = 0; i < ex.gloss_morphemes.size(); ++i) {
      const auto& label = ex.gloss_morphemes[i];
      if (symbols::is_grammatical_label(label) && !ex.canonical_morphemes[i].empty())
        ++counts[label][ex.canonical_morphemes[i]];
    }
  }
  MorphemeInventory inv;
  for (auto& [label, forms] : counts) {
    std::vector<std::pair<std::string, long>> ranked(forms.begin(), forms.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    auto& out = inv.entries[label];
    for (auto& [form, n] : ranked) out.push_back(form);
  }
  return inv;
}

std::string language_display_name(std::string_view code) {
  static const std::map<std::string, std::string, std::less<>> names = {
      {"arp", "Arapaho"}, {"ddo", "Tsez"},    {"git", "Gitksan"}, {"lez", "Lezgi"},
      {"ntu", "Natügu"},  {"nyb", "Nyangbo"}, {"usp", "Uspanteko"},
  };
  const auto it = names.find(code);
  return it == names.end() ? std::string(code) : it->second;
}

std::string build_prompt(const StemRecord& stem, const MorphemeInventory& inventory, const PromptOptions& o) {
  if (inventory.empty()) throw ConfigError("morpheme inventory is empty");
  if (stem.examples.empty()) throw ConfigError("stem '" + stem.stem + "' has no examples");
  if (o.n_words < 1) throw ConfigError("n_words must be >= 1");
  if (o.min_morphemes < 1 || o.max_morphemes < o.min_morphemes) throw ConfigError("bad morpheme count range");
  std::ostringstream p;
  p << "You are a linguistics expert of " << o.language_name
    << ". Your job is to generate new words based on the examples you learned. You are given this stem \""
    << stem.stem << "\", its meaning is \"" << stem.meaning << "\". Here are several word examples of this stems: \n\n";
  for (std::size_t i = 0; i < stem.examples.size(); ++i) {
    const auto& ex = stem.examples[i];
    p << "Example " << i + 1 << ":\n\n"
      << "surface form: " << ex.surface << ", canonical segmentation: " << ex.segmentation << ", gloss: " << ex.gloss
      << "\n\n";
  }
  p << "You are also given a list of grammatical morphemes and their corresponding gloss: \n\n";
  for (const auto& [label, forms] : inventory.entries)
    p << "Grammatical gloss \"" << label << "\", its morpheme is \"" << forms.front() << "\"\n\n";
  p << "Can you generate " << o.n_words << " new words using the stem and randomly use " << o.min_morphemes << "-"
    << o.max_morphemes
    << " grammatical morphemes. You need to return the result in the same format as the examples (word, canonical "
       "segmentation, and gloss). Please note that canonical segmentation will have character change. \n";
  return p.str();
}

std::vector<ParsedTriple> parse_response(std::string_view text) {
  static const std::regex pattern(
      R"((?:surface\s+form|word)\s*[:=]\s*([^,\n]+?)\s*,\s*canonical\s+segmentation\s*[:=]\s*([^,\n]+?)\s*,\s*gloss\s*[:=]\s*([^\s,]+))",
      std::regex::icase);
  std::vector<ParsedTriple> out;
  std::string s;
  std::copy_if(text.begin(), text.end(), std::back_inserter(s), [](char c) { return c != '*' && c != '`'; });
  for (auto it = std::sregex_iterator(s.begin(), s.end(), pattern); it != std::sregex_iterator(); ++it) {
    ParsedTriple t{trim((*it)[1].str()), trim((*it)[2].str()), trim((*it)[3].str())};
    while (!t.gloss.empty() && (t.gloss.back() == '.' || t.gloss.back() == ';')) t.gloss.pop_back();
    out.push_back({unicode::nfc(t.surface), unicode::nfc(t.segmentation), unicode::nfc(t.gloss)});
  }
  return out;
}

Validator::Validator(const MorphemeInventory& inventory, std::span<const igt::WordExample> gold_train,
                     std::string delimiters)
    : inventory_(inventory), delimiters_(std::move(delimiters)) {
  for (const auto& ex : gold_train) gold_.emplace_back(ex.surface, ex.segmentation, ex.gloss);
  std::sort(gold_.begin(), gold_.end());
}

std::string Validator::check(const ParsedTriple& t, const StemRecord& stem) const {
  igt::WordExample ex;
  try {
    ex = igt::make_example(t.surface, t.segmentation, t.gloss, "", delimiters_);
  } catch (const Error&) {
    return "malformed";
  }
  if (ex.alignment_warning) return "alignment";
  const int lex = first_lexical(ex);
  if (lex < 0 || ex.canonical_morphemes[static_cast<std::size_t>(lex)] != stem.stem ||
      ex.gloss_morphemes[static_cast<std::size_t>(lex)] != stem.meaning)
    return "stem";
  for (const auto& label : ex.gloss_morphemes)
    if (symbols::is_grammatical_label(label) && !inventory_.contains(label)) return "inventory";
  if (std::binary_search(gold_.begin(), gold_.end(), std::make_tuple(t.surface, t.segmentation, t.gloss)))
    return "duplicate";
  return {};
}

std::string prompt_id(std::string_view prompt) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : prompt) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

FixtureClient::FixtureClient(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!std::filesystem::is_directory(dir_)) throw ConfigError("fixture directory " + dir_.string() + " does not exist");
}

std::string FixtureClient::complete(const std::string& prompt) {
  std::ifstream in(dir_ / (prompt_id(prompt) + ".txt"), std::ios::binary);
  if (!in) return {};
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ------------------------------------------------------------------- cache

namespace {

nlohmann::json record_json(const SyntheticExample& r) {
  return {{"surface", r.surface},     {"segmentation", r.segmentation},
          {"gloss", r.gloss},         {"stem", r.stem},
          {"meaning", r.meaning},     {"status", r.status == Status::accepted ? "accepted" : "rejected"},
          {"reason", r.reason},       {"raw_response", r.raw_response},
          {"prompt_id", r.prompt_id}};
}

SyntheticExample record_from(const nlohmann::json& j) {
  SyntheticExample r;
  r.surface = j.value("surface", "");
  r.segmentation = j.value("segmentation", "");
  r.gloss = j.value("gloss", "");
  r.stem = j.value("stem", "");
  r.meaning = j.value("meaning", "");
  r.status = j.value("status", "rejected") == "accepted" ? Status::accepted : Status::rejected;
  r.reason = j.value("reason", "");
  r.raw_response = j.value("raw_response", "");
  r.prompt_id = j.value("prompt_id", "");
  return r;
}

}  // namespace

SynthCache::SynthCache(std::filesystem::path path) : path_(std::move(path)) {
  for (const auto& r : records()) responses_.try_emplace(r.prompt_id, r.raw_response);
}

std::optional<std::string> SynthCache::response(const std::string& id) const {
  const auto it = responses_.find(id);
  if (it == responses_.end()) return std::nullopt;
  return it->second;
}

void SynthCache::append(std::span<const SyntheticExample> records) {
  if (records.empty()) return;
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot append to synthetic cache " + path_.string());
  for (const auto& r : records) {
    out << record_json(r).dump() << '\n';
    responses_.try_emplace(r.prompt_id, r.raw_response);
  }
}

std::vector<SyntheticExample> SynthCache::records() const {
  std::vector<SyntheticExample> out;
  std::ifstream in(path_, std::ios::binary);
  if (!in) return out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(record_from(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path_.string() + ": " + e.what(), n);
    }
  }
  return out;
}

// -------------------------------------------------------------- generation

namespace {

class RateLimiter {
 public:
  explicit RateLimiter(double per_second)
      : interval_(per_second > 0 ? std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                       std::chrono::duration<double>(1.0 / per_second))
                                 : std::chrono::steady_clock::duration::zero()) {}

  void acquire() {
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard lock(mu_);
      const auto now = std::chrono::steady_clock::now();
      slot = std::max(now, next_);
      next_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
  }

 private:
  std::chrono::steady_clock::duration interval_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

std::string fetch_with_retries(LlmClient& client, const std::string& prompt, const GenerateOptions& o,
                               RateLimiter& limiter) {
  auto backoff = o.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    limiter.acquire();
    try {
      return client.complete(prompt);
    } catch (const TransportError& e) {
      if (attempt >= o.max_retries)
        throw Error("prompt " + prompt_id(prompt) + ": exhausted " + std::to_string(o.max_retries) +
                    " retries: " + e.what());
    }
    std::this_thread::sleep_for(backoff);
    backoff = std::min(backoff * 2, o.max_backoff);
  }
}

}  // namespace

std::vector<SyntheticExample> generate(LlmClient& client, std::span<const PromptJob> prompts,
                                       const Validator& validator, const GenerateOptions& options,
                                       SynthCache* cache) {
  if (options.budget == 0) throw ConfigError("synthetic budget must be positive");
  if (options.concurrency < 1) throw ConfigError("concurrency must be >= 1");
  RateLimiter limiter(options.requests_per_second);
  std::vector<SyntheticExample> out;
  std::set<std::tuple<std::string, std::string, std::string>> accepted_triples;
  std::size_t accepted = 0;
  const auto wave = static_cast<std::size_t>(options.concurrency);

  for (std::size_t begin = 0; begin < prompts.size() && accepted < options.budget; begin += wave) {
    const std::size_t end = std::min(prompts.size(), begin + wave);
    std::vector<std::optional<std::string>> responses(end - begin);
    std::vector<bool> fresh(end - begin, false);
    std::vector<std::exception_ptr> errors(end - begin);
    {
      std::vector<std::jthread> workers;
      for (std::size_t i = begin; i < end; ++i) {
        const std::string id = prompt_id(prompts[i].prompt);
        if (cache) responses[i - begin] = cache->response(id);
        if (responses[i - begin]) continue;
        fresh[i - begin] = true;
        workers.emplace_back([&, i] {
          try {
            responses[i - begin] = fetch_with_retries(client, prompts[i].prompt, options, limiter);
          } catch (...) {
            errors[i - begin] = std::current_exception();
          }
        });
      }
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);

    for (std::size_t i = begin; i < end; ++i) {
      const PromptJob& job = prompts[i];
      const std::string& raw = *responses[i - begin];
      const std::string id = prompt_id(job.prompt);
      std::vector<SyntheticExample> records;
      const auto triples = parse_response(raw);
      if (triples.empty()) {
        records.push_back({"", "", "", job.stem.stem, job.stem.meaning, Status::rejected, "unparseable", raw, id});
      }
      for (const auto& t : triples) {
        SyntheticExample r{t.surface, t.segmentation, t.gloss, job.stem.stem, job.stem.meaning,
                           Status::rejected, validator.check(t, job.stem), raw, id};
        const auto key = std::make_tuple(t.surface, t.segmentation, t.gloss);
        if (r.reason.empty() && accepted_triples.contains(key)) r.reason = "duplicate";
        if (r.reason.empty() && accepted >= options.budget) r.reason = "budget";
        if (r.reason.empty()) {
          r.status = Status::accepted;
          accepted_triples.insert(key);
          ++accepted;
        }
        records.push_back(std::move(r));
      }
      if (cache && fresh[i - begin]) cache->append(records);
      out.insert(out.end(), records.begin(), records.end());
    }
  }
  return out;
}

std::vector<igt::WordExample> accepted_examples(std::span<const SyntheticExample> records, const std::string& language,
                                                std::string_view delimiters) {
  std::vector<igt::WordExample> out;
  for (const auto& r : records) {
    if (r.status != Status::accepted) continue;
    auto ex = igt::make_example(r.surface, r.segmentation, r.gloss, language, delimiters);
    ex.synthetic = true;
    out.push_back(std::move(ex));
  }
  return out;
}

std::size_t mix_count(std::size_t train_size, double ratio) {
  if (!(ratio >= 0.0)) throw ConfigError("synthetic ratio must be non-negative");
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(train_size) + 1e-9));
}

std::vector<igt::WordExample> mix(std::span<const igt::WordExample> train, std::span<const igt::WordExample> synth,
                                  double ratio, std::uint64_t seed) {
  const std::size_t n = mix_count(train.size(), ratio);
  if (synth.size() < n)
    throw Error("synthetic pool has " + std::to_string(synth.size()) + " examples, " + std::to_string(n) +
                " needed for ratio " + std::to_string(ratio));
  std::vector<igt::WordExample> out(train.begin(), train.end());
  std::vector<std::size_t> order(synth.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  seeded_shuffle(order, rng);
  for (std::size_t i = 0; i < n; ++i) {
    igt::WordExample ex = synth[order[i]];
    ex.synthetic = true;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace mtseg::synth
