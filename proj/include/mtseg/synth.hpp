#pragma once

// LLM-backed synthetic training words: mine stems from words whose surface
// differs from their concatenated canonical morphemes, collect the
// grammatical morpheme inventory, prompt a chat model for new words,
// validate the returned triples and mix accepted ones into training data.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtseg/error.hpp"
#include "mtseg/igt.hpp"

namespace mtseg::synth {

// Words whose delimiter-free canonical segmentation differs from the surface.
std::vector<igt::WordExample> find_alternating_words(std::span<const igt::WordExample> train,
                                                     std::string_view delimiters = igt::kDefaultDelimiters);

struct StemRecord {
  std::string stem;
  std::string meaning;  // gloss label aligned with the stem
  std::vector<igt::WordExample> examples;
};

// One record per (stem, meaning) taken from alternating words: the stem is
// the first canonical morpheme whose aligned gloss is lexical. Examples list
// alternating words first, then other train words with the same stem, up to
// max_examples. Sorted by stem, then meaning.
std::vector<StemRecord> mine_stems(std::span<const igt::WordExample> train, std::size_t max_examples = 5,
                                   std::string_view delimiters = igt::kDefaultDelimiters);

struct MorphemeInventory {
  // grammatical label -> forms, most frequent first
  std::map<std::string, std::vector<std::string>> entries;

  bool empty() const { return entries.empty(); }
  bool contains(std::string_view label) const { return entries.find(std::string(label)) != entries.end(); }
};

MorphemeInventory extract_inventory(std::span<const igt::WordExample> train);

struct PromptOptions {
  std::string language_name;
  int n_words = 3;
  int min_morphemes = 2;
  int max_morphemes = 5;
};

// Full language name for a corpus code ("lez" -> "Lezgi"); the code itself
// when unknown.
std::string language_display_name(std::string_view code);

// Throws ConfigError on an empty inventory, a stem without examples or
// n_words < 1.
std::string build_prompt(const StemRecord& stem, const MorphemeInventory& inventory, const PromptOptions& options);

enum class Status { accepted, rejected };

struct SyntheticExample {
  std::string surface;
  std::string segmentation;
  std::string gloss;
  std::string stem;
  std::string meaning;
  Status status = Status::rejected;
  std::string reason;  // empty when accepted
  std::string raw_response;
  std::string prompt_id;
};

struct ParsedTriple {
  std::string surface;
  std::string segmentation;
  std::string gloss;
};

// Extracts every "word|surface form: X, canonical segmentation: Y, gloss: Z"
// occurrence, tolerating list markers, quotes and markdown emphasis.
std::vector<ParsedTriple> parse_response(std::string_view text);

// Rule checks shared by generation and tests. Reasons: "malformed",
// "alignment", "stem", "inventory", "duplicate".
class Validator {
 public:
  Validator(const MorphemeInventory& inventory, std::span<const igt::WordExample> gold_train,
            std::string delimiters = std::string(igt::kDefaultDelimiters));
  // Empty string when the triple passes every rule, else the first failing
  // rule's reason.
  std::string check(const ParsedTriple& triple, const StemRecord& stem) const;

 private:
  const MorphemeInventory& inventory_;
  std::vector<std::tuple<std::string, std::string, std::string>> gold_;
  std::string delimiters_;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  // Returns the model text. Throws TransportError for retryable failures.
  virtual std::string complete(const std::string& prompt) = 0;
};

// Stable identifier of a prompt: 16 hex digits of its 64-bit FNV-1a hash.
std::string prompt_id(std::string_view prompt);

// Serves `<dir>/<prompt_id>.txt`. A missing file yields an empty response,
// which validation records as unparseable.
class FixtureClient : public LlmClient {
 public:
  explicit FixtureClient(std::filesystem::path dir);
  std::string complete(const std::string& prompt) override;

 private:
  std::filesystem::path dir_;
};

struct HttpClientOptions {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o";
  double temperature = 0.7;
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::seconds timeout{60};
};

// Chat-completion client. Reads the API key from the environment at
// construction and throws ConfigError when it is unset.
class HttpChatClient : public LlmClient {
 public:
  explicit HttpChatClient(HttpClientOptions options);
  std::string complete(const std::string& prompt) override;

 private:
  HttpClientOptions options_;
  std::string api_key_;
  std::string scheme_host_;
  std::string path_;
};

struct PromptJob {
  std::string prompt;
  StemRecord stem;
};

struct GenerateOptions {
  std::size_t budget = 0;  // maximum accepted examples
  int concurrency = 4;
  double requests_per_second = 2.0;
  int max_retries = 4;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::milliseconds max_backoff{8000};
};

// JSON-lines cache, one record per parsed triple (or one rejected record for
// an unparseable response), keyed by prompt id.
class SynthCache {
 public:
  explicit SynthCache(std::filesystem::path path);
  std::optional<std::string> response(const std::string& id) const;
  void append(std::span<const SyntheticExample> records);
  std::vector<SyntheticExample> records() const;

 private:
  std::filesystem::path path_;
  std::map<std::string, std::string> responses_;
};

// Prompts are processed in waves of `concurrency`; results merge in prompt
// order and generation stops once `budget` examples are accepted. Cached
// responses are reused before any request is issued. Throws ConfigError for
// a zero budget and Error when a request exhausts its retries.
std::vector<SyntheticExample> generate(LlmClient& client, std::span<const PromptJob> prompts,
                                       const Validator& validator, const GenerateOptions& options,
                                       SynthCache* cache = nullptr);

std::vector<igt::WordExample> accepted_examples(std::span<const SyntheticExample> records,
                                                const std::string& language,
                                                std::string_view delimiters = igt::kDefaultDelimiters);

// floor(ratio * |train|) synthetic examples drawn with `seed` and appended
// after the untouched gold set. Throws Error when the pool is too small.
std::vector<igt::WordExample> mix(std::span<const igt::WordExample> train, std::span<const igt::WordExample> synth,
                                  double ratio, std::uint64_t seed);

std::size_t mix_count(std::size_t train_size, double ratio);

}  // namespace mtseg::synth
