#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hsd/rng.hpp"

namespace hsd {

/// Prompt layout: instruction, then each example block, then the input
/// block, joined by `separator`. Placeholders: {biased} and {unbiased} in
/// example_format, {input} in input_format, each exactly once.
struct PromptTemplate {
  std::string instruction;
  std::string example_format;
  std::string input_format;
  std::string separator;

  /// Throws InvalidTemplate on a missing or repeated placeholder.
  void validate() const;

  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

/// Template file: sections [instruction], [example_format], [input_format]
/// and [separator]. A section body is the lines up to the next header,
/// joined with "\n" with blank edge lines dropped; the escapes \n, \t and
/// \\ are expanded afterwards.
PromptTemplate parse_template(std::string_view content);
PromptTemplate load_template(const std::filesystem::path& path);

struct FewShotExample {
  std::string biased;
  std::string unbiased;
  std::optional<std::string> category;

  friend bool operator==(const FewShotExample&, const FewShotExample&) = default;
};

class ExampleBank {
 public:
  ExampleBank() = default;
  explicit ExampleBank(std::vector<FewShotExample> examples);

  std::span<const FewShotExample> examples() const { return examples_; }
  std::size_t size() const { return examples_.size(); }

  /// Category names in first-appearance order ("" for untagged examples).
  const std::vector<std::string>& categories() const { return categories_; }

  /// Deterministic k-shot selection: category order is shuffled with
  /// `seed`, then categories are visited round-robin, each yielding its
  /// examples in bank order. The result for k is a prefix of the result
  /// for k + 1. Throws NotEnoughExamples when k > size().
  std::vector<std::size_t> select(std::size_t k, std::uint64_t seed) const;

 private:
  std::vector<FewShotExample> examples_;
  std::vector<std::string> categories_;
  std::vector<std::vector<std::size_t>> by_category_;
};

/// JSONL with "biased", "unbiased" and optional "category" keys.
ExampleBank parse_bank(std::string_view content);
ExampleBank load_bank(const std::filesystem::path& path);

/// Renders the k-shot prompt. Throws NotEnoughExamples (before anything
/// else is done) or EmptyInput.
std::string build_prompt(const PromptTemplate& tmpl, const ExampleBank& bank, std::size_t k,
                         std::string_view input, std::uint64_t seed);

/// Draws an index with probability softmax(logits / temperature).
/// Non-finite logits (e.g. -inf) get probability zero. Throws
/// DegenerateDistribution when no logit is finite or temperature <= 0.
std::size_t temperature_sample(std::span<const double> logits, double temperature, Rng& rng);

/// Weights are converted to logits with log(); zero weights are never drawn.
std::size_t temperature_sample_weights(std::span<const double> weights, double temperature, Rng& rng);

struct GenerationConfig {
  double temperature = 0.7;
  std::uint32_t max_new_tokens = 64;
  std::uint64_t seed = 0;
  std::uint32_t timeout_ms = 10000;
  std::uint32_t max_retries = 2;
  std::uint32_t backoff_base_ms = 250;
  /// Permits temperatures outside [0.1, 1.0] (still > 0).
  bool allow_out_of_range_temperature = false;

  void validate() const;
};

/// A text generator. Implementations enforce `timeout_ms` per call and
/// report failures by throwing Error(Timeout), BackendError or
/// Error(EmptyGeneration). Must be safe for concurrent calls.
class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual std::string id() const = 0;
  virtual std::string complete(const std::string& prompt, const GenerationConfig& config) = 0;
};

struct Generation {
  std::string text;
  std::uint32_t attempts = 0;
};

/// Calls the backend with retry: timeouts, transport failures, 429 and 5xx
/// are retried up to max_retries times with exponential backoff (base
/// backoff_base_ms, doubling) and full jitter seeded from config.seed.
/// An empty completion fails immediately with EmptyGeneration.
Generation generate(GenerationBackend& backend, const std::string& prompt,
                    const GenerationConfig& config);

/// Hermetic backend: pulls the input text back out of the prompt's input
/// block and replaces every lexicon token (case-insensitive, matched after
/// punctuation stripping) with "[redacted]". Ignores temperature.
class MockRewriter final : public GenerationBackend {
 public:
  MockRewriter(std::vector<std::string> lexicon, PromptTemplate tmpl);

  std::string id() const override { return "mock"; }
  std::string complete(const std::string& prompt, const GenerationConfig& config) override;

  std::string redact(std::string_view text) const;
  std::uint64_t call_count() const { return calls_.load(); }

 private:
  std::set<std::string> lexicon_;
  std::string input_prefix_;
  std::string input_suffix_;
  std::atomic<std::uint64_t> calls_{0};
};

/// Small built-in lexicon for the mock backend.
std::vector<std::string> default_mock_lexicon();

struct DebiasResult {
  std::string original;
  std::string rewritten;
  std::string prompt_rendered;
  std::string backend_id;
  std::size_t k_used = 0;
  std::uint32_t attempts = 0;
};

/// Everything the rewrite stage needs apart from the text itself.
struct DebiasContext {
  PromptTemplate tmpl;
  ExampleBank bank;
  std::shared_ptr<GenerationBackend> backend;
  std::string stop_sequence = "\n";
};

/// build_prompt, then generate. The completion is cut at the first stop
/// sequence (after leading whitespace) and trimmed.
DebiasResult debias(std::string_view text, const PromptTemplate& tmpl, const ExampleBank& bank,
                    std::size_t k, const GenerationConfig& config, GenerationBackend& backend,
                    std::string_view stop_sequence = "\n");

inline DebiasResult debias(std::string_view text, const DebiasContext& ctx, std::size_t k,
                           const GenerationConfig& config) {
  return debias(text, ctx.tmpl, ctx.bank, k, config, *ctx.backend, ctx.stop_sequence);
}

}  // namespace hsd
