#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hsd {

enum class Label : std::uint8_t { Hate = 0, NoHate = 1 };

inline constexpr std::array<Label, 2> kLabels = {Label::Hate, Label::NoHate};

inline constexpr std::size_t index_of(Label label) { return static_cast<std::size_t>(label); }

/// "hate" / "nohate"
std::string_view to_string(Label label);

/// Case-insensitive, surrounding whitespace ignored.
std::optional<Label> parse_label(std::string_view text);

struct LabeledExample {
  std::uint64_t id = 0;
  std::string text;
  Label label = Label::NoHate;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

/// Immutable, ordered collection of labeled examples with a per-class
/// position index. Construction validates unique ids and nonempty text.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<LabeledExample> examples);

  std::span<const LabeledExample> examples() const { return examples_; }
  const LabeledExample& operator[](std::size_t i) const { return examples_[i]; }
  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }

  /// Positions (into examples()) of the given class, ascending.
  std::span<const std::size_t> positions(Label label) const {
    return class_index_[index_of(label)];
  }
  std::size_t count(Label label) const { return positions(label).size(); }

  friend bool operator==(const Corpus& a, const Corpus& b) { return a.examples_ == b.examples_; }

 private:
  std::vector<LabeledExample> examples_;
  std::array<std::vector<std::size_t>, 2> class_index_;
};

enum class CorpusFormat { Csv, Jsonl };

/// Picks JSONL for .jsonl/.json/.ndjson extensions, CSV otherwise.
CorpusFormat format_for_path(const std::filesystem::path& path);

/// CSV: header row containing `text` and `label` columns (RFC 4180 quoting).
/// JSONL: one object per line with "text" and "label" string keys.
/// Ids are assigned 0..n-1 in file order. Line numbers in errors are
/// 1-based physical lines (the CSV header is line 1).
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format);
Corpus parse_corpus(std::string_view content, CorpusFormat format);

void save_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format);
std::string serialize_corpus(const Corpus& corpus, CorpusFormat format);

struct ClassStats {
  std::size_t sentence_count = 0;
  double mean_len = 0.0;
  double sd_len = 0.0;  // population standard deviation
  std::size_t word_count = 0;
  std::size_t vocab_size = 0;  // distinct case-folded tokens

  friend bool operator==(const ClassStats&, const ClassStats&) = default;
};

struct CorpusStats {
  std::array<ClassStats, 2> per_class;

  const ClassStats& operator[](Label label) const { return per_class[index_of(label)]; }
};

/// Statistics over the built-in tokenizer's output, without truncation.
CorpusStats compute_stats(const Corpus& corpus);

/// {"hate": {"sentences", "mean_len", "sd_len", "word_count", "vocab"}, "nohate": {...}}
std::string stats_to_json(const CorpusStats& stats);

struct BalanceConfig {
  /// Examples per class after balancing; nullopt resolves to the rounded
  /// midpoint of the two class counts.
  std::optional<std::size_t> target_per_class;
  std::uint64_t seed = 0;
};

std::size_t resolve_target(const Corpus& corpus, const BalanceConfig& config);

/// Classes above the target are undersampled without replacement; classes
/// below it keep every original and gain seeded duplicates. Retained
/// examples keep their id and relative order; duplicates follow them with
/// fresh ids starting above the largest input id.
Corpus balance(const Corpus& corpus, const BalanceConfig& config);

/// Stratified seeded split. Each class contributes round(count * fraction)
/// examples to the eval side. Both outputs keep input order.
std::pair<Corpus, Corpus> split(const Corpus& corpus, double eval_fraction, std::uint64_t seed);

}  // namespace hsd
