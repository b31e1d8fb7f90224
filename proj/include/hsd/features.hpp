#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hsd {

/// Tokenization and hashing parameters. Stored inside the model file so a
/// saved model reproduces its own feature space.
struct FeatureConfig {
  std::size_t max_tokens = 128;
  std::vector<int> ngram_orders = {1, 2};
  std::size_t dimension = std::size_t{1} << 18;
  bool normalize = true;

  /// Throws Error(InvalidConfig) unless max_tokens >= 1, dimension is a
  /// power of two >= 2, and every n-gram order is >= 1.
  void validate() const;

  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

/// Sparse vector: (index, weight) pairs with strictly increasing indices.
struct FeatureVector {
  std::vector<std::pair<std::uint32_t, double>> entries;

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }
  double norm() const;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

using Tokens = std::vector<std::string>;

/// Case-folds, splits on Unicode whitespace, strips leading and trailing
/// punctuation from each token, drops empties and keeps at most
/// `max_tokens` tokens.
Tokens tokenize(std::string_view text,
                std::size_t max_tokens = std::numeric_limits<std::size_t>::max());

inline Tokens tokenize(std::string_view text, const FeatureConfig& config) {
  return tokenize(text, config.max_tokens);
}

/// 64-bit FNV-1a over the UTF-8 bytes.
std::uint64_t stable_hash(std::string_view bytes) noexcept;

/// Hashed n-gram counts. N-grams are the tokens joined by a single space;
/// each one adds +1 at stable_hash(ngram) mod dimension.
FeatureVector featurize(const Tokens& tokens, const FeatureConfig& config);

/// Interface the classifier consumes, so an embedding-based extractor can
/// replace the hashed one without touching the head.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::size_t dimension() const = 0;
  virtual FeatureVector extract(std::string_view text) const = 0;
};

class HashedNgramExtractor final : public FeatureExtractor {
 public:
  explicit HashedNgramExtractor(FeatureConfig config);

  std::size_t dimension() const override { return config_.dimension; }
  FeatureVector extract(std::string_view text) const override;
  const FeatureConfig& config() const { return config_; }

 private:
  FeatureConfig config_;
};

namespace utf8 {

/// Decodes one code point starting at `pos`, advancing `pos`. Invalid
/// sequences decode as U+FFFD and consume one byte.
char32_t decode(std::string_view s, std::size_t& pos) noexcept;
void append(std::string& out, char32_t cp);

bool is_space(char32_t cp) noexcept;
bool is_punct(char32_t cp) noexcept;
char32_t fold_case(char32_t cp) noexcept;

/// Trims Unicode whitespace from both ends.
std::string_view trim(std::string_view s) noexcept;
std::string to_lower(std::string_view s);

}  // namespace utf8

}  // namespace hsd
