#include "hsd/features.hpp"

#include <algorithm>
#include <cmath>

#include "hsd/error.hpp"

namespace hsd {

namespace utf8 {

char32_t decode(std::string_view s, std::size_t& pos) noexcept {
  constexpr char32_t kReplacement = 0xFFFD;
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) {
    ++pos;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++pos;
    return kReplacement;
  }
  if (pos + len > s.size()) {
    ++pos;
    return kReplacement;
  }
  for (int i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) {
      ++pos;
      return kReplacement;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  pos += len;
  return cp;
}

void append(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// White_Space property.
bool is_space(char32_t cp) noexcept {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

// ASCII punctuation plus the common Latin-1, general and CJK punctuation
// blocks. Symbols outside these ranges (emoji etc.) are kept as token text.
bool is_punct(char32_t cp) noexcept {
  if (cp < 0x80) {
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
           (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
  }
  switch (cp) {
    case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
      return true;
    default:
      break;
  }
  return (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E) ||
         (cp >= 0x3001 && cp <= 0x3003) || (cp >= 0x3008 && cp <= 0x3011) ||
         (cp >= 0xFF01 && cp <= 0xFF0F);
}

// Simple one-to-one lowercase mapping for Latin, Greek and Cyrillic.
char32_t fold_case(char32_t cp) noexcept {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp < 0xC0) return cp;
  if ((cp >= 0xC0 && cp <= 0xDE) && cp != 0xD7) return cp + 32;
  if (cp >= 0x100 && cp <= 0x17F) {
    // Latin Extended-A alternates upper/lower, with a shifted run
    // between U+0139 and U+0148 and again from U+0179.
    if (cp == 0x130) return 'i';
    if ((cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E)) {
      return (cp % 2 == 1) ? cp + 1 : cp;
    }
    if (cp == 0x178) return 0xFF;
    if (cp >= 0x138 && cp <= 0x149) return cp;
    return (cp % 2 == 0) ? cp + 1 : cp;
  }
  if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) return cp + 32;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
  return cp;
}

std::string_view trim(std::string_view s) noexcept {
  std::size_t begin = 0;
  while (begin < s.size()) {
    std::size_t next = begin;
    if (!is_space(decode(s, next))) break;
    begin = next;
  }
  std::size_t end = begin;
  std::size_t pos = begin;
  while (pos < s.size()) {
    const char32_t cp = decode(s, pos);
    if (!is_space(cp)) end = pos;
  }
  return s.substr(begin, end - begin);
}

std::string to_lower(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t pos = 0;
  while (pos < s.size()) append(out, fold_case(decode(s, pos)));
  return out;
}

}  // namespace utf8

void FeatureConfig::validate() const {
  if (max_tokens < 1) throw Error(ErrorCode::InvalidConfig, "max_tokens must be >= 1");
  if (dimension < 2 || (dimension & (dimension - 1)) != 0) {
    throw Error(ErrorCode::InvalidConfig,
                "dimension must be a power of two >= 2, got " + std::to_string(dimension));
  }
  if (dimension > (std::size_t{1} << 31)) {
    throw Error(ErrorCode::InvalidConfig, "dimension must be <= 2^31");
  }
  if (ngram_orders.empty()) throw Error(ErrorCode::InvalidConfig, "ngram_orders is empty");
  for (std::size_t i = 0; i < ngram_orders.size(); ++i) {
    if (ngram_orders[i] < 1) throw Error(ErrorCode::InvalidConfig, "ngram orders must be >= 1");
    for (std::size_t j = 0; j < i; ++j) {
      if (ngram_orders[j] == ngram_orders[i]) {
        throw Error(ErrorCode::InvalidConfig, "duplicate ngram order");
      }
    }
  }
}

double FeatureVector::norm() const {
  double sum = 0.0;
  for (const auto& [index, weight] : entries) sum += weight * weight;
  return std::sqrt(sum);
}

Tokens tokenize(std::string_view text, std::size_t max_tokens) {
  Tokens tokens;
  std::vector<char32_t> word;
  auto flush = [&] {
    std::size_t lo = 0;
    std::size_t hi = word.size();
    while (lo < hi && utf8::is_punct(word[lo])) ++lo;
    while (hi > lo && utf8::is_punct(word[hi - 1])) --hi;
    if (lo < hi) {
      std::string token;
      for (std::size_t i = lo; i < hi; ++i) utf8::append(token, utf8::fold_case(word[i]));
      tokens.push_back(std::move(token));
    }
    word.clear();
  };

  std::size_t pos = 0;
  while (pos < text.size() && tokens.size() < max_tokens) {
    const char32_t cp = utf8::decode(text, pos);
    if (utf8::is_space(cp)) {
      flush();
    } else {
      word.push_back(cp);
    }
  }
  if (tokens.size() < max_tokens) flush();
  return tokens;
}

std::uint64_t stable_hash(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

FeatureVector featurize(const Tokens& tokens, const FeatureConfig& config) {
  FeatureVector fv;
  if (tokens.empty()) return fv;

  const std::uint64_t mask = config.dimension - 1;
  std::vector<std::uint32_t> hits;
  std::string gram;
  for (int order : config.ngram_orders) {
    const auto n = static_cast<std::size_t>(order);
    if (n > tokens.size()) continue;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      gram.clear();
      for (std::size_t j = 0; j < n; ++j) {
        if (j > 0) gram.push_back(' ');
        gram += tokens[i + j];
      }
      hits.push_back(static_cast<std::uint32_t>(stable_hash(gram) & mask));
    }
  }
  if (hits.empty()) return fv;

  std::sort(hits.begin(), hits.end());
  for (std::uint32_t index : hits) {
    if (!fv.entries.empty() && fv.entries.back().first == index) {
      fv.entries.back().second += 1.0;
    } else {
      fv.entries.emplace_back(index, 1.0);
    }
  }
  if (config.normalize) {
    const double n = fv.norm();
    for (auto& entry : fv.entries) entry.second /= n;
  }
  return fv;
}

HashedNgramExtractor::HashedNgramExtractor(FeatureConfig config) : config_(std::move(config)) {
  config_.validate();
}

FeatureVector HashedNgramExtractor::extract(std::string_view text) const {
  return featurize(tokenize(text, config_), config_);
}

}  // namespace hsd
