#include "hsd/debiaser.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "hsd/error.hpp"
#include "hsd/features.hpp"

namespace hsd {

namespace {

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t count = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

void require_once(std::string_view format, std::string_view placeholder, std::string_view field) {
  const std::size_t n = count_occurrences(format, placeholder);
  if (n != 1) {
    throw Error(ErrorCode::InvalidTemplate,
                std::string(field) + " must contain " + std::string(placeholder) +
                    " exactly once (found " + std::to_string(n) + ")");
  }
}

// Single-pass substitution so placeholder-like text inside values is left alone.
std::string substitute(std::string_view format,
                       std::initializer_list<std::pair<std::string_view, std::string_view>> values) {
  std::string out;
  std::size_t pos = 0;
  while (pos < format.size()) {
    bool matched = false;
    for (const auto& [key, value] : values) {
      if (format.substr(pos, key.size()) == key) {
        out += value;
        pos += key.size();
        matched = true;
        break;
      }
    }
    if (!matched) out.push_back(format[pos++]);
  }
  return out;
}

std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      const char next = s[i + 1];
      if (next == 'n') { out.push_back('\n'); ++i; continue; }
      if (next == 't') { out.push_back('\t'); ++i; continue; }
      if (next == '\\') { out.push_back('\\'); ++i; continue; }
    }
    out.push_back(s[i]);
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

bool is_retryable(const Error& e) {
  if (e.code() == ErrorCode::Timeout) return true;
  if (const auto* be = dynamic_cast<const BackendError*>(&e)) {
    return be->status() == 0 || be->status() == 429 || be->status() >= 500;
  }
  return false;
}

}  // namespace

void PromptTemplate::validate() const {
  require_once(example_format, "{biased}", "example_format");
  require_once(example_format, "{unbiased}", "example_format");
  require_once(input_format, "{input}", "input_format");
}

PromptTemplate parse_template(std::string_view content) {
  std::map<std::string, std::vector<std::string>> sections;
  std::string current;
  std::vector<std::string>* body = nullptr;

  std::istringstream in{std::string(content)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string_view trimmed = utf8::trim(line);
    if (trimmed.size() >= 2 && trimmed.front() == '[' && trimmed.back() == ']') {
      current = std::string(trimmed.substr(1, trimmed.size() - 2));
      if (current != "instruction" && current != "example_format" &&
          current != "input_format" && current != "separator") {
        throw Error(ErrorCode::InvalidTemplate, "unknown template section [" + current + "]");
      }
      if (sections.contains(current)) {
        throw Error(ErrorCode::InvalidTemplate, "duplicate template section [" + current + "]");
      }
      body = &sections[current];
      continue;
    }
    if (body == nullptr) {
      if (trimmed.empty()) continue;
      throw Error(ErrorCode::InvalidTemplate, "text before the first template section");
    }
    body->push_back(line);
  }

  auto section = [&](const char* name) {
    const auto it = sections.find(name);
    if (it == sections.end()) {
      throw Error(ErrorCode::InvalidTemplate, std::string("missing template section [") + name + "]");
    }
    auto lines = it->second;
    while (!lines.empty() && utf8::trim(lines.back()).empty()) lines.pop_back();
    auto first = std::find_if(lines.begin(), lines.end(),
                              [](const std::string& l) { return !utf8::trim(l).empty(); });
    std::string joined;
    for (auto l = first; l != lines.end(); ++l) {
      if (l != first) joined.push_back('\n');
      joined += *l;
    }
    return unescape(joined);
  };

  PromptTemplate tmpl{section("instruction"), section("example_format"), section("input_format"),
                      section("separator")};
  tmpl.validate();
  return tmpl;
}

PromptTemplate load_template(const std::filesystem::path& path) {
  return parse_template(read_file(path));
}

ExampleBank::ExampleBank(std::vector<FewShotExample> examples) : examples_(std::move(examples)) {
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    const auto& ex = examples_[i];
    if (utf8::trim(ex.biased).empty() || utf8::trim(ex.unbiased).empty()) {
      throw Error(ErrorCode::EmptyText, "few-shot example " + std::to_string(i) + " has empty text");
    }
    const std::string cat = ex.category.value_or("");
    auto it = std::find(categories_.begin(), categories_.end(), cat);
    if (it == categories_.end()) {
      categories_.push_back(cat);
      by_category_.emplace_back();
      it = categories_.end() - 1;
    }
    by_category_[static_cast<std::size_t>(it - categories_.begin())].push_back(i);
  }
}

std::vector<std::size_t> ExampleBank::select(std::size_t k, std::uint64_t seed) const {
  if (k > examples_.size()) {
    throw Error(ErrorCode::NotEnoughExamples,
                "requested " + std::to_string(k) + " examples, bank has " +
                    std::to_string(examples_.size()));
  }
  std::vector<std::size_t> order(categories_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<std::size_t> picked;
  picked.reserve(k);
  for (std::size_t round = 0; picked.size() < k; ++round) {
    for (std::size_t c : order) {
      if (picked.size() == k) break;
      if (round < by_category_[c].size()) picked.push_back(by_category_[c][round]);
    }
  }
  return picked;
}

ExampleBank parse_bank(std::string_view content) {
  std::vector<FewShotExample> examples;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (utf8::trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::MalformedRecord, "invalid JSON in example bank at line " +
                                                  std::to_string(line_no));
    }
    if (!obj.is_object() || !obj.contains("biased") || !obj.contains("unbiased") ||
        !obj["biased"].is_string() || !obj["unbiased"].is_string()) {
      throw Error(ErrorCode::MalformedRecord,
                  "example bank line " + std::to_string(line_no) +
                      " needs string keys \"biased\" and \"unbiased\"");
    }
    FewShotExample ex{obj["biased"].get<std::string>(), obj["unbiased"].get<std::string>(), {}};
    if (obj.contains("category") && !obj["category"].is_null()) {
      if (!obj["category"].is_string()) {
        throw Error(ErrorCode::MalformedRecord,
                    "category must be a string at line " + std::to_string(line_no));
      }
      ex.category = obj["category"].get<std::string>();
    }
    examples.push_back(std::move(ex));
  }
  return ExampleBank(std::move(examples));
}

ExampleBank load_bank(const std::filesystem::path& path) { return parse_bank(read_file(path)); }

std::string build_prompt(const PromptTemplate& tmpl, const ExampleBank& bank, std::size_t k,
                         std::string_view input, std::uint64_t seed) {
  const auto picked = bank.select(k, seed);
  if (utf8::trim(input).empty()) throw Error(ErrorCode::EmptyInput, "input text is empty");

  std::string prompt = tmpl.instruction;
  for (std::size_t index : picked) {
    const auto& ex = bank.examples()[index];
    prompt += tmpl.separator;
    prompt += substitute(tmpl.example_format, {{"{biased}", ex.biased}, {"{unbiased}", ex.unbiased}});
  }
  prompt += tmpl.separator;
  prompt += substitute(tmpl.input_format, {{"{input}", input}});
  return prompt;
}

std::size_t temperature_sample(std::span<const double> logits, double temperature, Rng& rng) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::DegenerateDistribution, "temperature must be a finite value > 0");
  }
  double top = -std::numeric_limits<double>::infinity();
  for (double z : logits) {
    if (std::isfinite(z)) top = std::max(top, z);
  }
  if (!std::isfinite(top)) {
    throw Error(ErrorCode::DegenerateDistribution, "no finite logit to sample from");
  }
  std::vector<double> cumulative(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (std::isfinite(logits[i])) total += std::exp((logits[i] - top) / temperature);
    cumulative[i] = total;
  }
  const double u = rng.uniform() * total;
  for (std::size_t i = 0; i < cumulative.size(); ++i) {
    if (u < cumulative[i]) return i;
  }
  // u == total can only arise from rounding; return the last drawable index.
  for (std::size_t i = logits.size(); i-- > 0;) {
    if (std::isfinite(logits[i])) return i;
  }
  return 0;
}

std::size_t temperature_sample_weights(std::span<const double> weights, double temperature, Rng& rng) {
  std::vector<double> logits(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0 || std::isnan(weights[i])) {
      throw Error(ErrorCode::DegenerateDistribution, "weights must be nonnegative");
    }
    logits[i] = weights[i] > 0.0 ? std::log(weights[i]) : -std::numeric_limits<double>::infinity();
  }
  return temperature_sample(logits, temperature, rng);
}

void GenerationConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::InvalidConfig, "temperature must be > 0");
  }
  if (!allow_out_of_range_temperature && (temperature < 0.1 || temperature > 1.0)) {
    throw Error(ErrorCode::InvalidConfig,
                "temperature " + std::to_string(temperature) +
                    " outside [0.1, 1.0]; set the out-of-range override to allow it");
  }
  if (max_new_tokens < 1) throw Error(ErrorCode::InvalidConfig, "max_new_tokens must be >= 1");
  if (timeout_ms < 1) throw Error(ErrorCode::InvalidConfig, "timeout_ms must be >= 1");
}

Generation generate(GenerationBackend& backend, const std::string& prompt,
                    const GenerationConfig& config) {
  if (prompt.empty()) throw Error(ErrorCode::EmptyInput, "prompt is empty");
  config.validate();
  Rng jitter(Rng::derive(config.seed, 0x6a6974746572ULL));
  for (std::uint32_t attempt = 1;; ++attempt) {
    try {
      std::string text = backend.complete(prompt, config);
      if (text.empty()) throw Error(ErrorCode::EmptyGeneration, "backend returned an empty completion");
      return {std::move(text), attempt};
    } catch (const Error& e) {
      if (!is_retryable(e) || attempt > config.max_retries) throw;
      const std::uint64_t cap = std::uint64_t{config.backoff_base_ms} << (attempt - 1);
      const auto delay = cap == 0 ? 0 : jitter.below(cap + 1);
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }
  }
}

MockRewriter::MockRewriter(std::vector<std::string> lexicon, PromptTemplate tmpl) {
  for (const auto& term : lexicon) {
    const std::string folded = utf8::to_lower(utf8::trim(term));
    if (!folded.empty()) lexicon_.insert(folded);
  }
  tmpl.validate();
  const auto at = tmpl.input_format.find("{input}");
  input_prefix_ = tmpl.input_format.substr(0, at);
  input_suffix_ = tmpl.input_format.substr(at + 7);
}

std::string MockRewriter::redact(std::string_view text) const {
  std::string out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    // Copy whitespace runs verbatim, redact the core of each word.
    std::size_t next = pos;
    const char32_t cp = utf8::decode(text, next);
    if (utf8::is_space(cp)) {
      out.append(text.substr(pos, next - pos));
      pos = next;
      continue;
    }
    std::size_t end = pos;
    std::vector<std::pair<std::size_t, char32_t>> chars;  // byte offset, code point
    while (end < text.size()) {
      std::size_t probe = end;
      const char32_t c = utf8::decode(text, probe);
      if (utf8::is_space(c)) break;
      chars.emplace_back(end, c);
      end = probe;
    }
    std::size_t lo = 0;
    std::size_t hi = chars.size();
    while (lo < hi && utf8::is_punct(chars[lo].second)) ++lo;
    while (hi > lo && utf8::is_punct(chars[hi - 1].second)) --hi;
    const std::size_t core_begin = lo < chars.size() ? chars[lo].first : end;
    const std::size_t core_end = hi < chars.size() ? chars[hi].first : end;
    const std::string_view core = text.substr(core_begin, core_end - core_begin);
    if (!core.empty() && lexicon_.contains(utf8::to_lower(core))) {
      out.append(text.substr(pos, core_begin - pos));
      out += "[redacted]";
      out.append(text.substr(core_end, end - core_end));
    } else {
      out.append(text.substr(pos, end - pos));
    }
    pos = end;
  }
  return out;
}

std::string MockRewriter::complete(const std::string& prompt, const GenerationConfig&) {
  calls_.fetch_add(1);
  std::string_view input = prompt;
  const auto at = prompt.rfind(input_prefix_);
  if (at != std::string::npos) {
    input = std::string_view(prompt).substr(at + input_prefix_.size());
    if (input.ends_with(input_suffix_)) input.remove_suffix(input_suffix_.size());
  }
  return redact(utf8::trim(input));
}

std::vector<std::string> default_mock_lexicon() {
  return {"idiot", "idiots", "moron", "morons", "scum", "vermin",
          "trash", "filth", "parasite", "parasites", "savages", "subhuman"};
}

DebiasResult debias(std::string_view text, const PromptTemplate& tmpl, const ExampleBank& bank,
                    std::size_t k, const GenerationConfig& config, GenerationBackend& backend,
                    std::string_view stop_sequence) {
  if (utf8::trim(text).empty()) throw Error(ErrorCode::EmptyInput, "input text is empty");
  DebiasResult result;
  result.original = std::string(text);
  result.prompt_rendered = build_prompt(tmpl, bank, k, text, config.seed);
  result.k_used = k;
  result.backend_id = backend.id();

  const Generation gen = generate(backend, result.prompt_rendered, config);
  std::string_view completion = gen.text;
  while (!completion.empty() && (completion.front() == ' ' || completion.front() == '\t' ||
                                 completion.front() == '\n' || completion.front() == '\r')) {
    completion.remove_prefix(1);
  }
  if (!stop_sequence.empty()) {
    const auto stop = completion.find(stop_sequence);
    if (stop != std::string_view::npos) completion = completion.substr(0, stop);
  }
  result.rewritten = std::string(utf8::trim(completion));
  if (result.rewritten.empty()) {
    throw Error(ErrorCode::EmptyGeneration, "completion is empty after stop-sequence trimming");
  }
  result.attempts = gen.attempts;
  return result;
}

}  // namespace hsd
