#include "hsd/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "hsd/error.hpp"
#include "hsd/features.hpp"
#include "hsd/rng.hpp"

namespace hsd {

namespace {

std::string line_ref(std::size_t line) { return "line " + std::to_string(line); }

LabeledExample make_example(std::uint64_t id, std::string text, std::string_view label_text,
                            std::size_t line) {
  if (utf8::trim(text).empty()) {
    throw Error(ErrorCode::EmptyText, "empty text at " + line_ref(line));
  }
  const auto label = parse_label(label_text);
  if (!label) {
    throw Error(ErrorCode::UnknownLabel,
                "unknown label '" + std::string(label_text) + "' at " + line_ref(line));
  }
  return {id, std::move(text), *label};
}

// RFC 4180 record reader. Tracks the physical line on which each record
// starts; quoted fields may span lines.
class CsvReader {
 public:
  explicit CsvReader(std::string_view input) : in_(input) {
    if (in_.starts_with("\xEF\xBB\xBF")) in_.remove_prefix(3);
  }

  /// Returns false at end of input. Blank lines are skipped.
  bool next(std::vector<std::string>& fields, std::size_t& start_line) {
    fields.clear();
    while (pos_ < in_.size() && (in_[pos_] == '\n' || in_[pos_] == '\r')) {
      if (in_[pos_] == '\n') ++line_;
      ++pos_;
    }
    if (pos_ >= in_.size()) return false;
    start_line = line_;

    std::string field;
    bool quoted = false;
    bool field_was_quoted = false;
    while (pos_ < in_.size()) {
      const char c = in_[pos_];
      if (quoted) {
        if (c == '"') {
          if (pos_ + 1 < in_.size() && in_[pos_ + 1] == '"') {
            field.push_back('"');
            pos_ += 2;
            continue;
          }
          quoted = false;
          ++pos_;
          continue;
        }
        if (c == '\n') ++line_;
        field.push_back(c);
        ++pos_;
        continue;
      }
      if (c == '"') {
        if (!field.empty() || field_was_quoted) {
          throw Error(ErrorCode::MalformedRecord,
                      "stray quote in field at " + line_ref(line_));
        }
        quoted = true;
        field_was_quoted = true;
        ++pos_;
      } else if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
        ++pos_;
      } else if (c == '\r' || c == '\n') {
        if (c == '\r' && pos_ + 1 < in_.size() && in_[pos_ + 1] == '\n') ++pos_;
        ++pos_;
        ++line_;
        break;
      } else {
        if (field_was_quoted) {
          throw Error(ErrorCode::MalformedRecord,
                      "text after closing quote at " + line_ref(line_));
        }
        field.push_back(c);
        ++pos_;
      }
    }
    if (quoted) {
      throw Error(ErrorCode::MalformedRecord, "unterminated quote starting at " + line_ref(start_line));
    }
    fields.push_back(std::move(field));
    return true;
  }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

Corpus parse_csv(std::string_view content) {
  CsvReader reader(content);
  std::vector<std::string> fields;
  std::size_t line = 0;
  if (!reader.next(fields, line)) {
    throw Error(ErrorCode::MissingColumn, "missing header row with columns text,label");
  }
  std::optional<std::size_t> text_col;
  std::optional<std::size_t> label_col;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const std::string name = utf8::to_lower(utf8::trim(fields[i]));
    if (name == "text" && !text_col) text_col = i;
    if (name == "label" && !label_col) label_col = i;
  }
  if (!text_col) throw Error(ErrorCode::MissingColumn, "missing column: text");
  if (!label_col) throw Error(ErrorCode::MissingColumn, "missing column: label");
  const std::size_t width = fields.size();

  std::vector<LabeledExample> examples;
  while (reader.next(fields, line)) {
    if (fields.size() != width) {
      throw Error(ErrorCode::MalformedRecord,
                  "expected " + std::to_string(width) + " fields, found " +
                      std::to_string(fields.size()) + " at " + line_ref(line));
    }
    examples.push_back(make_example(examples.size(), std::move(fields[*text_col]),
                                    fields[*label_col], line));
  }
  return Corpus(std::move(examples));
}

Corpus parse_jsonl(std::string_view content) {
  std::vector<LabeledExample> examples;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
    if (utf8::trim(line).empty()) {
      if (end == content.size()) break;
      continue;
    }

    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::MalformedRecord, "invalid JSON at " + line_ref(line_no));
    }
    if (!obj.is_object()) {
      throw Error(ErrorCode::MalformedRecord, "expected a JSON object at " + line_ref(line_no));
    }
    for (const char* key : {"text", "label"}) {
      if (!obj.contains(key)) {
        throw Error(ErrorCode::MissingColumn,
                    std::string("missing key \"") + key + "\" at " + line_ref(line_no));
      }
      if (!obj[key].is_string()) {
        throw Error(ErrorCode::MalformedRecord,
                    std::string("key \"") + key + "\" is not a string at " + line_ref(line_no));
      }
    }
    examples.push_back(make_example(examples.size(), obj["text"].get<std::string>(),
                                    obj["label"].get<std::string>(), line_no));
    if (end == content.size()) break;
  }
  return Corpus(std::move(examples));
}

std::string csv_field(std::string_view s) {
  const bool needs_quotes = s.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs_quotes) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::string_view to_string(Label label) { return label == Label::Hate ? "hate" : "nohate"; }

std::optional<Label> parse_label(std::string_view text) {
  const std::string lowered = utf8::to_lower(utf8::trim(text));
  if (lowered == "hate") return Label::Hate;
  if (lowered == "nohate") return Label::NoHate;
  return std::nullopt;
}

Corpus::Corpus(std::vector<LabeledExample> examples) : examples_(std::move(examples)) {
  std::unordered_set<std::uint64_t> ids;
  ids.reserve(examples_.size());
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    const auto& ex = examples_[i];
    if (!ids.insert(ex.id).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate example id " + std::to_string(ex.id));
    }
    if (utf8::trim(ex.text).empty()) {
      throw Error(ErrorCode::EmptyText, "empty text for example id " + std::to_string(ex.id));
    }
    class_index_[index_of(ex.label)].push_back(i);
  }
}

CorpusFormat format_for_path(const std::filesystem::path& path) {
  const std::string ext = utf8::to_lower(path.extension().string());
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return CorpusFormat::Jsonl;
  return CorpusFormat::Csv;
}

Corpus parse_corpus(std::string_view content, CorpusFormat format) {
  return format == CorpusFormat::Csv ? parse_csv(content) : parse_jsonl(content);
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_corpus(buffer.str(), format);
}

std::string serialize_corpus(const Corpus& corpus, CorpusFormat format) {
  std::string out;
  if (format == CorpusFormat::Csv) {
    out = "text,label\n";
    for (const auto& ex : corpus.examples()) {
      out += csv_field(ex.text);
      out += ',';
      out += to_string(ex.label);
      out += '\n';
    }
  } else {
    for (const auto& ex : corpus.examples()) {
      nlohmann::ordered_json obj;
      obj["text"] = ex.text;
      obj["label"] = to_string(ex.label);
      out += obj.dump();
      out += '\n';
    }
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << serialize_corpus(corpus, format);
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

CorpusStats compute_stats(const Corpus& corpus) {
  CorpusStats stats;
  for (Label label : kLabels) {
    ClassStats& cs = stats.per_class[index_of(label)];
    const auto positions = corpus.positions(label);
    if (positions.empty()) continue;

    std::vector<std::size_t> lengths;
    lengths.reserve(positions.size());
    std::set<std::string> vocab;
    for (std::size_t pos : positions) {
      Tokens tokens = tokenize(corpus[pos].text);
      lengths.push_back(tokens.size());
      for (auto& t : tokens) vocab.insert(std::move(t));
    }
    cs.sentence_count = positions.size();
    cs.word_count = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
    cs.vocab_size = vocab.size();
    const double n = static_cast<double>(cs.sentence_count);
    cs.mean_len = static_cast<double>(cs.word_count) / n;
    double ss = 0.0;
    for (std::size_t len : lengths) {
      const double d = static_cast<double>(len) - cs.mean_len;
      ss += d * d;
    }
    cs.sd_len = std::sqrt(ss / n);
  }
  return stats;
}

std::string stats_to_json(const CorpusStats& stats) {
  nlohmann::ordered_json out;
  for (Label label : kLabels) {
    const ClassStats& cs = stats[label];
    nlohmann::ordered_json entry;
    entry["sentences"] = cs.sentence_count;
    entry["mean_len"] = cs.mean_len;
    entry["sd_len"] = cs.sd_len;
    entry["word_count"] = cs.word_count;
    entry["vocab"] = cs.vocab_size;
    out[std::string(to_string(label))] = std::move(entry);
  }
  return out.dump(2);
}

std::size_t resolve_target(const Corpus& corpus, const BalanceConfig& config) {
  if (config.target_per_class) return *config.target_per_class;
  const double mid =
      (static_cast<double>(corpus.count(Label::Hate)) + static_cast<double>(corpus.count(Label::NoHate))) / 2.0;
  return static_cast<std::size_t>(std::llround(mid));
}

Corpus balance(const Corpus& corpus, const BalanceConfig& config) {
  for (Label label : kLabels) {
    if (corpus.count(label) == 0) {
      throw Error(ErrorCode::EmptyClass, "class " + std::string(to_string(label)) + " is empty");
    }
  }
  const std::size_t target = resolve_target(corpus, config);
  if (target < 1) throw Error(ErrorCode::TargetBelowOne, "target_per_class must be >= 1");

  std::vector<std::size_t> kept;
  std::vector<std::size_t> duplicated;
  for (Label label : kLabels) {
    const auto positions = corpus.positions(label);
    Rng rng(Rng::derive(config.seed, index_of(label)));
    if (positions.size() >= target) {
      // Partial Fisher-Yates: the first `target` slots are a uniform sample
      // without replacement.
      std::vector<std::size_t> pool(positions.begin(), positions.end());
      for (std::size_t i = 0; i < target; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
      }
      kept.insert(kept.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(target));
    } else {
      kept.insert(kept.end(), positions.begin(), positions.end());
      for (std::size_t i = positions.size(); i < target; ++i) {
        duplicated.push_back(positions[rng.below(positions.size())]);
      }
    }
  }
  std::sort(kept.begin(), kept.end());

  std::uint64_t next_id = 0;
  for (const auto& ex : corpus.examples()) next_id = std::max(next_id, ex.id + 1);

  std::vector<LabeledExample> out;
  out.reserve(kept.size() + duplicated.size());
  for (std::size_t pos : kept) out.push_back(corpus[pos]);
  for (std::size_t pos : duplicated) {
    LabeledExample copy = corpus[pos];
    copy.id = next_id++;
    out.push_back(std::move(copy));
  }
  return Corpus(std::move(out));
}

std::pair<Corpus, Corpus> split(const Corpus& corpus, double eval_fraction, std::uint64_t seed) {
  if (corpus.size() < 2) {
    throw Error(ErrorCode::TooFewExamples, "split needs at least 2 examples, got " +
                                               std::to_string(corpus.size()));
  }
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "eval_fraction must be in (0, 1)");
  }
  std::vector<bool> in_eval(corpus.size(), false);
  for (Label label : kLabels) {
    std::vector<std::size_t> positions(corpus.positions(label).begin(), corpus.positions(label).end());
    Rng rng(Rng::derive(seed, index_of(label)));
    rng.shuffle(std::span<std::size_t>(positions));
    const auto n_eval = static_cast<std::size_t>(
        std::llround(static_cast<double>(positions.size()) * eval_fraction));
    for (std::size_t i = 0; i < n_eval; ++i) in_eval[positions[i]] = true;
  }
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> eval;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    (in_eval[i] ? eval : train).push_back(corpus[i]);
  }
  return {Corpus(std::move(train)), Corpus(std::move(eval))};
}

}  // namespace hsd
