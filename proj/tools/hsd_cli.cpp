// hsd: command-line front end for the moderation pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hsd/app/config.hpp"
#include "hsd/app/log.hpp"
#include "hsd/app/server.hpp"
#include "hsd/classifier.hpp"
#include "hsd/corpus.hpp"
#include "hsd/debiaser.hpp"
#include "hsd/error.hpp"
#include "hsd/metrics.hpp"
#include "hsd/pipeline.hpp"

namespace {

using hsd::app::KeyValues;

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flags shared by the subcommands that run the pipeline. Each one maps
/// onto a config key so flags take precedence over env and config file.
struct AppFlags {
  std::optional<std::string> config_path;
  std::map<std::string, std::optional<std::string>> values;

  void add(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    cmd->add_option(flag, values[key], help);
  }

  KeyValues set_values() const {
    KeyValues out;
    for (const auto& [key, value] : values) {
      if (value) out[key] = *value;
    }
    return out;
  }

  hsd::app::AppConfig resolve() const {
    KeyValues file;
    std::optional<std::string> path = config_path;
    if (!path) {
      if (const char* env = std::getenv("DEBIAS_CONFIG")) path = env;
    }
    if (path) file = hsd::app::load_config_file(*path);
    const hsd::app::ConfigResolver resolver(set_values(), std::move(file), hsd::app::process_env());
    return hsd::app::resolve_app_config(resolver);
  }
};

void add_pipeline_flags(CLI::App* cmd, AppFlags& f, bool with_model) {
  cmd->add_option("--config", f.config_path, "Config file (key = value lines)");
  if (with_model) f.add(cmd, "--model", "model_path", "Model file");
  f.add(cmd, "--backend", "backend", "Generation backend: mock | remote");
  f.add(cmd, "--url", "backend.url", "Remote completion endpoint");
  f.add(cmd, "--max-concurrency", "backend.max_concurrency", "Concurrent backend calls");
  f.add(cmd, "--lexicon", "backend.lexicon", "Comma-separated terms for the mock backend");
  f.add(cmd, "--template", "template_path", "Prompt template file");
  f.add(cmd, "--bank", "bank_path", "Few-shot example bank (JSONL)");
  f.add(cmd, "--k", "pipeline.k", "Number of few-shot examples");
  f.add(cmd, "--threshold", "pipeline.threshold", "Hate decision threshold");
  f.add(cmd, "--temperature", "generation.temperature", "Sampling temperature");
  f.add(cmd, "--max-new-tokens", "generation.max_new_tokens", "Generation length limit");
  f.add(cmd, "--seed", "generation.seed", "Seed for example selection and retry jitter");
  f.add(cmd, "--timeout-ms", "generation.timeout_ms", "Per-attempt backend timeout");
  f.add(cmd, "--max-retries", "generation.max_retries", "Backend retries");
  f.add(cmd, "--log-level", "log_level", "debug | info | warn | error");
}

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw hsd::Error(hsd::ErrorCode::Io, "cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_all(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw hsd::Error(hsd::ErrorCode::Io, "cannot write " + path);
  out << content;
}

/// Texts to process: JSONL objects with "text" (and optional "label"),
/// a CSV corpus, or plain text with one item per line.
std::vector<hsd::BatchItem> read_items(const std::string& path) {
  std::vector<hsd::BatchItem> items;
  const std::string ext = std::filesystem::path(path).extension().string();
  if (ext == ".csv") {
    const auto corpus = hsd::load_corpus(path, hsd::CorpusFormat::Csv);
    for (const auto& ex : corpus.examples()) items.push_back({ex.text, ex.label});
    return items;
  }
  std::istringstream in(read_all(path));
  std::string line;
  std::size_t line_no = 0;
  const bool jsonl = ext == ".jsonl" || ext == ".json" || ext == ".ndjson";
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (hsd::utf8::trim(line).empty()) continue;
    if (!jsonl) {
      items.push_back({line, std::nullopt});
      continue;
    }
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw hsd::Error(hsd::ErrorCode::MalformedRecord, "invalid JSON at line " + std::to_string(line_no));
    }
    if (!obj.is_object() || !obj.contains("text") || !obj["text"].is_string()) {
      throw hsd::Error(hsd::ErrorCode::MissingColumn, "missing string key \"text\" at line " + std::to_string(line_no));
    }
    hsd::BatchItem item{obj["text"].get<std::string>(), std::nullopt};
    if (obj.contains("label") && obj["label"].is_string()) item.truth = hsd::parse_label(obj["label"].get<std::string>());
    items.push_back(std::move(item));
  }
  return items;
}

hsd::CorpusFormat format_option(const std::optional<std::string>& format, const std::string& path) {
  if (!format) return hsd::format_for_path(path);
  if (*format == "csv") return hsd::CorpusFormat::Csv;
  if (*format == "jsonl") return hsd::CorpusFormat::Jsonl;
  throw UsageError("--format must be csv or jsonl");
}

std::int64_t build_timestamp(const std::optional<std::int64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
    try {
      return std::stoll(env);
    } catch (const std::logic_error&) {
      throw UsageError("SOURCE_DATE_EPOCH is not an integer");
    }
  }
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

nlohmann::ordered_json bias_json(const hsd::BiasReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  return {{"n", r.n},
          {"pre", opt(r.mean_pre)},
          {"post", opt(r.mean_post)},
          {"reduction", opt(r.reduction)},
          {"fp_rate_on_nonhate_pre", opt(r.fp_rate_on_nonhate_pre)},
          {"fp_rate_on_nonhate_post", opt(r.fp_rate_on_nonhate_post)}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hate speech classifier and prompt-based debiaser"};
  app.require_subcommand(1);

  hsd::app::Logger log(std::cerr);

  // stats
  std::string data_path;
  std::optional<std::string> format;
  std::optional<std::string> json_out;
  auto* stats = app.add_subcommand("stats", "Per-class corpus statistics as JSON");
  stats->add_option("--data", data_path, "Labeled corpus (CSV or JSONL)")->required();
  stats->add_option("--format", format, "csv | jsonl (default: by extension)");
  stats->add_option("--json", json_out, "Also write the report to this file");

  // balance
  std::string out_path;
  std::string target = "auto";
  std::uint64_t seed = 0;
  auto* balance = app.add_subcommand("balance", "Under/over-sample to equal class sizes");
  balance->add_option("--data", data_path, "Labeled corpus")->required();
  balance->add_option("--out", out_path, "Output corpus")->required();
  balance->add_option("--target", target, "Examples per class, or 'auto'");
  balance->add_option("--seed", seed, "Sampling seed");
  balance->add_option("--format", format, "Input format: csv | jsonl");

  // split
  std::string train_out;
  std::string eval_out;
  double fraction = 0.2;
  auto* split = app.add_subcommand("split", "Stratified train/eval split");
  split->add_option("--data", data_path, "Labeled corpus")->required();
  split->add_option("--train-out", train_out, "Training split output")->required();
  split->add_option("--eval-out", eval_out, "Evaluation split output")->required();
  split->add_option("--fraction", fraction, "Eval fraction in (0,1)");
  split->add_option("--seed", seed, "Shuffle seed");
  split->add_option("--format", format, "Input format: csv | jsonl");

  // train
  hsd::TrainConfig tc;
  hsd::FeatureConfig fc;
  std::string ngrams = "1,2";
  bool no_shuffle = false;
  bool no_normalize = false;
  bool serial = false;
  std::optional<std::int64_t> timestamp;
  auto* train = app.add_subcommand("train", "Train the classifier");
  train->add_option("--data", data_path, "Training corpus")->required();
  train->add_option("--out", out_path, "Model output path")->required();
  train->add_option("--epochs", tc.epochs, "Epochs")->capture_default_str();
  train->add_option("--lr", tc.learning_rate, "Adam learning rate")->capture_default_str();
  train->add_option("--weight-decay", tc.weight_decay, "Decoupled weight decay")->capture_default_str();
  train->add_option("--eps", tc.adam_eps, "Adam epsilon")->capture_default_str();
  train->add_option("--beta1", tc.adam_beta1, "Adam beta1")->capture_default_str();
  train->add_option("--beta2", tc.adam_beta2, "Adam beta2")->capture_default_str();
  train->add_option("--batch", tc.batch_size, "Batch size")->capture_default_str();
  train->add_option("--seed", tc.seed, "Shuffle seed");
  train->add_flag("--no-shuffle", no_shuffle, "Keep corpus order in every epoch");
  train->add_option("--max-tokens", fc.max_tokens, "Token truncation limit")->capture_default_str();
  train->add_option("--dimension", fc.dimension, "Hashed feature dimension (power of two)")->capture_default_str();
  train->add_option("--ngrams", ngrams, "Comma-separated n-gram orders")->capture_default_str();
  train->add_flag("--no-normalize", no_normalize, "Skip L2 normalization of features");
  train->add_flag("--serial", serial, "Use the serial reference kernels");
  train->add_option("--timestamp", timestamp, "trained_at stamp (default: SOURCE_DATE_EPOCH or now)");
  train->add_option("--format", format, "Input format: csv | jsonl");

  // classify
  AppFlags classify_flags;
  std::optional<std::string> text;
  std::optional<std::string> in_path;
  auto* classify = app.add_subcommand("classify", "Classify texts");
  classify->add_option("--config", classify_flags.config_path, "Config file");
  classify_flags.add(classify, "--model", "model_path", "Model file");
  classify_flags.add(classify, "--threshold", "pipeline.threshold", "Hate decision threshold");
  classify->add_option("--text", text, "Single text");
  classify->add_option("--in", in_path, "Texts file (JSONL with \"text\", CSV, or one per line)");

  // debias
  AppFlags debias_flags;
  auto* debias = app.add_subcommand("debias", "Rewrite one text with the prompted generator");
  add_pipeline_flags(debias, debias_flags, false);
  debias->add_option("--text", text, "Text to rewrite")->required();

  // run
  AppFlags run_flags;
  auto* run = app.add_subcommand("run", "Classify-then-debias over a batch, JSONL outcomes");
  add_pipeline_flags(run, run_flags, true);
  run->add_option("--in", in_path, "Input texts")->required();
  run->add_option("--out", out_path, "Outcome JSONL")->required();

  // evaluate
  AppFlags eval_flags;
  bool with_debias = false;
  auto* evaluate = app.add_subcommand("evaluate", "Metrics report on labeled data");
  add_pipeline_flags(evaluate, eval_flags, true);
  evaluate->add_option("--data", data_path, "Labeled evaluation corpus")->required();
  evaluate->add_option("--json", json_out, "Write the report JSON here");
  evaluate->add_flag("--with-debias", with_debias, "Also run the rewrite stage for post-debias bias scores");

  // serve
  AppFlags serve_flags;
  auto* serve = app.add_subcommand("serve", "HTTP service");
  add_pipeline_flags(serve, serve_flags, true);
  serve_flags.add(serve, "--listen", "server.listen_addr", "host:port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*stats) {
      const auto corpus = hsd::load_corpus(data_path, format_option(format, data_path));
      const std::string report = hsd::stats_to_json(hsd::compute_stats(corpus));
      std::cout << report << "\n";
      if (json_out) write_all(*json_out, report + "\n");
    } else if (*balance) {
      const auto corpus = hsd::load_corpus(data_path, format_option(format, data_path));
      hsd::BalanceConfig cfg;
      cfg.seed = seed;
      if (target != "auto") {
        try {
          cfg.target_per_class = std::stoull(target);
        } catch (const std::logic_error&) {
          throw UsageError("--target must be a positive integer or 'auto'");
        }
      }
      const auto balanced = hsd::balance(corpus, cfg);
      hsd::save_corpus(balanced, out_path, hsd::format_for_path(out_path));
      log.info("balanced", {{"hate", balanced.count(hsd::Label::Hate)},
                            {"nohate", balanced.count(hsd::Label::NoHate)}});
    } else if (*split) {
      const auto corpus = hsd::load_corpus(data_path, format_option(format, data_path));
      const auto [tr, ev] = hsd::split(corpus, fraction, seed);
      hsd::save_corpus(tr, train_out, hsd::format_for_path(train_out));
      hsd::save_corpus(ev, eval_out, hsd::format_for_path(eval_out));
      log.info("split", {{"train", tr.size()}, {"eval", ev.size()}});
    } else if (*train) {
      fc.normalize = !no_normalize;
      tc.shuffle = !no_shuffle;
      fc.ngram_orders.clear();
      std::stringstream list(ngrams);
      std::string item;
      while (std::getline(list, item, ',')) {
        try {
          fc.ngram_orders.push_back(std::stoi(item));
        } catch (const std::logic_error&) {
          throw UsageError("--ngrams must be comma-separated integers");
        }
      }
      const auto corpus = hsd::load_corpus(data_path, format_option(format, data_path));
      auto model = hsd::train(
          corpus, fc, tc,
          [&log](const hsd::EpochProgress& p) {
            log.info("epoch", {{"epoch", p.epoch}, {"mean_loss", p.mean_loss}});
          },
          serial ? hsd::Exec::Serial : hsd::Exec::Parallel);
      model.trained_at = build_timestamp(timestamp);
      hsd::save_model(model, out_path);
      log.info("model_saved", {{"path", out_path}, {"examples", corpus.size()}});
    } else if (*classify) {
      const auto cfg = classify_flags.resolve();
      hsd::app::validate_app_config(cfg, true);
      const auto model = hsd::load_model(cfg.model_path);
      std::vector<std::string> texts;
      if (text) texts.push_back(*text);
      if (in_path) {
        for (auto& item : read_items(*in_path)) texts.push_back(std::move(item.text));
      }
      if (texts.empty()) throw UsageError("classify needs --text or --in");
      for (const auto& c : hsd::predict_all(model, texts, cfg.pipeline.threshold)) {
        nlohmann::ordered_json j{{"label", std::string(hsd::to_string(c.label))}, {"p_hate", c.p_hate}};
        std::cout << j.dump() << "\n";
      }
    } else if (*debias) {
      const auto cfg = debias_flags.resolve();
      hsd::app::validate_app_config(cfg, false);
      const auto ctx = hsd::app::make_debias_context(cfg);
      const auto result = hsd::debias(*text, ctx, cfg.pipeline.k, cfg.pipeline.gen_config);
      nlohmann::ordered_json j{{"original", result.original},   {"rewritten", result.rewritten},
                               {"backend", result.backend_id},  {"k_used", result.k_used},
                               {"attempts", result.attempts},   {"prompt", result.prompt_rendered}};
      std::cout << j.dump(2) << "\n";
    } else if (*run) {
      const auto cfg = run_flags.resolve();
      hsd::app::validate_app_config(cfg, true);
      const auto model = hsd::load_model(cfg.model_path);
      const auto ctx = hsd::app::make_debias_context(cfg);
      const auto items = read_items(*in_path);
      const auto result = hsd::batch_process(items, model, ctx, cfg.pipeline);
      std::string lines;
      for (const auto& o : result.outcomes) lines += hsd::outcome_to_json(o) + "\n";
      write_all(out_path, lines);
      std::cout << bias_json(result.report).dump(2) << "\n";
    } else if (*evaluate) {
      const auto cfg = eval_flags.resolve();
      hsd::app::validate_app_config(cfg, true);
      const auto model = hsd::load_model(cfg.model_path);
      const auto data = hsd::load_corpus(data_path, hsd::format_for_path(data_path));
      auto [eval, bias] = hsd::evaluate(model, data, cfg.pipeline.threshold);
      if (with_debias) {
        const auto ctx = hsd::app::make_debias_context(cfg);
        bias = hsd::batch_process(data, model, ctx, cfg.pipeline).report;
      }
      const std::string report = hsd::report_json(eval, bias);
      std::cout << report << "\n";
      if (json_out) write_all(*json_out, report + "\n");
    } else if (*serve) {
      const auto cfg = serve_flags.resolve();
      hsd::app::Logger server_log(std::cerr, hsd::app::parse_log_level(cfg.log_level));
      return hsd::app::run_server(cfg, server_log) == 0 ? 0 : kExitRuntime;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const hsd::Error& e) {
    log.error("failed", {{"code", hsd::to_string(e.code())}, {"message", e.what()}});
    return kExitRuntime;
  } catch (const std::exception& e) {
    log.error("failed", {{"message", e.what()}});
    return kExitRuntime;
  }
  return 0;
}
