#include "hsd/app/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hsd/error.hpp"
#include "hsd/features.hpp"
#include "hsd/remote_client.hpp"

namespace hsd::app {

namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw Error(ErrorCode::InvalidConfig, "invalid value '" + std::string(value) + "' for " +
                                            std::string(key) + " (expected " + std::string(want) + ")");
}

double parse_double(std::string_view key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) bad_value(key, value, "a number");
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, value, "a number");
  }
}

std::uint64_t parse_uint(std::string_view key, const std::string& value) {
  if (value.empty() || !std::all_of(value.begin(), value.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    bad_value(key, value, "a nonnegative integer");
  }
  try {
    return std::stoull(value);
  } catch (const std::logic_error&) {
    bad_value(key, value, "a nonnegative integer");
  }
}

bool parse_bool(std::string_view key, const std::string& value) {
  const std::string v = utf8::to_lower(value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, value, "true or false");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto trimmed = utf8::trim(item);
    if (!trimmed.empty()) out.emplace_back(trimmed);
  }
  return out;
}

void require_file(std::string_view key, const std::string& path) {
  if (path.empty()) return;
  if (!std::filesystem::is_regular_file(path)) {
    throw Error(ErrorCode::InvalidConfig, std::string(key) + ": file not found: " + path);
  }
}

}  // namespace

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "model_path",
      "backend",
      "backend.url",
      "backend.max_concurrency",
      "backend.lexicon",
      "template_path",
      "bank_path",
      "pipeline.threshold",
      "pipeline.k",
      "pipeline.reclassify",
      "pipeline.fail_closed",
      "generation.temperature",
      "generation.max_new_tokens",
      "generation.seed",
      "generation.timeout_ms",
      "generation.max_retries",
      "generation.backoff_base_ms",
      "generation.allow_out_of_range_temperature",
      "server.listen_addr",
      "log_level",
  };
  return keys;
}

KeyValues parse_config_text(std::string_view content) {
  KeyValues out;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = utf8::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::InvalidConfig, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(utf8::trim(trimmed.substr(0, eq)));
    const std::string value(utf8::trim(trimmed.substr(eq + 1)));
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw Error(ErrorCode::InvalidConfig,
                  "config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    out[key] = value;
  }
  return out;
}

KeyValues load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open config file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

std::string env_name(std::string_view key) {
  std::string out = "DEBIAS_";
  for (char c : key) {
    if (c == '.') {
      out.push_back('_');
    } else if (c >= 'a' && c <= 'z') {
      out.push_back(static_cast<char>(c - 'a' + 'A'));
    } else {
      out.push_back(c);
    }
  }
  return out;
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

ConfigResolver::ConfigResolver(KeyValues flags, KeyValues file, EnvLookup env)
    : flags_(std::move(flags)), file_(std::move(file)), env_(std::move(env)) {}

std::optional<std::string> ConfigResolver::get(std::string_view key) const {
  if (const auto it = flags_.find(key); it != flags_.end()) return it->second;
  if (env_) {
    if (auto v = env_(env_name(key))) return v;
  }
  if (const auto it = file_.find(key); it != file_.end()) return it->second;
  return std::nullopt;
}

AppConfig resolve_app_config(const ConfigResolver& r) {
  AppConfig c;
  c.model_path = r.get_or("model_path", "");

  const std::string backend = r.get_or("backend", "mock");
  if (backend == "mock") {
    c.backend = BackendKind::Mock;
  } else if (backend == "remote") {
    c.backend = BackendKind::Remote;
  } else {
    bad_value("backend", backend, "mock or remote");
  }
  c.backend_url = r.get_or("backend.url", "");
  if (auto v = r.get("backend.max_concurrency")) {
    const auto n = parse_uint("backend.max_concurrency", *v);
    if (n < 1 || n > 1024) bad_value("backend.max_concurrency", *v, "1..1024");
    c.backend_max_concurrency = static_cast<int>(n);
  }
  c.mock_lexicon = default_mock_lexicon();
  if (auto v = r.get("backend.lexicon")) c.mock_lexicon = split_list(*v);

  c.template_path = r.get_or("template_path", "");
  c.bank_path = r.get_or("bank_path", "");

  auto& p = c.pipeline;
  if (auto v = r.get("pipeline.threshold")) p.threshold = parse_double("pipeline.threshold", *v);
  if (auto v = r.get("pipeline.k")) p.k = parse_uint("pipeline.k", *v);
  if (auto v = r.get("pipeline.reclassify")) p.reclassify = parse_bool("pipeline.reclassify", *v);
  if (auto v = r.get("pipeline.fail_closed")) p.fail_closed = parse_bool("pipeline.fail_closed", *v);
  p.max_concurrency = c.backend_max_concurrency;

  auto& g = p.gen_config;
  if (auto v = r.get("generation.temperature")) g.temperature = parse_double("generation.temperature", *v);
  if (auto v = r.get("generation.max_new_tokens")) {
    g.max_new_tokens = static_cast<std::uint32_t>(parse_uint("generation.max_new_tokens", *v));
  }
  if (auto v = r.get("generation.seed")) g.seed = parse_uint("generation.seed", *v);
  if (auto v = r.get("generation.timeout_ms")) {
    g.timeout_ms = static_cast<std::uint32_t>(parse_uint("generation.timeout_ms", *v));
  }
  if (auto v = r.get("generation.max_retries")) {
    g.max_retries = static_cast<std::uint32_t>(parse_uint("generation.max_retries", *v));
  }
  if (auto v = r.get("generation.backoff_base_ms")) {
    g.backoff_base_ms = static_cast<std::uint32_t>(parse_uint("generation.backoff_base_ms", *v));
  }
  if (auto v = r.get("generation.allow_out_of_range_temperature")) {
    g.allow_out_of_range_temperature = parse_bool("generation.allow_out_of_range_temperature", *v);
  }
  // Validation messages start with the field name; prefix the section so
  // they read as config keys.
  try {
    g.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("generation.") + e.what());
  }
  try {
    p.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("pipeline.") + e.what());
  }

  c.listen_addr = r.get_or("server.listen_addr", c.listen_addr);
  c.log_level = r.get_or("log_level", c.log_level);
  return c;
}

void validate_app_config(const AppConfig& config, bool require_model) {
  if (config.backend == BackendKind::Remote && config.backend_url.empty()) {
    throw Error(ErrorCode::InvalidConfig, "backend = remote requires backend.url");
  }
  if (require_model && config.model_path.empty()) {
    throw Error(ErrorCode::InvalidConfig, "model_path is required");
  }
  require_file("model_path", config.model_path);
  require_file("template_path", config.template_path);
  require_file("bank_path", config.bank_path);
}

std::filesystem::path default_template_path() {
  return std::filesystem::path(HSD_DATA_DIR) / "default_template.txt";
}

std::filesystem::path default_bank_path() {
  return std::filesystem::path(HSD_DATA_DIR) / "example_bank.jsonl";
}

DebiasContext make_debias_context(const AppConfig& config) {
  DebiasContext ctx;
  ctx.tmpl = load_template(config.template_path.empty() ? default_template_path()
                                                        : std::filesystem::path(config.template_path));
  ctx.bank = load_bank(config.bank_path.empty() ? default_bank_path()
                                                : std::filesystem::path(config.bank_path));
  if (config.backend == BackendKind::Mock) {
    ctx.backend = std::make_shared<MockRewriter>(config.mock_lexicon, ctx.tmpl);
  } else {
    ctx.backend = std::make_shared<RemoteCompletionClient>(config.backend_url, std::string{},
                                                           config.backend_max_concurrency);
  }
  return ctx;
}

}  // namespace hsd::app
