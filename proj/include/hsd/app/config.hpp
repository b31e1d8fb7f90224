#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hsd/debiaser.hpp"
#include "hsd/pipeline.hpp"

namespace hsd::app {

using KeyValues = std::map<std::string, std::string, std::less<>>;

/// Every key the application understands, in documentation order.
const std::vector<std::string>& known_keys();

/// Flat `key = value` lines; `#` starts a comment line. Unknown keys and
/// lines without '=' are rejected with the offending line number.
KeyValues parse_config_text(std::string_view content);
KeyValues load_config_file(const std::filesystem::path& path);

/// "pipeline.threshold" -> "DEBIAS_PIPELINE_THRESHOLD"
std::string env_name(std::string_view key);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the real process environment.
EnvLookup process_env();

/// Layered lookup: command-line flag, then environment variable, then
/// config file; callers supply the default.
class ConfigResolver {
 public:
  ConfigResolver(KeyValues flags, KeyValues file, EnvLookup env);

  std::optional<std::string> get(std::string_view key) const;
  std::string get_or(std::string_view key, std::string fallback) const {
    return get(key).value_or(std::move(fallback));
  }

 private:
  KeyValues flags_;
  KeyValues file_;
  EnvLookup env_;
};

enum class BackendKind { Mock, Remote };

struct AppConfig {
  std::string model_path;
  BackendKind backend = BackendKind::Mock;
  std::string backend_url;
  int backend_max_concurrency = 4;
  std::vector<std::string> mock_lexicon;
  std::string template_path;
  std::string bank_path;
  PipelineConfig pipeline;
  std::string listen_addr = "127.0.0.1:8080";
  std::string log_level = "info";
};

/// Builds an AppConfig from resolved values; value errors throw
/// Error(InvalidConfig) naming the key.
AppConfig resolve_app_config(const ConfigResolver& resolver);

/// Startup checks: remote backend requires backend.url; every configured
/// path must exist.
void validate_app_config(const AppConfig& config, bool require_model);

/// Template, bank and backend as configured.
DebiasContext make_debias_context(const AppConfig& config);

/// Bundled defaults used when template_path / bank_path are not set.
std::filesystem::path default_template_path();
std::filesystem::path default_bank_path();

}  // namespace hsd::app
