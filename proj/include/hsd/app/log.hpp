#pragma once

#include <mutex>
#include <ostream>
#include <string>
#include <string_view>

#include <json.hpp>

namespace hsd::app {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3 };

/// Throws Error(InvalidConfig) for anything but debug/info/warn/error.
LogLevel parse_log_level(std::string_view name);
std::string_view to_string(LogLevel level);

/// One JSON object per line: {"ts", "level", "event", "fields"}.
class Logger {
 public:
  explicit Logger(std::ostream& out, LogLevel min_level = LogLevel::Info)
      : out_(out), min_level_(min_level) {}

  void log(LogLevel level, std::string_view event, nlohmann::json fields = nlohmann::json::object());

  void debug(std::string_view event, nlohmann::json fields = nlohmann::json::object()) {
    log(LogLevel::Debug, event, std::move(fields));
  }
  void info(std::string_view event, nlohmann::json fields = nlohmann::json::object()) {
    log(LogLevel::Info, event, std::move(fields));
  }
  void warn(std::string_view event, nlohmann::json fields = nlohmann::json::object()) {
    log(LogLevel::Warn, event, std::move(fields));
  }
  void error(std::string_view event, nlohmann::json fields = nlohmann::json::object()) {
    log(LogLevel::Error, event, std::move(fields));
  }

 private:
  std::mutex mu_;
  std::ostream& out_;
  LogLevel min_level_;
};

}  // namespace hsd::app
