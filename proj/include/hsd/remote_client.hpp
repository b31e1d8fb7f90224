#pragma once

#include <memory>
#include <semaphore>
#include <string>

#include "hsd/debiaser.hpp"

namespace hsd {

/// Completion backend over HTTP.
///
/// Request:  POST <url>  {"prompt": ..., "temperature": T, "max_tokens": n}
///           Authorization: Bearer $DEBIAS_BACKEND_TOKEN (when set)
/// Response: 200 {"text": ...}
///
/// Temperature is forwarded verbatim; sampling happens remotely.
class RemoteCompletionClient final : public GenerationBackend {
 public:
  /// `url` is http://host[:port]/path (https:// when built with OpenSSL).
  /// An empty token falls back to the DEBIAS_BACKEND_TOKEN environment
  /// variable. At most `max_concurrency` requests are in flight at once.
  RemoteCompletionClient(std::string url, std::string token = {}, int max_concurrency = 4);
  ~RemoteCompletionClient() override;

  std::string id() const override { return "remote:" + url_; }
  std::string complete(const std::string& prompt, const GenerationConfig& config) override;

 private:
  std::string url_;
  std::string origin_;  // scheme://host:port
  std::string path_;
  std::string token_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
};

}  // namespace hsd
