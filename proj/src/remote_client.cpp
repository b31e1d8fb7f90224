#include "hsd/remote_client.hpp"

#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "hsd/error.hpp"

namespace hsd {

namespace {

struct SlotGuard {
  std::counting_semaphore<>& sem;
  explicit SlotGuard(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
  ~SlotGuard() { sem.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;
};

}  // namespace

RemoteCompletionClient::RemoteCompletionClient(std::string url, std::string token, int max_concurrency)
    : url_(std::move(url)), token_(std::move(token)) {
  const auto scheme_end = url_.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::InvalidConfig, "backend.url must start with http:// or https://");
  }
  const std::string scheme = url_.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw Error(ErrorCode::InvalidConfig, "unsupported backend.url scheme: " + scheme);
  }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") {
    throw Error(ErrorCode::InvalidConfig, "https backend.url requires a build with OpenSSL");
  }
#endif
  const auto path_start = url_.find('/', scheme_end + 3);
  origin_ = url_.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url_.substr(path_start);
  if (origin_.size() <= scheme_end + 3) throw Error(ErrorCode::InvalidConfig, "backend.url has no host");

  if (token_.empty()) {
    if (const char* env = std::getenv("DEBIAS_BACKEND_TOKEN")) token_ = env;
  }
  if (max_concurrency < 1) throw Error(ErrorCode::InvalidConfig, "backend.max_concurrency must be >= 1");
  slots_ = std::make_unique<std::counting_semaphore<>>(max_concurrency);
}

RemoteCompletionClient::~RemoteCompletionClient() = default;

std::string RemoteCompletionClient::complete(const std::string& prompt, const GenerationConfig& config) {
  SlotGuard slot(*slots_);

  // One client per call: httplib::Client is not safe to share across threads.
  httplib::Client client(origin_);
  const auto timeout_s = static_cast<time_t>(config.timeout_ms / 1000);
  const auto timeout_us = static_cast<time_t>((config.timeout_ms % 1000) * 1000);
  client.set_connection_timeout(timeout_s, timeout_us);
  client.set_read_timeout(timeout_s, timeout_us);
  client.set_write_timeout(timeout_s, timeout_us);
  if (!token_.empty()) client.set_bearer_token_auth(token_);

  const nlohmann::json body = {
      {"prompt", prompt}, {"temperature", config.temperature}, {"max_tokens", config.max_new_tokens}};
  const auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
      throw Error(ErrorCode::Timeout, "backend request timed out or was cut off: " + httplib::to_string(err));
    }
    throw BackendError(0, httplib::to_string(err));
  }
  if (res->status != 200) {
    std::string message = res->body.substr(0, 200);
    throw BackendError(res->status, message.empty() ? "no body" : message);
  }
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception&) {
    throw BackendError(res->status, "response is not JSON");
  }
  if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string()) {
    throw BackendError(res->status, "response lacks a string \"text\" field");
  }
  std::string text = reply["text"].get<std::string>();
  if (text.empty()) throw Error(ErrorCode::EmptyGeneration, "backend returned an empty completion");
  return text;
}

}  // namespace hsd
