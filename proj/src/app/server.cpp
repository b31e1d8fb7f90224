#include "hsd/app/server.hpp"

#include <csignal>
#include <pthread.h>
#include <thread>

#include <httplib.h>

#include "hsd/error.hpp"
#include "hsd/metrics.hpp"

namespace hsd::app {

namespace {

HttpReply error_reply(int status, std::string message) {
  return {status, nlohmann::json{{"error", std::move(message)}}};
}

/// Parses a JSON object body; nullopt reply on success.
std::optional<HttpReply> parse_object(const std::string& body, nlohmann::json& out) {
  try {
    out = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    return error_reply(400, "invalid JSON body");
  }
  if (!out.is_object()) return error_reply(400, "request body must be a JSON object");
  return std::nullopt;
}

std::optional<HttpReply> require_text(const nlohmann::json& req, std::string& text) {
  if (!req.contains("text")) return error_reply(400, "missing field: text");
  if (!req["text"].is_string()) return error_reply(400, "field text must be a string");
  text = req["text"].get<std::string>();
  return std::nullopt;
}

int status_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::Timeout:
    case ErrorCode::BackendError:
    case ErrorCode::EmptyGeneration:
      return 502;
    default:
      return 400;
  }
}

void send(httplib::Response& res, const HttpReply& reply) {
  res.status = reply.status;
  res.set_content(reply.body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace),
                  "application/json");
}

}  // namespace

Service::Service(std::shared_ptr<const ClassifierModel> model, DebiasContext ctx,
                 PipelineConfig config, Logger& log)
    : model_(std::move(model)), ctx_(std::move(ctx)), config_(std::move(config)), log_(log) {}

HttpReply Service::healthz() const {
  return {200, nlohmann::json{{"model_loaded", model_ != nullptr}}};
}

HttpReply Service::classify(const std::string& body) const {
  nlohmann::json req;
  if (auto bad = parse_object(body, req)) return *bad;
  std::string text;
  if (auto bad = require_text(req, text)) return *bad;
  if (!model_) return error_reply(503, "model not loaded");
  const Classification c = predict(*model_, text, config_.threshold);
  return {200, nlohmann::json{{"label", std::string(to_string(c.label))}, {"p_hate", c.p_hate}}};
}

HttpReply Service::debias(const std::string& body) const {
  nlohmann::json req;
  if (auto bad = parse_object(body, req)) return *bad;
  std::string text;
  if (auto bad = require_text(req, text)) return *bad;

  std::size_t k = config_.k;
  GenerationConfig gen = config_.gen_config;
  if (req.contains("k")) {
    if (!req["k"].is_number_unsigned()) return error_reply(400, "field k must be a nonnegative integer");
    k = req["k"].get<std::size_t>();
  }
  if (req.contains("temperature")) {
    if (!req["temperature"].is_number()) return error_reply(400, "field temperature must be a number");
    gen.temperature = req["temperature"].get<double>();
  }
  try {
    gen.validate();
  } catch (const Error& e) {
    return error_reply(400, e.what());
  }
  if (!model_) return error_reply(503, "model not loaded");

  try {
    const Classification pre = predict(*model_, text, config_.threshold);
    const DebiasResult result = hsd::debias(text, ctx_, k, gen);
    const Classification post = predict(*model_, result.rewritten, config_.threshold);
    log_.info("debias", {{"k", k}, {"attempts", result.attempts}, {"backend", result.backend_id}});
    return {200, nlohmann::json{{"original", result.original},
                                {"rewritten", result.rewritten},
                                {"p_hate_pre", pre.p_hate},
                                {"p_hate_post", post.p_hate}}};
  } catch (const Error& e) {
    const int status = status_for(e);
    if (status == 502) log_.warn("debias_backend_failure", {{"code", to_string(e.code())}, {"message", e.what()}});
    return error_reply(status, e.what());
  }
}

HttpReply Service::evaluate(const std::string& body) const {
  nlohmann::json req;
  if (auto bad = parse_object(body, req)) return *bad;
  if (!req.contains("data_path")) return error_reply(400, "missing field: data_path");
  if (!req["data_path"].is_string()) return error_reply(400, "field data_path must be a string");
  if (!model_) return error_reply(503, "model not loaded");
  const std::string path = req["data_path"].get<std::string>();
  try {
    const Corpus data = load_corpus(path, format_for_path(path));
    const auto [eval, bias] = hsd::evaluate(*model_, data, config_.threshold);
    return {200, nlohmann::json::parse(report_json(eval, bias))};
  } catch (const Error& e) {
    return error_reply(400, e.what());
  }
}

void Service::install(httplib::Server& server) const {
  auto wrap = [this](HttpReply (Service::*handler)(const std::string&) const) {
    return [this, handler](const httplib::Request& req, httplib::Response& res) {
      send(res, (this->*handler)(req.body));
      log_.debug("request", {{"path", req.path}, {"status", res.status}});
    };
  };
  server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) { send(res, healthz()); });
  server.Post("/v1/classify", wrap(&Service::classify));
  server.Post("/v1/debias", wrap(&Service::debias));
  server.Post("/v1/evaluate", wrap(&Service::evaluate));

  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    // Handlers set their own JSON bodies; only fill in bare statuses.
    if (!res.body.empty()) return;
    send(res, error_reply(res.status, res.status == 404 ? "not found" : "request failed"));
  });
  server.set_exception_handler([this](const httplib::Request& req, httplib::Response& res,
                                      std::exception_ptr ep) {
    std::string what = "unknown";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    log_.error("unhandled_exception", {{"path", req.path}, {"message", what}});
    send(res, error_reply(500, "internal error"));
  });
}

int run_server(const AppConfig& config, Logger& log) {
  // Block termination signals in every thread; a dedicated waiter turns
  // them into an orderly stop.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  std::shared_ptr<const ClassifierModel> model;
  DebiasContext ctx;
  std::string host;
  int port = 0;
  try {
    validate_app_config(config, false);
    if (!config.model_path.empty()) {
      model = std::make_shared<const ClassifierModel>(load_model(config.model_path));
    }
    ctx = make_debias_context(config);
    const auto colon = config.listen_addr.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorCode::InvalidConfig, "server.listen_addr must be host:port");
    host = config.listen_addr.substr(0, colon);
    port = std::stoi(config.listen_addr.substr(colon + 1));
  } catch (const std::exception& e) {
    log.error("startup_failed", {{"message", e.what()}});
    return 2;
  }

  Service service(model, std::move(ctx), config.pipeline, log);
  httplib::Server server;
  service.install(server);
  if (!server.bind_to_port(host, port)) {
    log.error("startup_failed", {{"message", "cannot bind " + config.listen_addr}});
    return 2;
  }

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    log.info("shutdown", {{"signal", sig}});
    server.stop();
  });

  log.info("listening", {{"addr", config.listen_addr}, {"model_loaded", model != nullptr}});
  const bool ok = server.listen_after_bind();
  if (!ok) {
    // listen ended without a signal; release the waiter.
    pthread_kill(waiter.native_handle(), SIGTERM);
  }
  waiter.join();
  log.info("stopped");
  return 0;
}

}  // namespace hsd::app
