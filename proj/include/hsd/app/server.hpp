#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "hsd/app/config.hpp"
#include "hsd/app/log.hpp"
#include "hsd/classifier.hpp"
#include "hsd/pipeline.hpp"

namespace httplib {
class Server;
}

namespace hsd::app {

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

/// Request handling for the moderation service, independent of the
/// transport so handlers can be exercised directly.
///
/// Status mapping: 400 invalid input, 404 unknown route, 502 generation
/// backend failure, 503 model not loaded. Every error body is
/// {"error": "..."}.
class Service {
 public:
  Service(std::shared_ptr<const ClassifierModel> model, DebiasContext ctx, PipelineConfig config,
          Logger& log);

  HttpReply healthz() const;
  HttpReply classify(const std::string& body) const;
  HttpReply debias(const std::string& body) const;
  HttpReply evaluate(const std::string& body) const;

  /// Registers all routes plus JSON 404 and exception handlers.
  void install(httplib::Server& server) const;

 private:
  std::shared_ptr<const ClassifierModel> model_;
  DebiasContext ctx_;
  PipelineConfig config_;
  Logger& log_;
};

/// Loads the model (when configured), listens on config.listen_addr and
/// blocks until SIGINT/SIGTERM, then stops accepting and drains in-flight
/// requests. Returns the process exit code.
int run_server(const AppConfig& config, Logger& log);

}  // namespace hsd::app
