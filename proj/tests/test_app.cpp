#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "hsd/app/config.hpp"
#include "hsd/app/log.hpp"
#include "hsd/app/server.hpp"
#include "hsd/error.hpp"
#include "support/fake_backend.hpp"

namespace hsd::app {
namespace {

using hsd::testing::ScriptedBackend;

EnvLookup fake_env(KeyValues vars) {
  return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
    if (const auto it = vars.find(name); it != vars.end()) return it->second;
    return std::nullopt;
  };
}

TEST(Config, ParseText) {
  const KeyValues kv = parse_config_text("# comment\n\n  pipeline.k = 10 \nbackend=remote\nbackend.url = http://x:1/a=b\n");
  EXPECT_EQ(kv.at("pipeline.k"), "10");
  EXPECT_EQ(kv.at("backend"), "remote");
  EXPECT_EQ(kv.at("backend.url"), "http://x:1/a=b");
}

TEST(Config, RejectsUnknownKeysAndBadLines) {
  EXPECT_THROW(parse_config_text("pipeline.kk = 1\n"), Error);
  EXPECT_THROW(parse_config_text("just words\n"), Error);
  try {
    parse_config_text("# ok\nnope = 1\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Config, EnvName) {
  EXPECT_EQ(env_name("pipeline.threshold"), "DEBIAS_PIPELINE_THRESHOLD");
  EXPECT_EQ(env_name("model_path"), "DEBIAS_MODEL_PATH");
}

// Every combination of which layers set the key: the highest layer present
// wins, and the default applies when none does.
TEST(Config, PrecedenceMatrix) {
  const std::string key = "pipeline.threshold";
  for (int mask = 0; mask < 8; ++mask) {
    const bool flag = mask & 1;
    const bool env = mask & 2;
    const bool file = mask & 4;
    KeyValues flags, file_kv, env_kv;
    if (flag) flags[key] = "0.9";
    if (env) env_kv[env_name(key)] = "0.8";
    if (file) file_kv[key] = "0.7";
    const ConfigResolver resolver(flags, file_kv, fake_env(env_kv));
    const double expected = flag ? 0.9 : env ? 0.8 : file ? 0.7 : 0.5;
    EXPECT_EQ(resolve_app_config(resolver).pipeline.threshold, expected) << "mask " << mask;
  }
}

TEST(Config, ResolveValuesAndErrors) {
  KeyValues file = {{"pipeline.k", "3"},
                    {"pipeline.reclassify", "false"},
                    {"generation.temperature", "0.2"},
                    {"backend.lexicon", "foo, bar"},
                    {"backend.max_concurrency", "2"}};
  const AppConfig c = resolve_app_config(ConfigResolver({}, file, fake_env({})));
  EXPECT_EQ(c.pipeline.k, 3u);
  EXPECT_FALSE(c.pipeline.reclassify);
  EXPECT_EQ(c.pipeline.gen_config.temperature, 0.2);
  EXPECT_EQ(c.mock_lexicon, (std::vector<std::string>{"foo", "bar"}));
  EXPECT_EQ(c.pipeline.max_concurrency, 2);

  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"pipeline.k", "-1"}, {"pipeline.threshold", "abc"}, {"backend", "gpt"},
           {"generation.temperature", "3"}, {"pipeline.reclassify", "maybe"}}) {
    try {
      resolve_app_config(ConfigResolver({{k, v}}, {}, fake_env({})));
      ADD_FAILURE() << k;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
      EXPECT_NE(std::string(e.what()).find(k), std::string::npos) << e.what();
    }
  }
}

TEST(Config, Validation) {
  AppConfig c;
  c.backend = BackendKind::Remote;
  EXPECT_THROW(validate_app_config(c, false), Error);
  c = AppConfig{};
  EXPECT_THROW(validate_app_config(c, true), Error);
  c.model_path = "/nonexistent/model.bin";
  EXPECT_THROW(validate_app_config(c, true), Error);
}

TEST(Config, DefaultContextUsesBundledFiles) {
  const DebiasContext ctx = make_debias_context(AppConfig{});
  EXPECT_EQ(ctx.tmpl, hsd::testing::default_template());
  EXPECT_GE(ctx.bank.size(), 5u);
  EXPECT_EQ(ctx.backend->id(), "mock");
}

TEST(Logger, JsonLines) {
  std::ostringstream out;
  Logger log(out, LogLevel::Info);
  log.debug("hidden");
  log.info("hello", {{"n", 3}});
  log.error("bad", {{"why", "x"}});
  std::istringstream lines(out.str());
  std::string line;
  std::vector<nlohmann::json> records;
  while (std::getline(lines, line)) records.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0]["level"], "info");
  EXPECT_EQ(records[0]["event"], "hello");
  EXPECT_EQ(records[0]["fields"]["n"], 3);
  EXPECT_TRUE(records[0]["ts"].is_string());
  EXPECT_EQ(records[1]["level"], "error");
  EXPECT_THROW(parse_log_level("loud"), Error);
}

std::shared_ptr<const ClassifierModel> tiny_model() {
  auto model = ClassifierModel::zeros(FeatureConfig{});
  model.params.bias = {1.0, 0.0};
  return std::make_shared<const ClassifierModel>(std::move(model));
}

DebiasContext mock_ctx() {
  return {hsd::testing::default_template(), ExampleBank{},
          std::make_shared<MockRewriter>(default_mock_lexicon(), hsd::testing::default_template())};
}

PipelineConfig zero_shot() {
  PipelineConfig c;
  c.k = 0;
  c.gen_config.backoff_base_ms = 1;
  return c;
}

class ServiceTest : public ::testing::Test {
 protected:
  std::ostringstream log_out_;
  Logger log_{log_out_, LogLevel::Debug};
};

TEST_F(ServiceTest, Healthz) {
  EXPECT_EQ(Service(tiny_model(), mock_ctx(), zero_shot(), log_).healthz().body["model_loaded"], true);
  EXPECT_EQ(Service(nullptr, mock_ctx(), zero_shot(), log_).healthz().body["model_loaded"], false);
}

TEST_F(ServiceTest, ClassifySchema) {
  const Service s(tiny_model(), mock_ctx(), zero_shot(), log_);
  const HttpReply r = s.classify(R"({"text":"hello"})");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body["label"], "hate");
  EXPECT_NEAR(r.body["p_hate"].get<double>(), 1 / (1 + std::exp(-1.0)), 1e-12);
  EXPECT_EQ(s.classify("{}").status, 400);
  EXPECT_EQ(s.classify("{}").body["error"], "missing field: text");
  EXPECT_EQ(s.classify("not json").status, 400);
  EXPECT_EQ(s.classify(R"({"text": 5})").status, 400);
  EXPECT_EQ(s.classify("[1]").status, 400);
}

TEST_F(ServiceTest, NoModelIs503) {
  const Service s(nullptr, mock_ctx(), zero_shot(), log_);
  EXPECT_EQ(s.classify(R"({"text":"x"})").status, 503);
  EXPECT_EQ(s.debias(R"({"text":"x","k":0})").status, 503);
  EXPECT_EQ(s.evaluate(R"({"data_path":"x.csv"})").status, 503);
}

TEST_F(ServiceTest, DebiasSchemaAndValidation) {
  const Service s(tiny_model(), mock_ctx(), zero_shot(), log_);
  const HttpReply r = s.debias(R"({"text":"you scum","k":0,"temperature":0.7})");
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_EQ(r.body["original"], "you scum");
  EXPECT_EQ(r.body["rewritten"], "you [redacted]");
  EXPECT_TRUE(r.body["p_hate_pre"].is_number());
  EXPECT_TRUE(r.body["p_hate_post"].is_number());
  EXPECT_EQ(s.debias(R"({"text":"x","k":5})").status, 400);  // empty bank
  EXPECT_EQ(s.debias(R"({"text":"x","k":-1})").status, 400);
  EXPECT_EQ(s.debias(R"({"text":"x","k":0,"temperature":5})").status, 400);
  EXPECT_EQ(s.debias(R"({"text":"   ","k":0})").status, 400);
}

TEST_F(ServiceTest, BackendFailureIs502) {
  DebiasContext ctx{hsd::testing::default_template(), ExampleBank{},
                    std::make_shared<ScriptedBackend>(std::deque{ScriptedBackend::status(500)})};
  const Service s(tiny_model(), ctx, zero_shot(), log_);
  const HttpReply r = s.debias(R"({"text":"x","k":0})");
  EXPECT_EQ(r.status, 502);
  EXPECT_TRUE(r.body["error"].is_string());
  EXPECT_EQ(s.classify(R"({"text":"x"})").status, 200);
  EXPECT_NE(log_out_.str().find("debias_backend_failure"), std::string::npos);
}

TEST_F(ServiceTest, Evaluate) {
  const auto path = std::filesystem::temp_directory_path() / "hsd_service_eval.csv";
  std::ofstream(path) << "text,label\nbad words,hate\nnice words,nohate\n";
  const Service s(tiny_model(), mock_ctx(), zero_shot(), log_);
  const HttpReply r = s.evaluate(nlohmann::json{{"data_path", path.string()}}.dump());
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_EQ(r.body["counts"]["tp"], 1);
  EXPECT_EQ(r.body["counts"]["fp"], 1);
  EXPECT_EQ(s.evaluate("{}").status, 400);
  EXPECT_EQ(s.evaluate(R"({"data_path":"/nonexistent.csv"})").status, 400);
  std::filesystem::remove(path);
}

// Full HTTP round trip on an ephemeral localhost port.
TEST_F(ServiceTest, LiveServer) {
  DebiasContext failing{hsd::testing::default_template(), ExampleBank{},
                        std::make_shared<ScriptedBackend>(std::deque{ScriptedBackend::status(503)})};
  const Service service(tiny_model(), failing, zero_shot(), log_);
  httplib::Server server;
  service.install(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/healthz");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(nlohmann::json::parse(health->body)["model_loaded"], true);

  auto missing = client.Get("/nope");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_TRUE(nlohmann::json::parse(missing->body).contains("error"));

  auto bad = client.Post("/v1/classify", "{}", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(nlohmann::json::parse(bad->body)["error"], "missing field: text");

  auto gen = client.Post("/v1/debias", R"({"text":"x","k":0})", "application/json");
  ASSERT_TRUE(gen);
  EXPECT_EQ(gen->status, 502);
  EXPECT_TRUE(nlohmann::json::parse(gen->body).contains("error"));

  auto ok = client.Post("/v1/classify", R"({"text":"x"})", "application/json");
  ASSERT_TRUE(ok);
  EXPECT_EQ(ok->status, 200);

  server.stop();
  t.join();
}

}  // namespace
}  // namespace hsd::app
