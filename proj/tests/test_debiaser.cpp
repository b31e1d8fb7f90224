#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>

#include "hsd/debiaser.hpp"
#include "hsd/error.hpp"
#include "support/fake_backend.hpp"

namespace hsd {
namespace {

using testing::ScriptedBackend;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an hsd::Error";
  return ErrorCode::Io;
}

ExampleBank small_bank() {
  return ExampleBank({{"b0", "u0", "x"}, {"b1", "u1", "x"}, {"b2", "u2", "y"},
                      {"b3", "u3", std::nullopt}, {"b4", "u4", "y"}, {"b5", "u5", "z"}});
}

GenerationConfig fast_config() {
  GenerationConfig c;
  c.backoff_base_ms = 1;
  return c;
}

TEST(Template, ParseDefaultFile) {
  const PromptTemplate t = load_template(std::filesystem::path(HSD_DATA_DIR) / "default_template.txt");
  EXPECT_EQ(t, testing::default_template());
}

TEST(Template, EscapesAndMultilineSections) {
  const PromptTemplate t = parse_template(
      "[instruction]\nline one\nline two\n\n[example_format]\nQ: {biased}\\tA: {unbiased}\n"
      "[input_format]\nQ: {input}\\nA:\n[separator]\n\\\\n---\n");
  EXPECT_EQ(t.instruction, "line one\nline two");
  EXPECT_EQ(t.example_format, "Q: {biased}\tA: {unbiased}");
  EXPECT_EQ(t.input_format, "Q: {input}\nA:");
  EXPECT_EQ(t.separator, "\\n---");
}

TEST(Template, Errors) {
  EXPECT_EQ(code_of([] { parse_template("[instruction]\nx\n[example_format]\n{biased}\n[input_format]\n{input}\n[separator]\n\\n"); }),
            ErrorCode::InvalidTemplate);
  EXPECT_EQ(code_of([] { parse_template("[instruction]\nx\n[bogus]\ny\n"); }), ErrorCode::InvalidTemplate);
  EXPECT_EQ(code_of([] { parse_template("stray\n[instruction]\nx\n"); }), ErrorCode::InvalidTemplate);
  EXPECT_EQ(code_of([] { parse_template("[instruction]\nx\n"); }), ErrorCode::InvalidTemplate);
  PromptTemplate t = testing::default_template();
  t.input_format = "{input} {input}";
  EXPECT_EQ(code_of([&] { t.validate(); }), ErrorCode::InvalidTemplate);
}

TEST(Bank, ParseAndCategories) {
  const ExampleBank bank = load_bank(std::filesystem::path(HSD_DATA_DIR) / "example_bank.jsonl");
  EXPECT_GE(bank.size(), 10u);
  EXPECT_EQ(code_of([] { parse_bank("{\"biased\": \"x\"}\n"); }), ErrorCode::MalformedRecord);
  EXPECT_EQ(code_of([] { parse_bank("nope\n"); }), ErrorCode::MalformedRecord);
  EXPECT_EQ(small_bank().categories(), (std::vector<std::string>{"x", "y", "", "z"}));
}

TEST(Bank, SelectionIsPrefixMonotoneAndDistinct) {
  const ExampleBank bank = small_bank();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto full = bank.select(bank.size(), seed);
    std::set<std::size_t> distinct(full.begin(), full.end());
    EXPECT_EQ(distinct.size(), bank.size());
    for (std::size_t k = 0; k <= bank.size(); ++k) {
      const auto part = bank.select(k, seed);
      EXPECT_TRUE(std::equal(part.begin(), part.end(), full.begin()));
    }
  }
}

TEST(Bank, SelectionCoversCategoriesFirst) {
  const ExampleBank bank = small_bank();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::set<std::string> cats;
    for (auto i : bank.select(4, seed)) cats.insert(bank.examples()[i].category.value_or(""));
    EXPECT_EQ(cats.size(), 4u);
  }
}

TEST(Bank, NotEnoughExamples) {
  EXPECT_EQ(code_of([] { small_bank().select(7, 0); }), ErrorCode::NotEnoughExamples);
}

TEST(BuildPrompt, ZeroShotExactString) {
  EXPECT_EQ(build_prompt(testing::default_template(), ExampleBank{}, 0, "you are scum", 0),
            "Rewrite the following comment to remove hateful or biased language.\n\n"
            "Biased: you are scum\nUnbiased:");
}

TEST(BuildPrompt, TwoShotLayout) {
  const ExampleBank bank({{"b0", "u0", std::nullopt}, {"b1", "u1", std::nullopt}});
  EXPECT_EQ(build_prompt(testing::default_template(), bank, 2, "in", 0),
            "Rewrite the following comment to remove hateful or biased language.\n\n"
            "Biased: b0\nUnbiased: u0\n\nBiased: b1\nUnbiased: u1\n\nBiased: in\nUnbiased:");
}

TEST(BuildPrompt, PlaceholderTextInInputIsLiteral) {
  const std::string p = build_prompt(testing::default_template(), ExampleBank{}, 0, "say {input}", 0);
  EXPECT_NE(p.find("Biased: say {input}\n"), std::string::npos);
}

TEST(BuildPrompt, ErrorOrder) {
  // k is checked before the input text.
  EXPECT_EQ(code_of([] { build_prompt(testing::default_template(), small_bank(), 99, "", 0); }),
            ErrorCode::NotEnoughExamples);
  EXPECT_EQ(code_of([] { build_prompt(testing::default_template(), small_bank(), 1, "  ", 0); }),
            ErrorCode::EmptyInput);
}

TEST(BuildPrompt, Deterministic) {
  const auto a = build_prompt(testing::default_template(), small_bank(), 5, "hello", 42);
  const auto b = build_prompt(testing::default_template(), small_bank(), 5, "hello", 42);
  EXPECT_EQ(a, b);
}

double frequency_of_zero(std::vector<double> logits, double t, std::uint64_t seed, int n) {
  Rng rng(seed);
  int zeros = 0;
  for (int i = 0; i < n; ++i) zeros += temperature_sample(logits, t, rng) == 0;
  return static_cast<double>(zeros) / n;
}

TEST(TemperatureSample, Frequencies) {
  EXPECT_NEAR(frequency_of_zero({0, 0}, 1.0, 1, 100000), 0.5, 0.01);
  EXPECT_GE(frequency_of_zero({10, 0}, 0.1, 2, 100000), 0.999);
  EXPECT_NEAR(frequency_of_zero({1, 0}, 1.0, 3, 100000), 1.0 / (1.0 + std::exp(-1.0)), 0.01);
}

TEST(TemperatureSample, NonFiniteLogitsNeverDrawn) {
  Rng rng(4);
  const double ninf = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(temperature_sample(std::vector<double>{ninf, 0.0, ninf}, 0.5, rng), 1u);
  }
  const std::vector<double> weights = {0.0, 2.0, 0.0};
  EXPECT_EQ(temperature_sample_weights(weights, 1.0, rng), 1u);
}

TEST(TemperatureSample, Degenerate) {
  Rng rng(0);
  const double ninf = -std::numeric_limits<double>::infinity();
  EXPECT_EQ(code_of([&] { temperature_sample(std::vector<double>{ninf, ninf}, 1.0, rng); }),
            ErrorCode::DegenerateDistribution);
  EXPECT_EQ(code_of([&] { temperature_sample(std::vector<double>{}, 1.0, rng); }),
            ErrorCode::DegenerateDistribution);
  EXPECT_EQ(code_of([&] { temperature_sample(std::vector<double>{1.0}, 0.0, rng); }),
            ErrorCode::DegenerateDistribution);
}

TEST(GenerationConfig, TemperatureRange) {
  GenerationConfig c;
  c.temperature = 1.5;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidConfig);
  c.allow_out_of_range_temperature = true;
  EXPECT_NO_THROW(c.validate());
  c.temperature = 0.0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidConfig);
}

TEST(Generate, RetriesServerErrorsThenSucceeds) {
  ScriptedBackend backend({ScriptedBackend::status(500), ScriptedBackend::status(503),
                           ScriptedBackend::reply("ok")});
  const Generation g = generate(backend, "p", fast_config());
  EXPECT_EQ(g.text, "ok");
  EXPECT_EQ(g.attempts, 3u);
}

TEST(Generate, RetriesTimeoutsAnd429) {
  ScriptedBackend backend({ScriptedBackend::timeout(), ScriptedBackend::status(429),
                           ScriptedBackend::reply("ok")});
  EXPECT_EQ(generate(backend, "p", fast_config()).attempts, 3u);
}

TEST(Generate, GivesUpAfterMaxRetries) {
  ScriptedBackend backend({ScriptedBackend::status(500)});
  EXPECT_EQ(code_of([&] { generate(backend, "p", fast_config()); }), ErrorCode::BackendError);
  EXPECT_EQ(backend.calls(), 3);
}

TEST(Generate, ClientErrorsAndEmptyAreNotRetried) {
  ScriptedBackend bad_request({ScriptedBackend::status(400)});
  EXPECT_EQ(code_of([&] { generate(bad_request, "p", fast_config()); }), ErrorCode::BackendError);
  EXPECT_EQ(bad_request.calls(), 1);
  ScriptedBackend empty({ScriptedBackend::reply("")});
  EXPECT_EQ(code_of([&] { generate(empty, "p", fast_config()); }), ErrorCode::EmptyGeneration);
  EXPECT_EQ(empty.calls(), 1);
}

TEST(Generate, BackoffBounded) {
  // Full jitter: total sleep over two retries is at most base + 2 * base.
  GenerationConfig c;
  c.backoff_base_ms = 20;
  ScriptedBackend backend({ScriptedBackend::status(502), ScriptedBackend::status(502),
                           ScriptedBackend::reply("ok")});
  const auto start = std::chrono::steady_clock::now();
  generate(backend, "p", c);
  const auto elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_LT(elapsed, std::chrono::milliseconds(60 + 200));
}

TEST(MockRewriter, RedactsLexiconTerms) {
  MockRewriter mock(default_mock_lexicon(), testing::default_template());
  EXPECT_EQ(mock.redact("You IDIOTS, stay away!"), "You [redacted], stay away!");
  EXPECT_EQ(mock.redact("nothing here"), "nothing here");
  EXPECT_EQ(mock.redact("\"scum\"  and\tvermin."), "\"[redacted]\"  and\t[redacted].");
}

TEST(MockRewriter, ExtractsInputFromPrompt) {
  MockRewriter mock(default_mock_lexicon(), testing::default_template());
  const std::string prompt = build_prompt(testing::default_template(), small_bank(), 3, "the scum again", 1);
  EXPECT_EQ(mock.complete(prompt, {}), "the [redacted] again");
  EXPECT_EQ(mock.call_count(), 1u);
}

TEST(Debias, MockEndToEnd) {
  MockRewriter mock(default_mock_lexicon(), testing::default_template());
  const DebiasResult r = debias("they are vermin", testing::default_template(), small_bank(), 2, {}, mock);
  EXPECT_EQ(r.original, "they are vermin");
  EXPECT_EQ(r.rewritten, "they are [redacted]");
  EXPECT_EQ(r.k_used, 2u);
  EXPECT_EQ(r.backend_id, "mock");
  EXPECT_EQ(r.attempts, 1u);
  EXPECT_EQ(r.prompt_rendered, build_prompt(testing::default_template(), small_bank(), 2, "they are vermin", 0));
}

TEST(Debias, StopSequenceAndTrim) {
  ScriptedBackend backend({ScriptedBackend::reply("  \n rewritten text \nBiased: more")});
  const DebiasResult r = debias("x", testing::default_template(), ExampleBank{}, 0, fast_config(), backend);
  EXPECT_EQ(r.rewritten, "rewritten text");
  ScriptedBackend only_stop({ScriptedBackend::reply("   \n")});
  EXPECT_EQ(code_of([&] { debias("x", testing::default_template(), ExampleBank{}, 0, fast_config(), only_stop); }),
            ErrorCode::EmptyGeneration);
}

}  // namespace
}  // namespace hsd
