// Serial reference vs OpenMP kernels on a default-sized head (2 x 2^18).

#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "hsd/classifier.hpp"
#include "hsd/kernels.hpp"
#include "hsd/rng.hpp"

namespace {

struct Fixture {
  hsd::FeatureConfig config;
  hsd::HeadParams params;
  std::vector<hsd::FeatureVector> features;
  std::vector<hsd::Sample> batch;

  explicit Fixture(std::size_t n_texts) : params(hsd::HeadParams::zeros(config.dimension)) {
    hsd::Rng rng(7);
    for (auto& w : params.weights) w = rng.uniform() - 0.5;
    const std::vector<std::string> words = {"you", "people", "are", "the", "worst", "best", "day",
                                            "scum", "nice", "go", "away", "home", "we", "they"};
    for (std::size_t i = 0; i < n_texts; ++i) {
      hsd::Tokens tokens;
      const auto len = 8 + rng.below(24);
      for (std::size_t j = 0; j < len; ++j) tokens.push_back(words[rng.below(words.size())]);
      features.push_back(hsd::featurize(tokens, config));
    }
    for (std::size_t i = 0; i < features.size(); ++i) {
      batch.push_back({&features[i], i % 2 == 0 ? hsd::Label::Hate : hsd::Label::NoHate});
    }
  }
};

void BM_BatchGradient(benchmark::State& state, hsd::Exec exec) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  hsd::HeadParams grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(hsd::kernels::batch_gradient(exec, f.params, f.batch, grad));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_AdamUpdate(benchmark::State& state, hsd::Exec exec) {
  Fixture f(1);
  hsd::HeadParams grad = f.params;
  hsd::AdamState adam = hsd::AdamState::fresh(f.config.dimension);
  hsd::AdamCoefficients c;
  c.bias_correction1 = 0.1;
  c.bias_correction2 = 0.001;
  for (auto _ : state) {
    hsd::kernels::adam_update(exec, f.params.weights, grad.weights, adam.m.weights, adam.v.weights, c, 0.99);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.params.weights.size()));
}

void BM_HateProbabilities(benchmark::State& state, hsd::Exec exec) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  std::vector<double> out(f.features.size());
  for (auto _ : state) {
    hsd::kernels::hate_probabilities(exec, f.params, f.features, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK_CAPTURE(BM_BatchGradient, serial, hsd::Exec::Serial)->Arg(16)->Arg(256);
BENCHMARK_CAPTURE(BM_BatchGradient, parallel, hsd::Exec::Parallel)->Arg(16)->Arg(256);
BENCHMARK_CAPTURE(BM_AdamUpdate, serial, hsd::Exec::Serial);
BENCHMARK_CAPTURE(BM_AdamUpdate, parallel, hsd::Exec::Parallel);
BENCHMARK_CAPTURE(BM_HateProbabilities, serial, hsd::Exec::Serial)->Arg(1024)->Arg(16384);
BENCHMARK_CAPTURE(BM_HateProbabilities, parallel, hsd::Exec::Parallel)->Arg(1024)->Arg(16384);

BENCHMARK_MAIN();
