#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hsd/corpus.hpp"
#include "hsd/features.hpp"
#include "hsd/kernels.hpp"

namespace hsd {

/// Optimizer and loop settings. Defaults: 3 epochs, Adam with lr 5e-5,
/// decoupled weight decay 0.5, eps 1e-8, batches of 16.
struct TrainConfig {
  std::uint32_t epochs = 3;
  double learning_rate = 5e-5;
  double weight_decay = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint32_t batch_size = 16;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct ClassifierModel {
  FeatureConfig feature_config;
  HeadParams params;
  std::int64_t trained_at = 0;  // Unix seconds; 0 when not stamped
  TrainConfig train_config;

  /// Zero weights and bias over the config's feature space.
  static ClassifierModel zeros(FeatureConfig feature_config, TrainConfig train_config = {});

  friend bool operator==(const ClassifierModel&, const ClassifierModel&) = default;
};

struct Classification {
  Label label = Label::NoHate;
  double p_hate = 0.0;
};

/// Softmax over the two logits. Throws DimensionMismatch for an index
/// outside the model's feature space.
Probabilities forward(const ClassifierModel& model, const FeatureVector& features);

/// -[y ln p + (1-y) ln(1-p)] with y = 1 for HATE and p clamped to
/// [1e-12, 1 - 1e-12].
double bce_loss(double p_hate, Label label);

struct LabeledFeatures {
  FeatureVector features;
  Label label = Label::NoHate;
};

/// Gradient of the mean BCE over the batch. Throws EmptyBatch.
HeadParams batch_gradient(const ClassifierModel& model, std::span<const LabeledFeatures> batch,
                          Exec exec = Exec::Parallel);

struct AdamState {
  HeadParams m;
  HeadParams v;
  std::uint64_t t = 0;

  static AdamState fresh(std::size_t dimension) {
    return {HeadParams::zeros(dimension), HeadParams::zeros(dimension), 0};
  }
};

/// Adam step on every parameter, then decoupled weight decay on the
/// weights only (bias is not decayed).
void adam_step(HeadParams& params, const HeadParams& grads, AdamState& state,
               const TrainConfig& config, Exec exec = Exec::Parallel);

struct EpochProgress {
  std::uint32_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
};

using ProgressSink = std::function<void(const EpochProgress&)>;

/// Mini-batch Adam training from a zero-initialized head. The sink is
/// called once per epoch, on the calling thread.
ClassifierModel train(const Corpus& corpus, const FeatureConfig& feature_config,
                      const TrainConfig& config, const ProgressSink& progress = {},
                      Exec exec = Exec::Parallel);

/// tokenize -> featurize -> forward. HATE when p_hate >= threshold.
Classification predict(const ClassifierModel& model, std::string_view text, double threshold = 0.5);

/// Same as predict for each text; result order matches input order.
std::vector<Classification> predict_all(const ClassifierModel& model,
                                        std::span<const std::string> texts,
                                        double threshold = 0.5, Exec exec = Exec::Parallel);

inline constexpr std::uint32_t kModelFormatVersion = 1;

std::string encode_model(const ClassifierModel& model);
ClassifierModel decode_model(std::string_view bytes);

void save_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_model(const std::filesystem::path& path);

}  // namespace hsd
