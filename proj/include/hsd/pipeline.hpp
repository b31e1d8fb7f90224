#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hsd/classifier.hpp"
#include "hsd/debiaser.hpp"
#include "hsd/metrics.hpp"

namespace hsd {

struct PipelineConfig {
  double threshold = 0.5;  // texts with p_hate >= threshold are rewritten
  std::size_t k = 5;
  GenerationConfig gen_config;
  bool reclassify = true;
  /// On rewrite failure, emit an empty final_text instead of the input.
  bool fail_closed = false;
  /// Upper bound on concurrent rewrites in batch_process.
  int max_concurrency = 4;

  void validate() const;
};

struct PipelineOutcome {
  std::string input;
  Classification pre;
  std::optional<DebiasResult> rewrite;
  std::optional<Classification> post;
  std::string final_text;
  std::optional<std::string> warning;
};

/// Classify, and rewrite when p_hate >= threshold. A failed rewrite does
/// not throw: the outcome carries a warning and final_text falls back to
/// the input (or "" when fail_closed). Throws EmptyInput for blank text.
PipelineOutcome process(std::string_view text, const ClassifierModel& model,
                        const DebiasContext& ctx, const PipelineConfig& config);

struct BatchItem {
  std::string text;
  std::optional<Label> truth;
};

struct BatchResult {
  std::vector<PipelineOutcome> outcomes;  // same order as the input
  BiasReport report;
};

/// Runs `process` over every item, up to max_concurrency at a time. Item
/// failures become warnings on that item's outcome. Per-item post scores
/// are the reclassified rewrite when there is one and the pre score
/// otherwise; mean_post is absent if a rewrite exists but reclassify is off.
BatchResult batch_process(std::span<const BatchItem> items, const ClassifierModel& model,
                          const DebiasContext& ctx, const PipelineConfig& config);

BatchResult batch_process(const Corpus& corpus, const ClassifierModel& model,
                          const DebiasContext& ctx, const PipelineConfig& config);

/// One JSONL record: input, p_hate_pre, rewritten, p_hate_post,
/// final_text, warning (nullable fields as JSON null).
std::string outcome_to_json(const PipelineOutcome& outcome);

}  // namespace hsd
