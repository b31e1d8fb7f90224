#include "hsd/pipeline.hpp"

#include <cstdint>

#include <json.hpp>

#include "hsd/error.hpp"
#include "hsd/features.hpp"

namespace hsd {

void PipelineConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "threshold must be strictly inside (0, 1)");
  }
  if (max_concurrency < 1) throw Error(ErrorCode::InvalidConfig, "max_concurrency must be >= 1");
  gen_config.validate();
}

PipelineOutcome process(std::string_view text, const ClassifierModel& model,
                        const DebiasContext& ctx, const PipelineConfig& config) {
  if (utf8::trim(text).empty()) throw Error(ErrorCode::EmptyInput, "input text is empty");

  PipelineOutcome out;
  out.input = std::string(text);
  out.pre = predict(model, text, config.threshold);
  out.final_text = out.input;
  if (out.pre.p_hate < config.threshold) return out;

  try {
    out.rewrite = debias(text, ctx, config.k, config.gen_config);
  } catch (const Error& e) {
    out.warning = "debias failed: " + std::string(to_string(e.code())) + ": " + e.what();
    if (config.fail_closed) out.final_text.clear();
    return out;
  }
  out.final_text = out.rewrite->rewritten;
  if (config.reclassify) out.post = predict(model, out.rewrite->rewritten, config.threshold);
  return out;
}

BatchResult batch_process(std::span<const BatchItem> items, const ClassifierModel& model,
                          const DebiasContext& ctx, const PipelineConfig& config) {
  config.validate();
  BatchResult result;
  result.outcomes.resize(items.size());

  const auto n = static_cast<std::int64_t>(items.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(config.max_concurrency)
  for (std::int64_t i = 0; i < n; ++i) {
    auto& slot = result.outcomes[static_cast<std::size_t>(i)];
    const std::string& text = items[static_cast<std::size_t>(i)].text;
    try {
      slot = process(text, model, ctx, config);
    } catch (const std::exception& e) {
      slot = PipelineOutcome{};
      slot.input = text;
      slot.pre = predict(model, text, config.threshold);
      slot.final_text = text;
      slot.warning = std::string("item failed: ") + e.what();
    }
  }

  std::vector<double> pre;
  std::vector<double> post;
  std::vector<Label> pre_labels;
  std::vector<Label> post_labels;
  std::vector<Label> truths;
  bool post_known = true;
  bool all_truths = !items.empty();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& o = result.outcomes[i];
    pre.push_back(o.pre.p_hate);
    pre_labels.push_back(o.pre.label);
    if (o.post) {
      post.push_back(o.post->p_hate);
      post_labels.push_back(o.post->label);
    } else {
      if (o.rewrite) post_known = false;
      post.push_back(o.pre.p_hate);
      post_labels.push_back(o.pre.label);
    }
    if (items[i].truth) {
      truths.push_back(*items[i].truth);
    } else {
      all_truths = false;
    }
  }
  if (!all_truths) truths.clear();
  if (!post_known) {
    post.clear();
    post_labels.clear();
  }
  result.report = make_bias_report(pre, post, truths, pre_labels, post_labels);
  return result;
}

BatchResult batch_process(const Corpus& corpus, const ClassifierModel& model,
                          const DebiasContext& ctx, const PipelineConfig& config) {
  std::vector<BatchItem> items;
  items.reserve(corpus.size());
  for (const auto& ex : corpus.examples()) items.push_back({ex.text, ex.label});
  return batch_process(items, model, ctx, config);
}

std::string outcome_to_json(const PipelineOutcome& outcome) {
  nlohmann::ordered_json j;
  j["input"] = outcome.input;
  j["p_hate_pre"] = outcome.pre.p_hate;
  j["rewritten"] = outcome.rewrite ? nlohmann::ordered_json(outcome.rewrite->rewritten)
                                   : nlohmann::ordered_json(nullptr);
  j["p_hate_post"] =
      outcome.post ? nlohmann::ordered_json(outcome.post->p_hate) : nlohmann::ordered_json(nullptr);
  j["final_text"] = outcome.final_text;
  j["warning"] =
      outcome.warning ? nlohmann::ordered_json(*outcome.warning) : nlohmann::ordered_json(nullptr);
  return j.dump();
}

}  // namespace hsd
