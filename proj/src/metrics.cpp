#include "hsd/metrics.hpp"

#include <json.hpp>

#include "hsd/error.hpp"

namespace hsd {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::ordered_json nullable(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> fp_rate(std::span<const Label> truths, std::span<const Label> decided) {
  if (truths.empty() || decided.size() != truths.size()) return std::nullopt;
  std::size_t nonhate = 0;
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] != Label::NoHate) continue;
    ++nonhate;
    if (decided[i] == Label::Hate) ++flagged;
  }
  if (nonhate == 0) return std::nullopt;
  return ratio(flagged, nonhate);
}

}  // namespace

ConfusionMatrix confusion(std::span<const Label> predictions, std::span<const Label> truths) {
  if (predictions.size() != truths.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "confusion: " + std::to_string(predictions.size()) + " predictions vs " +
                    std::to_string(truths.size()) + " truths");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const bool predicted_hate = predictions[i] == Label::Hate;
    const bool is_hate = truths[i] == Label::Hate;
    if (predicted_hate && is_hate) ++cm.tp;
    else if (predicted_hate) ++cm.fp;
    else if (is_hate) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

EvalReport eval_report(const ConfusionMatrix& cm) {
  EvalReport r;
  r.counts = cm;
  r.precision = ratio(cm.tp, cm.tp + cm.fp);
  r.recall = ratio(cm.tp, cm.tp + cm.fn);
  r.f1 = (r.precision + r.recall) == 0.0
             ? 0.0
             : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  r.accuracy = ratio(cm.tp + cm.tn, cm.total());
  r.fpr = ratio(cm.fp, cm.fp + cm.tn);
  r.fnr = ratio(cm.fn, cm.fn + cm.tp);
  return r;
}

std::optional<double> mean_score(std::span<const double> scores) {
  if (scores.empty()) return std::nullopt;
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

std::optional<double> bias_score(const ClassifierModel& model, std::span<const std::string> texts,
                                 Exec exec) {
  if (texts.empty()) return std::nullopt;
  const auto results = predict_all(model, texts, 0.5, exec);
  std::vector<double> scores;
  scores.reserve(results.size());
  for (const auto& c : results) scores.push_back(c.p_hate);
  return mean_score(scores);
}

double bias_reduction(double pre, double post) { return pre - post; }

BiasReport make_bias_report(std::span<const double> pre, std::span<const double> post,
                            std::span<const Label> truths, std::span<const Label> pre_labels,
                            std::span<const Label> post_labels) {
  if (!post.empty() && post.size() != pre.size()) {
    throw Error(ErrorCode::LengthMismatch, "pre and post score lists differ in length");
  }
  BiasReport report;
  report.n = pre.size();
  report.mean_pre = mean_score(pre);
  report.mean_post = mean_score(post);
  if (report.mean_pre && report.mean_post) {
    report.reduction = bias_reduction(*report.mean_pre, *report.mean_post);
  }
  report.fp_rate_on_nonhate_pre = fp_rate(truths, pre_labels);
  report.fp_rate_on_nonhate_post = fp_rate(truths, post_labels);
  return report;
}

std::string report_json(const EvalReport& eval, const BiasReport& bias) {
  nlohmann::ordered_json out;
  out["counts"] = {{"tp", eval.counts.tp}, {"fp", eval.counts.fp}, {"tn", eval.counts.tn},
                   {"fn", eval.counts.fn}};
  out["accuracy"] = eval.accuracy;
  out["precision"] = eval.precision;
  out["recall"] = eval.recall;
  out["f1"] = eval.f1;
  out["fpr"] = eval.fpr;
  out["fnr"] = eval.fnr;
  nlohmann::ordered_json b;
  b["n"] = bias.n;
  b["pre"] = nullable(bias.mean_pre);
  b["post"] = nullable(bias.mean_post);
  b["reduction"] = nullable(bias.reduction);
  b["fp_rate_on_nonhate_pre"] = nullable(bias.fp_rate_on_nonhate_pre);
  b["fp_rate_on_nonhate_post"] = nullable(bias.fp_rate_on_nonhate_post);
  out["bias"] = std::move(b);
  return out.dump(2);
}

std::pair<EvalReport, BiasReport> evaluate(const ClassifierModel& model, const Corpus& data,
                                           double threshold) {
  std::vector<std::string> texts;
  std::vector<Label> truths;
  texts.reserve(data.size());
  truths.reserve(data.size());
  for (const auto& ex : data.examples()) {
    texts.push_back(ex.text);
    truths.push_back(ex.label);
  }
  const auto results = predict_all(model, texts, threshold);
  std::vector<Label> predicted;
  std::vector<double> scores;
  for (const auto& c : results) {
    predicted.push_back(c.label);
    scores.push_back(c.p_hate);
  }
  const EvalReport eval = eval_report(confusion(predicted, truths));
  const BiasReport bias = make_bias_report(scores, {}, truths, predicted, {});
  return {eval, bias};
}

}  // namespace hsd
