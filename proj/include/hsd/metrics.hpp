#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hsd/classifier.hpp"
#include "hsd/corpus.hpp"

namespace hsd {

/// HATE is the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Metrics with a zero denominator are reported as 0.
struct EvalReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
  ConfusionMatrix counts;
};

/// Mean per-text hate probability before and after debiasing. The
/// fp_rate_on_nonhate fields are the share of truly non-hateful texts
/// classified as HATE, available when ground truth is known.
struct BiasReport {
  std::size_t n = 0;
  std::optional<double> mean_pre;
  std::optional<double> mean_post;
  std::optional<double> reduction;
  std::optional<double> fp_rate_on_nonhate_pre;
  std::optional<double> fp_rate_on_nonhate_post;
};

/// Throws LengthMismatch.
ConfusionMatrix confusion(std::span<const Label> predictions, std::span<const Label> truths);

EvalReport eval_report(const ConfusionMatrix& cm);

/// Mean p_hate over the texts (fixed-order summation); nullopt when empty.
std::optional<double> bias_score(const ClassifierModel& model, std::span<const std::string> texts,
                                 Exec exec = Exec::Parallel);

/// Mean of already computed scores; nullopt when empty.
std::optional<double> mean_score(std::span<const double> scores);

/// pre - post. Negative when measured bias went up.
double bias_reduction(double pre, double post);

/// Builds a report from per-item scores. `post` may be empty (no post
/// stage), otherwise it must match `pre` in length. Truth labels and
/// pre/post decisions are optional and only feed the fp_rate columns.
BiasReport make_bias_report(std::span<const double> pre, std::span<const double> post,
                            std::span<const Label> truths = {},
                            std::span<const Label> pre_labels = {},
                            std::span<const Label> post_labels = {});

/// {"counts": {...}, "accuracy", "precision", "recall", "f1", "fpr", "fnr",
///  "bias": {"n", "pre", "post", "reduction", "fp_rate_on_nonhate_pre",
///           "fp_rate_on_nonhate_post"}}
std::string report_json(const EvalReport& eval, const BiasReport& bias);

/// Evaluates `model` on a labeled corpus: predictions at `threshold`
/// against truths, plus the pre-debias bias section.
std::pair<EvalReport, BiasReport> evaluate(const ClassifierModel& model, const Corpus& data,
                                           double threshold = 0.5);

}  // namespace hsd
