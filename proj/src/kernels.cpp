#include "hsd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hsd::kernels {

namespace {

constexpr double kClamp = 1e-12;

// Below this many items the fork/join cost outweighs the work.
constexpr std::int64_t kMinParallelItems = 64;
constexpr std::int64_t kMinParallelElements = 1 << 14;

struct LogitDelta {
  double hate = 0.0;
  double nohate = 0.0;
  double loss = 0.0;
};

LogitDelta logit_delta(const HeadParams& params, const Sample& s) noexcept {
  const auto z = logits(params, *s.features);
  const Probabilities p = softmax2(z[0], z[1]);
  const double y_hate = s.label == Label::Hate ? 1.0 : 0.0;
  return {p.hate - y_hate, p.nohate - (1.0 - y_hate), bce(p.hate, s.label)};
}

void scatter(std::span<const Sample> batch, std::span<const LogitDelta> deltas, HeadParams& grad) {
  const double scale = 1.0 / static_cast<double>(batch.size());
  auto hate_row = grad.row(Label::Hate);
  auto nohate_row = grad.row(Label::NoHate);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double dh = deltas[i].hate * scale;
    const double dn = deltas[i].nohate * scale;
    for (const auto& [index, x] : batch[i].features->entries) {
      hate_row[index] += dh * x;
      nohate_row[index] += dn * x;
    }
    grad.bias[0] += dh;
    grad.bias[1] += dn;
  }
}

inline void adam_element(double& theta, double g, double& m, double& v, const AdamCoefficients& c,
                         double decay_factor) noexcept {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g * g;
  const double m_hat = m / c.bias_correction1;
  const double v_hat = v / c.bias_correction2;
  theta -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.eps);
  if (decay_factor != 1.0) theta *= decay_factor;
}

}  // namespace

Probabilities softmax2(double z_hate, double z_nohate) noexcept {
  const double top = std::max(z_hate, z_nohate);
  const double eh = std::exp(z_hate - top);
  const double en = std::exp(z_nohate - top);
  const double sum = eh + en;
  return {eh / sum, en / sum};
}

std::array<double, 2> logits(const HeadParams& params, const FeatureVector& x) noexcept {
  const double* hate = params.weights.data();
  const double* nohate = hate + params.dimension;
  double zh = params.bias[0];
  double zn = params.bias[1];
  for (const auto& [index, value] : x.entries) {
    zh += hate[index] * value;
    zn += nohate[index] * value;
  }
  return {zh, zn};
}

double bce(double p_hate, Label label) noexcept {
  const double p = std::clamp(p_hate, kClamp, 1.0 - kClamp);
  return label == Label::Hate ? -std::log(p) : -std::log(1.0 - p);
}

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

double batch_gradient(const HeadParams& params, std::span<const Sample> batch, HeadParams& grad) {
  grad.dimension = params.dimension;
  grad.weights.assign(params.weights.size(), 0.0);
  grad.bias = {0.0, 0.0};
  std::vector<LogitDelta> deltas(batch.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    deltas[i] = logit_delta(params, batch[i]);
    loss += deltas[i].loss;
  }
  scatter(batch, deltas, grad);
  return loss;
}

void adam_update(std::span<double> theta, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, const AdamCoefficients& c, double decay_factor) noexcept {
  for (std::size_t i = 0; i < theta.size(); ++i) {
    adam_element(theta[i], grad[i], m[i], v[i], c, decay_factor);
  }
}

void hate_probabilities(const HeadParams& params, std::span<const FeatureVector> xs,
                        std::span<double> out) noexcept {
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto z = logits(params, xs[i]);
    out[i] = softmax2(z[0], z[1]).hate;
  }
}

}  // namespace serial

namespace parallel {

double batch_gradient(const HeadParams& params, std::span<const Sample> batch, HeadParams& grad) {
  grad.dimension = params.dimension;
  const auto total = static_cast<std::int64_t>(params.weights.size());
  grad.weights.resize(params.weights.size());
  double* gw = grad.weights.data();
#pragma omp parallel for schedule(static) if (total >= kMinParallelElements)
  for (std::int64_t i = 0; i < total; ++i) gw[i] = 0.0;
  grad.bias = {0.0, 0.0};

  const auto n = static_cast<std::int64_t>(batch.size());
  std::vector<LogitDelta> deltas(batch.size());
#pragma omp parallel for schedule(static) if (n >= kMinParallelItems)
  for (std::int64_t i = 0; i < n; ++i) deltas[i] = logit_delta(params, batch[i]);

  // Scatter and loss sum stay in sample order so results match serial.
  double loss = 0.0;
  for (const auto& d : deltas) loss += d.loss;
  scatter(batch, deltas, grad);
  return loss;
}

void adam_update(std::span<double> theta, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, const AdamCoefficients& c, double decay_factor) noexcept {
  const auto n = static_cast<std::int64_t>(theta.size());
  double* t = theta.data();
  const double* g = grad.data();
  double* mp = m.data();
  double* vp = v.data();
#pragma omp parallel for schedule(static) if (n >= kMinParallelElements)
  for (std::int64_t i = 0; i < n; ++i) adam_element(t[i], g[i], mp[i], vp[i], c, decay_factor);
}

void hate_probabilities(const HeadParams& params, std::span<const FeatureVector> xs,
                        std::span<double> out) noexcept {
  const auto n = static_cast<std::int64_t>(xs.size());
#pragma omp parallel for schedule(static) if (n >= kMinParallelItems)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto z = logits(params, xs[i]);
    out[i] = softmax2(z[0], z[1]).hate;
  }
}

}  // namespace parallel

}  // namespace hsd::kernels
