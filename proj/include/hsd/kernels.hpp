#pragma once

// Numeric inner loops of the classifier head.
//
// Every kernel exists twice: `serial` is the reference implementation used
// by tests, `parallel` splits the data-parallel part across OpenMP threads.
// The parallel versions keep every floating-point reduction in the serial
// order, so both produce bit-identical results and training stays
// reproducible regardless of thread count.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "hsd/corpus.hpp"
#include "hsd/features.hpp"

namespace hsd {

/// Dense parameters of the two-class head: weights are row-major 2 x
/// dimension (row 0 = HATE, row 1 = NOHATE). The same layout holds
/// gradients and Adam moments.
struct HeadParams {
  std::size_t dimension = 0;
  std::vector<double> weights;
  std::array<double, 2> bias{0.0, 0.0};

  static HeadParams zeros(std::size_t dimension) {
    return {dimension, std::vector<double>(2 * dimension, 0.0), {0.0, 0.0}};
  }

  std::span<double> row(Label label) {
    return std::span<double>(weights).subspan(index_of(label) * dimension, dimension);
  }
  std::span<const double> row(Label label) const {
    return std::span<const double>(weights).subspan(index_of(label) * dimension, dimension);
  }

  friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

struct Probabilities {
  double hate = 0.5;
  double nohate = 0.5;
};

struct Sample {
  const FeatureVector* features = nullptr;
  Label label = Label::NoHate;
};

struct AdamCoefficients {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double bias_correction1 = 1.0;  // 1 - beta1^t
  double bias_correction2 = 1.0;  // 1 - beta2^t
};

enum class Exec { Serial, Parallel };

namespace kernels {

/// Two-way softmax with max subtraction.
Probabilities softmax2(double z_hate, double z_nohate) noexcept;

/// Logits (z_hate, z_nohate). Caller guarantees indices < dimension.
std::array<double, 2> logits(const HeadParams& params, const FeatureVector& x) noexcept;

/// Clamped binary cross-entropy on the HATE probability.
double bce(double p_hate, Label label) noexcept;

namespace serial {

/// Overwrites `grad` with the mean softmax cross-entropy gradient over the
/// batch and returns the summed loss.
double batch_gradient(const HeadParams& params, std::span<const Sample> batch, HeadParams& grad);

/// One Adam update over a flat parameter block, followed by multiplying by
/// `decay_factor` (1 - lr * weight_decay for decoupled decay, 1 for none).
void adam_update(std::span<double> theta, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, const AdamCoefficients& c, double decay_factor) noexcept;

void hate_probabilities(const HeadParams& params, std::span<const FeatureVector> xs,
                        std::span<double> out) noexcept;

}  // namespace serial

namespace parallel {

double batch_gradient(const HeadParams& params, std::span<const Sample> batch, HeadParams& grad);

void adam_update(std::span<double> theta, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, const AdamCoefficients& c, double decay_factor) noexcept;

void hate_probabilities(const HeadParams& params, std::span<const FeatureVector> xs,
                        std::span<double> out) noexcept;

}  // namespace parallel

inline double batch_gradient(Exec exec, const HeadParams& params, std::span<const Sample> batch,
                             HeadParams& grad) {
  return exec == Exec::Serial ? serial::batch_gradient(params, batch, grad)
                              : parallel::batch_gradient(params, batch, grad);
}

inline void adam_update(Exec exec, std::span<double> theta, std::span<const double> grad,
                        std::span<double> m, std::span<double> v, const AdamCoefficients& c,
                        double decay_factor) noexcept {
  if (exec == Exec::Serial) {
    serial::adam_update(theta, grad, m, v, c, decay_factor);
  } else {
    parallel::adam_update(theta, grad, m, v, c, decay_factor);
  }
}

inline void hate_probabilities(Exec exec, const HeadParams& params,
                               std::span<const FeatureVector> xs, std::span<double> out) noexcept {
  if (exec == Exec::Serial) {
    serial::hate_probabilities(params, xs, out);
  } else {
    parallel::hate_probabilities(params, xs, out);
  }
}

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads() noexcept;

}  // namespace kernels
}  // namespace hsd
