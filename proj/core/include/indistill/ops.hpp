#pragma once

#include <cstddef>

#include "indistill/autograd.hpp"
#include "indistill/tensor.hpp"

namespace indistill {

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// input [N, c_in, H, W], kernel [c_in, c_out, k, k], bias [c_out]
// -> [N, c_out, (H + 2p - k)/s + 1, (W + 2p - k)/s + 1]
template <typename Real>
Var<Real> conv2d(const Var<Real>& input, const Var<Real>& kernel, const Var<Real>& bias,
                 Conv2dOptions options = {});

enum class BatchNormMode { kTrain, kEval };

template <typename Real>
struct RunningStats {
  Tensor<Real> mean;
  Tensor<Real> var;

  RunningStats() = default;
  explicit RunningStats(std::size_t channels)
      : mean(Shape{channels}, Real(0)), var(Shape{channels}, Real(1)) {}
};

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

// Per-channel normalization of [N, C, H, W]. Train mode normalizes with the
// biased batch variance and folds the unbiased variance into `stats`; eval mode
// normalizes with `stats` and leaves them untouched.
template <typename Real>
Var<Real> batchnorm2d(const Var<Real>& input, const Var<Real>& gamma, const Var<Real>& beta,
                      RunningStats<Real>& stats, BatchNormMode mode, BatchNormOptions options = {});

// input [N, n] or [n], weight [n, m], bias [m] -> [N, m] or [m]
template <typename Real>
Var<Real> dense(const Var<Real>& input, const Var<Real>& weight, const Var<Real>& bias);

template <typename Real>
Var<Real> relu(const Var<Real>& input);

// Windowed max over [N, C, H, W] (floor mode, no padding). The gradient goes
// to the first maximal element in row-major window order.
template <typename Real>
Var<Real> maxpool2d(const Var<Real>& input, std::size_t window, std::size_t stride);

// [N, ...] -> [N, prod(...)]
template <typename Real>
Var<Real> flatten(const Var<Real>& input);

// Softmax / log-softmax of logits / temperature along the last axis of a
// [C] or [N, C] tensor.
template <typename Real>
Var<Real> softmax(const Var<Real>& logits, Real temperature);

template <typename Real>
Var<Real> log_softmax(const Var<Real>& logits, Real temperature);

template <typename Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b);

template <typename Real>
Var<Real> mul(const Var<Real>& a, const Var<Real>& b);

template <typename Real>
Var<Real> scale(const Var<Real>& a, Real factor);

template <typename Real>
Var<Real> sum(const Var<Real>& a);

// sum(a * weights) with constant weights; reduces any op output to a scalar.
template <typename Real>
Var<Real> weighted_sum(const Var<Real>& a, const Tensor<Real>& weights);

// Value-level softmax with max subtraction, rows along the last axis.
template <typename Real>
Tensor<Real> softmax_with_temperature(const Tensor<Real>& logits, Real temperature);

}  // namespace indistill
