#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "indistill/autograd.hpp"

namespace indistill {

enum class LossKind { kMse, kKl, kPkt, kCrossEntropy };

std::string to_string(LossKind kind);

struct LossValue {
  double value = 0.0;
  LossKind kind = LossKind::kMse;
  std::optional<std::size_t> layer;
};

// Stabilizer inside the PKT log ratio.
inline constexpr double kPktEpsilon = 1e-7;

// Distillation targets (teacher tensors) are constants; gradients flow into
// the student argument only.

// Sum of squared differences over all non-batch axes, averaged over axis 0.
// Mismatched shapes raise AlignmentError.
template <typename Real>
Var<Real> mse_feature_loss(const Tensor<Real>& target, const Var<Real>& student);

// KL(softmax(u/T) || softmax(v/T)) * T^2, averaged over rows.
template <typename Real>
Var<Real> kl_distill_loss(const Tensor<Real>& teacher_logits, const Var<Real>& student_logits,
                          Real temperature);

// Probabilistic knowledge transfer divergence between the cosine-kernel
// conditional distributions of two feature batches [n, d_t] and [n, d_s]:
//   K(a, b) = (cos(a, b) + 1) / 2
//   p_{j|i} = K(x_i, x_j) / sum_{m != i} K(x_i, x_m)        (diagonal excluded)
//   loss    = 1/n * sum_i sum_{j != i} pt_{j|i} log((pt_{j|i} + eps) / (ps_{j|i} + eps))
template <typename Real>
Var<Real> pkt_loss(const Tensor<Real>& teacher_features, const Var<Real>& student_features);

// Mean negative log-likelihood of integer labels under softmax(logits).
template <typename Real>
Var<Real> cross_entropy(const Var<Real>& logits, std::span<const int> labels);

// Value-only forms.
template <typename Real>
LossValue mse_feature_loss(const Tensor<Real>& target, const Tensor<Real>& student,
                           std::optional<std::size_t> layer = std::nullopt);
template <typename Real>
LossValue kl_distill_loss(const Tensor<Real>& teacher_logits, const Tensor<Real>& student_logits,
                          Real temperature);
template <typename Real>
LossValue pkt_loss(const Tensor<Real>& teacher_features, const Tensor<Real>& student_features);
template <typename Real>
LossValue cross_entropy(const Tensor<Real>& logits, std::span<const int> labels);

}  // namespace indistill
