#include "indistill/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "indistill/ops.hpp"

namespace indistill {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kMse: return "mse";
    case LossKind::kKl: return "kl";
    case LossKind::kPkt: return "pkt";
    case LossKind::kCrossEntropy: return "cross_entropy";
  }
  return "unknown";
}

template <typename Real>
Var<Real> mse_feature_loss(const Tensor<Real>& target, const Var<Real>& student) {
  const Tensor<Real>& s = student.value();
  if (s.shape() != target.shape()) {
    throw AlignmentError("feature loss: teacher map " + to_string(target.shape()) +
                         " does not match student map " + to_string(s.shape()) +
                         "; check the pruning rate against the model widths");
  }
  const std::size_t batch = s.rank() == 0 ? 1 : s.dim(0);
  Real acc = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Real d = s[i] - target[i];
    acc += d * d;
  }
  const std::size_t s_id = student.id();
  return student.tape().record(
      Tensor<Real>::scalar(acc / static_cast<Real>(batch)), {s_id},
      [=](Tape<Real>& tape, std::size_t self) {
        const Real g = tape.grad(self)[0] * Real(2) / static_cast<Real>(batch);
        const auto& sv = tape.value(s_id);
        auto ds = tape.grad(s_id).data();
        for (std::size_t i = 0; i < ds.size(); ++i) ds[i] += g * (sv[i] - target[i]);
      });
}

template <typename Real>
Var<Real> kl_distill_loss(const Tensor<Real>& teacher_logits, const Var<Real>& student_logits,
                          Real temperature) {
  const Tensor<Real>& v = student_logits.value();
  if (v.shape() != teacher_logits.shape() || v.rank() == 0) {
    throw DimensionError("kl_distill_loss: teacher logits " + to_string(teacher_logits.shape()) +
                         " vs student logits " + to_string(v.shape()));
  }
  Tape<Real> scratch;
  const Tensor<Real> log_qt = log_softmax(scratch.constant(teacher_logits), temperature).value();
  const Tensor<Real> log_qs = log_softmax(scratch.constant(v), temperature).value();
  const std::size_t classes = v.shape().back();
  const std::size_t rows = v.size() / classes;
  const Real t2 = temperature * temperature;
  Real acc = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Real qt = std::exp(log_qt[i]);
    if (qt > Real(0)) acc += qt * (log_qt[i] - log_qs[i]);
  }
  const std::size_t v_id = student_logits.id();
  return student_logits.tape().record(
      Tensor<Real>::scalar(acc * t2 / static_cast<Real>(rows)), {v_id},
      [=](Tape<Real>& tape, std::size_t self) {
        // d/dv_i = T / rows * (qs_i - qt_i)
        const Real g = tape.grad(self)[0] * temperature / static_cast<Real>(rows);
        auto dv = tape.grad(v_id).data();
        for (std::size_t i = 0; i < dv.size(); ++i)
          dv[i] += g * (std::exp(log_qs[i]) - std::exp(log_qt[i]));
      });
}

namespace {

// Row-normalized copy x_i / (|x_i| + eps) and the raw norms.
template <typename Real>
void normalize_rows(const Tensor<Real>& x, std::vector<Real>& unit, std::vector<Real>& norms) {
  const std::size_t n = x.dim(0), d = x.size() / n;
  unit.assign(x.size(), Real(0));
  norms.assign(n, Real(0));
  for (std::size_t i = 0; i < n; ++i) {
    Real sq = 0;
    for (std::size_t k = 0; k < d; ++k) sq += x[i * d + k] * x[i * d + k];
    norms[i] = std::sqrt(sq);
    const Real inv = Real(1) / (norms[i] + static_cast<Real>(kPktEpsilon));
    for (std::size_t k = 0; k < d; ++k) unit[i * d + k] = x[i * d + k] * inv;
  }
}

// Conditional probabilities p_{j|i} (n x n, zero diagonal) and row sums R_i.
template <typename Real>
void conditional_probs(const std::vector<Real>& unit, std::size_t n, std::size_t d,
                       std::vector<Real>& probs, std::vector<Real>& row_sums) {
  probs.assign(n * n, Real(0));
  row_sums.assign(n, Real(0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      Real dot = 0;
      for (std::size_t k = 0; k < d; ++k) dot += unit[i * d + k] * unit[j * d + k];
      probs[i * n + j] = (dot + Real(1)) / Real(2);
    }
    Real r = 0;
    for (std::size_t j = 0; j < n; ++j) r += probs[i * n + j];
    r = std::max(r, std::numeric_limits<Real>::min());
    row_sums[i] = r;
    for (std::size_t j = 0; j < n; ++j) probs[i * n + j] /= r;
  }
}

template <typename Real>
void check_pkt_inputs(const Tensor<Real>& t, const Tensor<Real>& s) {
  if (t.rank() != 2 || s.rank() != 2) {
    throw DimensionError("pkt_loss: features must be [n, d], got " + to_string(t.shape()) +
                         " and " + to_string(s.shape()));
  }
  if (t.dim(0) != s.dim(0)) {
    throw DimensionError("pkt_loss: batch sizes differ (" + std::to_string(t.dim(0)) + " vs " +
                         std::to_string(s.dim(0)) + ")");
  }
  if (t.dim(0) < 2) throw ParameterError("pkt_loss: needs a batch of at least 2 samples");
}

}  // namespace

template <typename Real>
Var<Real> pkt_loss(const Tensor<Real>& teacher_features, const Var<Real>& student_features) {
  const Tensor<Real>& xs = student_features.value();
  check_pkt_inputs(teacher_features, xs);
  const std::size_t n = xs.dim(0), dt = teacher_features.dim(1), ds = xs.dim(1);
  const Real eps = static_cast<Real>(kPktEpsilon);

  std::vector<Real> unit_t, norms_t, pt, rt;
  normalize_rows(teacher_features, unit_t, norms_t);
  conditional_probs(unit_t, n, dt, pt, rt);
  std::vector<Real> unit_s, norms_s, ps, rs;
  normalize_rows(xs, unit_s, norms_s);
  conditional_probs(unit_s, n, ds, ps, rs);

  Real acc = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const Real p = pt[i * n + j];
      acc += p * std::log((p + eps) / (ps[i * n + j] + eps));
    }

  const std::size_t s_id = student_features.id();
  return student_features.tape().record(
      Tensor<Real>::scalar(acc / static_cast<Real>(n)), {s_id},
      [=, pt = std::move(pt), ps = std::move(ps), rs = std::move(rs),
       unit_s = std::move(unit_s), norms_s = std::move(norms_s)](Tape<Real>& tape,
                                                                 std::size_t self) {
        const Real scale_g = tape.grad(self)[0] / static_cast<Real>(n);
        // dL/dps, then through the row normalization to dL/dK, then dL/dC = dL/dK / 2.
        std::vector<Real> dc(n * n, Real(0));
        for (std::size_t i = 0; i < n; ++i) {
          Real weighted = 0;
          for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const Real g = -scale_g * pt[i * n + j] / (ps[i * n + j] + eps);
            dc[i * n + j] = g;
            weighted += g * ps[i * n + j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            dc[i * n + j] = (dc[i * n + j] - weighted) / rs[i] / Real(2);
          }
        }
        auto dx = tape.grad(s_id).data();
        const auto& x = tape.value(s_id);
        std::vector<Real> du(ds);
        for (std::size_t i = 0; i < n; ++i) {
          std::fill(du.begin(), du.end(), Real(0));
          for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const Real w = dc[i * n + j] + dc[j * n + i];
            for (std::size_t k = 0; k < ds; ++k) du[k] += w * unit_s[j * ds + k];
          }
          const Real r = norms_s[i];
          const Real denom = r + eps;
          Real proj = 0;
          for (std::size_t k = 0; k < ds; ++k) proj += x[i * ds + k] * du[k];
          const Real radial = r > Real(0) ? proj / (r * denom * denom) : Real(0);
          for (std::size_t k = 0; k < ds; ++k)
            dx[i * ds + k] += du[k] / denom - x[i * ds + k] * radial;
        }
      });
}

template <typename Real>
Var<Real> cross_entropy(const Var<Real>& logits, std::span<const int> labels) {
  const Tensor<Real>& x = logits.value();
  if (x.rank() != 2 || x.dim(0) != labels.size()) {
    throw DimensionError("cross_entropy: logits " + to_string(x.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t rows = x.dim(0), classes = x.dim(1);
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ParameterError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                           std::to_string(classes) + ")");
    }
  }
  Tape<Real> scratch;
  const Tensor<Real> ls = log_softmax(scratch.constant(x), Real(1)).value();
  Real acc = 0;
  for (std::size_t r = 0; r < rows; ++r) acc -= ls[r * classes + labels[r]];
  std::vector<int> targets(labels.begin(), labels.end());
  const std::size_t x_id = logits.id();
  return logits.tape().record(
      Tensor<Real>::scalar(acc / static_cast<Real>(rows)), {x_id},
      [=, targets = std::move(targets)](Tape<Real>& tape, std::size_t self) {
        const Real g = tape.grad(self)[0] / static_cast<Real>(rows);
        auto dx = tape.grad(x_id).data();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < classes; ++c) {
            const Real p = std::exp(ls[r * classes + c]);
            dx[r * classes + c] += g * (p - (static_cast<int>(c) == targets[r] ? Real(1) : Real(0)));
          }
      });
}

template <typename Real>
LossValue mse_feature_loss(const Tensor<Real>& target, const Tensor<Real>& student,
                           std::optional<std::size_t> layer) {
  Tape<Real> tape;
  return {static_cast<double>(mse_feature_loss(target, tape.constant(student)).value().item()),
          LossKind::kMse, layer};
}

template <typename Real>
LossValue kl_distill_loss(const Tensor<Real>& teacher_logits, const Tensor<Real>& student_logits,
                          Real temperature) {
  Tape<Real> tape;
  return {static_cast<double>(
              kl_distill_loss(teacher_logits, tape.constant(student_logits), temperature)
                  .value()
                  .item()),
          LossKind::kKl, std::nullopt};
}

template <typename Real>
LossValue pkt_loss(const Tensor<Real>& teacher_features, const Tensor<Real>& student_features) {
  Tape<Real> tape;
  return {static_cast<double>(
              pkt_loss(teacher_features, tape.constant(student_features)).value().item()),
          LossKind::kPkt, std::nullopt};
}

template <typename Real>
LossValue cross_entropy(const Tensor<Real>& logits, std::span<const int> labels) {
  Tape<Real> tape;
  return {static_cast<double>(cross_entropy(tape.constant(logits), labels).value().item()),
          LossKind::kCrossEntropy, std::nullopt};
}

#define INDISTILL_INSTANTIATE_LOSSES(R)                                                     \
  template Var<R> mse_feature_loss(const Tensor<R>&, const Var<R>&);                        \
  template Var<R> kl_distill_loss(const Tensor<R>&, const Var<R>&, R);                      \
  template Var<R> pkt_loss(const Tensor<R>&, const Var<R>&);                                \
  template Var<R> cross_entropy(const Var<R>&, std::span<const int>);                       \
  template LossValue mse_feature_loss(const Tensor<R>&, const Tensor<R>&,                   \
                                      std::optional<std::size_t>);                          \
  template LossValue kl_distill_loss(const Tensor<R>&, const Tensor<R>&, R);                \
  template LossValue pkt_loss(const Tensor<R>&, const Tensor<R>&);                          \
  template LossValue cross_entropy(const Tensor<R>&, std::span<const int>);

INDISTILL_INSTANTIATE_LOSSES(float)
INDISTILL_INSTANTIATE_LOSSES(double)

#undef INDISTILL_INSTANTIATE_LOSSES

}  // namespace indistill
