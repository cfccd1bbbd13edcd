#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "indistill/tensor.hpp"

namespace indistill {

enum class OptimizerKind { kAdam, kSgdMomentum };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;
  double weight_decay = 0.0;

  bool operator==(const OptimizerConfig&) const = default;
};

// Per-parameter moments. For SGD `first` is the velocity and `second` is unused.
// Step counts are kept per parameter so a layer that starts training late
// (curriculum phases) gets its own bias correction.
template <typename Real>
struct OptimizerState {
  std::vector<Tensor<Real>> first;
  std::vector<Tensor<Real>> second;
  std::vector<long> steps;

  void ensure(std::span<const Parameter<Real>> params);
  bool operator==(const OptimizerState&) const = default;
};

// Both update params[i] for every trainable i in `active` (all when empty)
// from params[i].grad. Untouched parameters keep their moments unchanged.
template <typename Real>
void adam_step(std::span<Parameter<Real>> params, OptimizerState<Real>& state,
               const OptimizerConfig& config, double lr, std::span<const bool> active = {});

template <typename Real>
void sgd_momentum_step(std::span<Parameter<Real>> params, OptimizerState<Real>& state,
                       const OptimizerConfig& config, double lr, std::span<const bool> active = {});

template <typename Real>
void optimizer_step(std::span<Parameter<Real>> params, OptimizerState<Real>& state,
                    const OptimizerConfig& config, double lr, std::span<const bool> active = {});

// Counts micro-batches and says when the accumulated gradient is due; the
// caller divides by count() and steps.
class GradientAccumulator {
 public:
  explicit GradientAccumulator(std::size_t steps);

  // Registers one backward pass; true when an optimizer step is due.
  bool push() noexcept { return ++pending_ == steps_; }
  std::size_t pending() const noexcept { return pending_; }
  void reset() noexcept { pending_ = 0; }
  std::size_t steps() const noexcept { return steps_; }

 private:
  std::size_t steps_;
  std::size_t pending_ = 0;
};

}  // namespace indistill
