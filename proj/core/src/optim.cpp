#include "indistill/optim.hpp"

#include <cmath>

namespace indistill {

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd-momentum";
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd-momentum" || name == "sgd") return OptimizerKind::kSgdMomentum;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam or sgd-momentum)");
}

template <typename Real>
void OptimizerState<Real>::ensure(std::span<const Parameter<Real>> params) {
  if (first.size() == params.size()) return;
  if (!first.empty()) {
    throw ParameterError("optimizer state holds " + std::to_string(first.size()) +
                         " tensors, model has " + std::to_string(params.size()));
  }
  for (const auto& p : params) {
    first.emplace_back(p.value.shape());
    second.emplace_back(p.value.shape());
    steps.push_back(0);
  }
}

namespace {

template <typename Real>
bool selected(std::span<Parameter<Real>> params, std::span<const bool> active, std::size_t i) {
  if (!params[i].trainable) return false;
  return active.empty() || (i < active.size() && active[i]);
}

}  // namespace

template <typename Real>
void adam_step(std::span<Parameter<Real>> params, OptimizerState<Real>& state,
               const OptimizerConfig& c, double lr, std::span<const bool> active) {
  state.ensure(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!selected(params, active, i)) continue;
    auto& p = params[i];
    auto& m = state.first[i];
    auto& v = state.second[i];
    const long t = ++state.steps[i];
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      double g = p.grad[k];
      if (c.weight_decay != 0.0) g += c.weight_decay * p.value[k];
      const double mk = c.beta1 * m[k] + (1.0 - c.beta1) * g;
      const double vk = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
      m[k] = static_cast<Real>(mk);
      v[k] = static_cast<Real>(vk);
      const double update = lr * (mk / bc1) / (std::sqrt(vk / bc2) + c.eps);
      p.value[k] = static_cast<Real>(p.value[k] - update);
    }
  }
}

template <typename Real>
void sgd_momentum_step(std::span<Parameter<Real>> params, OptimizerState<Real>& state,
                       const OptimizerConfig& c, double lr, std::span<const bool> active) {
  state.ensure(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!selected(params, active, i)) continue;
    auto& p = params[i];
    auto& vel = state.first[i];
    ++state.steps[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      double g = p.grad[k];
      if (c.weight_decay != 0.0) g += c.weight_decay * p.value[k];
      const double vk = c.momentum * vel[k] + g;
      vel[k] = static_cast<Real>(vk);
      p.value[k] = static_cast<Real>(p.value[k] - lr * vk);
    }
  }
}

template <typename Real>
void optimizer_step(std::span<Parameter<Real>> params, OptimizerState<Real>& state,
                    const OptimizerConfig& config, double lr, std::span<const bool> active) {
  if (config.kind == OptimizerKind::kAdam) {
    adam_step(params, state, config, lr, active);
  } else {
    sgd_momentum_step(params, state, config, lr, active);
  }
}

GradientAccumulator::GradientAccumulator(std::size_t steps) : steps_(steps) {
  if (steps == 0) throw ConfigError("accumulation steps must be >= 1");
}

#define INDISTILL_OPTIM(Real)                                                                    \
  template struct OptimizerState<Real>;                                                          \
  template void adam_step(std::span<Parameter<Real>>, OptimizerState<Real>&,                     \
                          const OptimizerConfig&, double, std::span<const bool>);                \
  template void sgd_momentum_step(std::span<Parameter<Real>>, OptimizerState<Real>&,             \
                                  const OptimizerConfig&, double, std::span<const bool>);        \
  template void optimizer_step(std::span<Parameter<Real>>, OptimizerState<Real>&,                \
                               const OptimizerConfig&, double, std::span<const bool>);

INDISTILL_OPTIM(float)
INDISTILL_OPTIM(double)

}  // namespace indistill
