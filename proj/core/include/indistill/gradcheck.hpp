#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "indistill/autograd.hpp"

namespace indistill {

template <typename Real>
using TapeFunction = std::function<Var<Real>(Tape<Real>&, const Var<Real>&)>;

// Compares the tape gradient of a scalar function at `point` against central
// differences with step h. Returns
//   max_i |analytic_i - numeric_i| / max(1e-8, |analytic_i| + |numeric_i|).
template <typename Real>
double finite_diff_check(const TapeFunction<Real>& f, const Tensor<Real>& point, Real h) {
  Parameter<Real> p("x", point);
  {
    Tape<Real> tape;
    Var<Real> loss = f(tape, tape.leaf(p));
    tape.backward(loss);
  }
  auto eval = [&](const Tensor<Real>& at) {
    Tape<Real> tape;
    return static_cast<double>(f(tape, tape.constant(at)).value().item());
  };
  double worst = 0.0;
  Tensor<Real> probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + h;
    const double up = eval(probe);
    probe[i] = point[i] - h;
    const double down = eval(probe);
    probe[i] = point[i];
    const double numeric = (up - down) / (2.0 * static_cast<double>(h));
    const double analytic = static_cast<double>(p.grad[i]);
    const double denom = std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

}  // namespace indistill
