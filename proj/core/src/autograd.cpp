#include "indistill/autograd.hpp"

#include <string>

namespace indistill {

template <typename Real>
void Tape<Real>::check_open() const {
  if (consumed_) throw TapeError("tape already consumed by backward(); record on a fresh tape");
}

template <typename Real>
Var<Real> Tape<Real>::constant(Tensor<Real> value) {
  check_open();
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var<Real>(this, nodes_.size() - 1);
}

template <typename Real>
Var<Real> Tape<Real>::leaf(Parameter<Real>& param, bool trainable) {
  check_open();
  Node n;
  n.value = param.value;
  n.requires_grad = trainable && param.trainable;
  if (n.requires_grad) {
    if (param.grad.shape() != param.value.shape()) param.grad = Tensor<Real>(param.value.shape());
    n.param = &param;
  }
  nodes_.push_back(std::move(n));
  return Var<Real>(this, nodes_.size() - 1);
}

template <typename Real>
Var<Real> Tape<Real>::record(Tensor<Real> value, std::vector<std::size_t> inputs,
                             BackwardFn backward) {
  check_open();
  Node n;
  n.value = std::move(value);
  for (auto id : inputs) {
    if (id >= nodes_.size()) throw TapeError("input id " + std::to_string(id) + " not on tape");
    n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
  }
  if (n.requires_grad) {
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var<Real>(this, nodes_.size() - 1);
}

template <typename Real>
Tensor<Real>& Tape<Real>::grad(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = Tensor<Real>(n.value.shape());
  return n.grad;
}

template <typename Real>
void Tape<Real>::backward(const Var<Real>& loss) {
  if (&loss.tape() != this) throw TapeError("loss belongs to a different tape");
  check_open();
  const Node& root = nodes_.at(loss.id());
  if (root.value.size() != 1) {
    throw TapeError("backward() needs a scalar loss, got shape " + to_string(root.value.shape()));
  }
  consumed_ = true;
  if (!root.requires_grad) return;
  grad(loss.id()).fill(Real(1));
  for (std::size_t k = loss.id() + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param != nullptr) {
      auto dst = n.param->grad.data();
      auto src = n.grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    } else if (n.backward) {
      n.backward(*this, k);
    }
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace indistill
