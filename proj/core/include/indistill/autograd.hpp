#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "indistill/tensor.hpp"

namespace indistill {

template <typename Real>
class Tape;

// Handle to a value recorded on a tape.
template <typename Real>
class Var {
 public:
  Var() = default;
  Var(Tape<Real>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<Real>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor<Real>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape<Real>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Append-only record of a forward computation. Nodes are stored in creation
// order, which is a topological order, so backward walks them in reverse once.
// A tape is single-use: after backward() it refuses further recording.
template <typename Real>
class Tape {
 public:
  // Called during backward with the tape and the id of the node whose
  // gradient is complete. Accumulates into inputs' gradients via grad().
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Real> constant(Tensor<Real> value);
  // Leaf bound to a parameter. If the parameter is trainable (and `trainable`
  // is true) the gradient is accumulated into param.grad during backward.
  Var<Real> leaf(Parameter<Real>& param, bool trainable = true);
  Var<Real> record(Tensor<Real> value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Tensor<Real>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  // Gradient buffer of a node, allocated zero-filled on first access.
  Tensor<Real>& grad(std::size_t id);

  void backward(const Var<Real>& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter<Real>* param = nullptr;
    bool requires_grad = false;
  };

  void check_open() const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

template <typename Real>
const Tensor<Real>& Var<Real>::value() const {
  return tape_->value(id_);
}

template <typename Real>
bool Var<Real>::requires_grad() const {
  return tape_->requires_grad(id_);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace indistill
