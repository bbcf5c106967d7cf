#pragma once

// Reverse-mode autodiff over whole tensors. A Tape owns every node created
// during one forward pass; nodes are appended in evaluation order, so a
// reverse sweep over the tape is a valid topological order for backward.

#include <deque>
#include <functional>
#include <string>

#include "gridcast/nn/tensor.hpp"

namespace gridcast::nn {

/// Trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad = Tensor(value.shape(), 0.0); }
};

class Tape;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first use
  bool requires_grad = false;
  Parameter* param = nullptr;
  std::function<void()> backward;

  Tensor& grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor(value.shape(), 0.0);
    return grad;
  }
};

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, Node* node) : tape_(tape), node_(node) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  Node* node() const { return node_; }
  Tape& tape() const { return *tape_; }
  explicit operator bool() const { return node_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  Node* node_ = nullptr;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Input that never receives a gradient.
  Var constant(Tensor value);
  /// Input whose gradient is kept on the node (gradient checks on inputs).
  Var leaf(Tensor value);
  /// Reads a parameter; backward adds into param.grad.
  Var param(Parameter& p);
  /// Result of an op. `backward` reads out.node()->grad and pushes into inputs.
  Var record(Tensor value, bool requires_grad);
  void set_backward(Var out, std::function<void()> fn);

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  std::deque<Node> nodes_;
};

}  // namespace gridcast::nn
