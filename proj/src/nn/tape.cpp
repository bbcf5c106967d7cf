#include "gridcast/nn/tape.hpp"

#include "gridcast/error.hpp"
#include "gridcast/kernels/kernels.hpp"

namespace gridcast::nn {

Var Tape::constant(Tensor value) {
  auto& n = nodes_.emplace_back();
  n.value = std::move(value);
  return {this, &n};
}

Var Tape::leaf(Tensor value) {
  auto& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = true;
  return {this, &n};
}

Var Tape::param(Parameter& p) {
  auto& n = nodes_.emplace_back();
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  return {this, &n};
}

Var Tape::record(Tensor value, bool requires_grad) {
  auto& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return {this, &n};
}

void Tape::set_backward(Var out, std::function<void()> fn) {
  if (out.requires_grad()) out.node()->backward = std::move(fn);
}

void Tape::backward(Var loss) {
  if (loss.value().size() != 1) throw ShapeError("backward needs a scalar loss, got " + shape_string(loss.shape()));
  if (!loss.requires_grad()) return;
  loss.node()->grad_buffer()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = *it;
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward();
    if (n.param != nullptr) {
      auto& g = n.param->grad;
      if (g.size() != n.grad.size()) g = Tensor(n.param->value.shape(), 0.0);
      kernels::axpy(g.size(), 1.0, n.grad.ptr(), g.ptr());
    }
  }
}

}  // namespace gridcast::nn
