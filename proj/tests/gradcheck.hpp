#pragma once

// Central-difference gradient checking shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gridcast/nn/tape.hpp"

namespace gridcast::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<param>[index]"
  std::size_t checked = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor).
inline double rel_error(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// `loss` must rebuild the graph on the given tape from the parameters' current values.
inline GradCheckResult check_gradients(const std::vector<nn::Parameter*>& params,
                                       const std::function<nn::Var(nn::Tape&)>& loss, double step = 1e-4) {
  for (auto* p : params) p->zero_grad();
  {
    nn::Tape tape;
    auto l = loss(tape);
    tape.backward(l);
  }
  auto eval = [&] {
    nn::Tape tape;
    return loss(tape).value()[0];
  };
  GradCheckResult r;
  for (auto* p : params) {
    const auto analytic = p->grad;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + step;
      const double up = eval();
      p->value[i] = orig - step;
      const double down = eval();
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double e = rel_error(analytic[i], numeric);
      ++r.checked;
      if (e > r.max_rel_error) {
        r.max_rel_error = e;
        r.worst = p->name + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic[i]) + " numeric " +
                  std::to_string(numeric);
      }
    }
  }
  return r;
}

}  // namespace gridcast::testing
