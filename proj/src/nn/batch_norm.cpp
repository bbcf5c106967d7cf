#include "gridcast/nn/batch_norm.hpp"

#include <cmath>

#include "gridcast/error.hpp"

namespace gridcast::nn {

Moments combine_moments(std::span<const Moments> parts) {
  if (parts.empty()) throw ShapeError("combine_moments needs at least one part");
  Moments out;
  const std::size_t c = parts[0].mean.size();
  const bool with_var = !parts[0].var.empty();
  out.mean.assign(c, 0.0);
  if (with_var) out.var.assign(c, 0.0);
  for (const auto& p : parts) {
    if (p.mean.size() != c || p.var.empty() == with_var) throw ShapeError("moment parts disagree in size");
    out.count += p.count;
  }
  if (out.count <= 0.0) return out;
  for (const auto& p : parts) {
    const double wgt = p.count / out.count;
    for (std::size_t i = 0; i < c; ++i) out.mean[i] += wgt * p.mean[i];
  }
  if (with_var) {
    for (const auto& p : parts) {
      const double wgt = p.count / out.count;
      for (std::size_t i = 0; i < c; ++i) {
        const double d = p.mean[i] - out.mean[i];
        out.var[i] += wgt * (p.var[i] + d * d);
      }
    }
  }
  return out;
}

class InProcessStatsGroup::Handle final : public StatsSync {
 public:
  Handle(InProcessStatsGroup& group, std::size_t rank) : group_(group), rank_(rank) {}
  void reduce(Moments& local) override {
    group_.slots_[rank_] = local;
    group_.gather_.arrive_and_wait();
    local = combine_moments(group_.slots_);
    group_.release_.arrive_and_wait();
  }

 private:
  InProcessStatsGroup& group_;
  std::size_t rank_;
};

InProcessStatsGroup::InProcessStatsGroup(std::size_t participants)
    : participants_(participants),
      slots_(participants),
      gather_(static_cast<std::ptrdiff_t>(participants)),
      release_(static_cast<std::ptrdiff_t>(participants)) {
  for (std::size_t r = 0; r < participants; ++r) handles_.push_back(std::make_unique<Handle>(*this, r));
}

InProcessStatsGroup::~InProcessStatsGroup() = default;

StatsSync& InProcessStatsGroup::rank(std::size_t r) { return *handles_.at(r); }

Var batch_norm(Var x, Var gamma, Var beta, BatchNormState& state, bool training, StatsSync* sync) {
  if (x.value().rank() != 4) throw ShapeError("batch_norm expects NCHW input");
  const std::size_t n = x.shape()[0], c = x.shape()[1], plane = x.shape()[2] * x.shape()[3];
  if (gamma.value().size() != c || beta.value().size() != c || state.running_mean.size() != c) {
    throw ShapeError("batch_norm parameters do not match " + std::to_string(c) + " channels");
  }
  const double local_count = static_cast<double>(n * plane);
  const auto& xv = x.value();

  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (training) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = xv.ptr() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      mean[ch] = s / local_count;
      double q = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = xv.ptr() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) q += (p[i] - mean[ch]) * (p[i] - mean[ch]);
      }
      var[ch] = q / local_count;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = state.running_mean[ch];
      var[ch] = state.running_var[ch];
    }
  }
  double count = local_count;
  if (training && sync != nullptr) {
    Moments m{local_count, mean, var};
    sync->reduce(m);
    count = m.count;
    mean = std::move(m.mean);
    var = std::move(m.var);
  }
  if (training) {
    const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      state.running_mean[ch] = (1.0 - state.momentum) * state.running_mean[ch] + state.momentum * mean[ch];
      state.running_var[ch] = (1.0 - state.momentum) * state.running_var[ch] + state.momentum * var[ch] * unbias;
    }
  }

  std::vector<double> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + state.eps);
  Tensor xhat(x.shape());
  Tensor out(x.shape());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * plane;
      const double g = gamma.value()[ch], be = beta.value()[ch];
      for (std::size_t i = 0; i < plane; ++i) {
        const double h = (xv[base + i] - mean[ch]) * inv_std[ch];
        xhat[base + i] = h;
        out[base + i] = g * h + be;
      }
    }
  }

  auto& tape = x.tape();
  const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  Var y = tape.record(std::move(out), rg);
  Node* yn = y.node();
  Node* xn = x.node();
  Node* gn = gamma.node();
  Node* bn = beta.node();
  tape.set_backward(y, [=, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
    const Tensor& dy = yn->grad;
    std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy[ch] += dy[base + i];
          sum_dy_xhat[ch] += dy[base + i] * xhat[base + i];
        }
      }
    }
    if (gn->requires_grad) {
      auto& gg = gn->grad_buffer();
      for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += sum_dy_xhat[ch];
    }
    if (bn->requires_grad) {
      auto& gb = bn->grad_buffer();
      for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += sum_dy[ch];
    }
    if (!xn->requires_grad) return;
    auto& dx = xn->grad_buffer();
    if (!training) {
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t base = (b * c + ch) * plane;
          const double s = gn->value[ch] * inv_std[ch];
          for (std::size_t i = 0; i < plane; ++i) dx[base + i] += s * dy[base + i];
        }
      }
      return;
    }
    // dx = gamma/sigma * (dy - mean(dy) - xhat * mean(dy * xhat)), means over the global batch.
    Moments m{local_count, std::vector<double>(c), {}};
    std::vector<double> mean_dy_xhat(c);
    for (std::size_t ch = 0; ch < c; ++ch) m.mean[ch] = sum_dy[ch] / local_count;
    for (std::size_t ch = 0; ch < c; ++ch) mean_dy_xhat[ch] = sum_dy_xhat[ch] / local_count;
    if (sync != nullptr) {
      Moments m2{local_count, mean_dy_xhat, {}};
      sync->reduce(m);
      sync->reduce(m2);
      mean_dy_xhat = std::move(m2.mean);
    }
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (b * c + ch) * plane;
        const double s = gn->value[ch] * inv_std[ch];
        for (std::size_t i = 0; i < plane; ++i) {
          dx[base + i] += s * (dy[base + i] - m.mean[ch] - xhat[base + i] * mean_dy_xhat[ch]);
        }
      }
    }
  });
  return y;
}

}  // namespace gridcast::nn
