#include "gridcast/nn/ops.hpp"

#include <algorithm>
#include <cmath>

#include "gridcast/error.hpp"
#include "gridcast/kernels/kernels.hpp"

namespace gridcast::nn {
namespace {

void require_rank4(const Var& v, const char* what) {
  if (v.value().rank() != 4) throw ShapeError(std::string(what) + " expects NCHW input, got " + shape_string(v.shape()));
}

// col[(ci*k + ky)*k + kx][oy*wo + ox] = x[ci][oy*s - p + ky][ox*s - p + kx]
void im2col(const double* x, std::size_t ci, std::size_t h, std::size_t w, std::size_t k, ConvGeometry g,
            std::size_t ho, std::size_t wo, double* col) {
  for (std::size_t c = 0; c < ci; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* dst = col + ((c * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          double* row = dst + oy * wo;
          if (iy < 0 || iy >= static_cast<long>(h)) {
            std::fill(row, row + wo, 0.0);
            continue;
          }
          const double* src = x + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            row[ox] = (ix < 0 || ix >= static_cast<long>(w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const double* col, std::size_t ci, std::size_t h, std::size_t w, std::size_t k, ConvGeometry g,
            std::size_t ho, std::size_t wo, double* dx) {
  for (std::size_t c = 0; c < ci; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* src = col + ((c * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          double* dst = dx + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(w)) dst[ix] += src[oy * wo + ox];
          }
        }
      }
    }
  }
}

bool any_requires_grad(std::span<const Var> vs) {
  return std::any_of(vs.begin(), vs.end(), [](const Var& v) { return v.requires_grad(); });
}

}  // namespace

Var conv2d(Var x, Var weight, std::optional<Var> bias, ConvGeometry geom) {
  require_rank4(x, "conv2d");
  const auto& ws = weight.shape();
  if (ws.size() != 4 || ws[2] != ws[3]) throw ShapeError("conv2d weight must be (Co, Ci, k, k), got " + shape_string(ws));
  const std::size_t n = x.shape()[0], ci = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const std::size_t co = ws[0], k = ws[2];
  if (ws[1] != ci) {
    throw ShapeError("conv2d weight expects " + std::to_string(ws[1]) + " input channels, input has " + std::to_string(ci));
  }
  if (bias && (bias->value().size() != co)) throw ShapeError("conv2d bias size mismatch");
  if (geom.stride == 0 || h + 2 * geom.pad < k || w + 2 * geom.pad < k) throw ShapeError("conv2d geometry invalid for input");
  const std::size_t ho = (h + 2 * geom.pad - k) / geom.stride + 1;
  const std::size_t wo = (w + 2 * geom.pad - k) / geom.stride + 1;
  const std::size_t kk = ci * k * k;
  const std::size_t hw = ho * wo;
  const bool direct = k == 1 && geom.stride == 1 && geom.pad == 0;

  Tensor out({n, co, ho, wo});
  std::vector<double> col(direct ? 0 : kk * hw);
  for (std::size_t s = 0; s < n; ++s) {
    const double* xs = x.value().ptr() + s * ci * h * w;
    const double* cols = xs;
    if (!direct) {
      im2col(xs, ci, h, w, k, geom, ho, wo, col.data());
      cols = col.data();
    }
    double* ys = out.ptr() + s * co * hw;
    kernels::gemm_nn(co, hw, kk, weight.value().ptr(), cols, ys);
    if (bias) {
      for (std::size_t o = 0; o < co; ++o) {
        const double b = bias->value()[o];
        double* row = ys + o * hw;
        for (std::size_t p = 0; p < hw; ++p) row[p] += b;
      }
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  auto& tape = x.tape();
  Var y = tape.record(std::move(out), any_requires_grad(inputs));
  Node* yn = y.node();
  Node* xn = x.node();
  Node* wn = weight.node();
  Node* bn = bias ? bias->node() : nullptr;
  tape.set_backward(y, [=] {
    const Tensor& dy = yn->grad;
    std::vector<double> colbuf(direct ? 0 : kk * hw);
    std::vector<double> dcol(direct ? 0 : kk * hw);
    for (std::size_t s = 0; s < n; ++s) {
      const double* dys = dy.ptr() + s * co * hw;
      const double* xs = xn->value.ptr() + s * ci * h * w;
      if (wn->requires_grad) {
        const double* cols = xs;
        if (!direct) {
          im2col(xs, ci, h, w, k, geom, ho, wo, colbuf.data());
          cols = colbuf.data();
        }
        kernels::gemm_nt(co, kk, hw, dys, cols, wn->grad_buffer().ptr(), true);
      }
      if (bn != nullptr && bn->requires_grad) {
        double* db = bn->grad_buffer().ptr();
        for (std::size_t o = 0; o < co; ++o) {
          const double* row = dys + o * hw;
          double acc = 0.0;
          for (std::size_t p = 0; p < hw; ++p) acc += row[p];
          db[o] += acc;
        }
      }
      if (xn->requires_grad) {
        double* dxs = xn->grad_buffer().ptr() + s * ci * h * w;
        if (direct) {
          kernels::gemm_tn(kk, hw, co, wn->value.ptr(), dys, dxs, true);
        } else {
          kernels::gemm_tn(kk, hw, co, wn->value.ptr(), dys, dcol.data(), false);
          col2im(dcol.data(), ci, h, w, k, geom, ho, wo, dxs);
        }
      }
    }
  });
  return y;
}

Var activation(Var x, const models::ActivationKind& kind) {
  Tensor out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = models::activation_apply(kind, xv[i]);
  auto& tape = x.tape();
  Var y = tape.record(std::move(out), x.requires_grad());
  Node* yn = y.node();
  Node* xn = x.node();
  tape.set_backward(y, [=] {
    auto& dx = xn->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += yn->grad[i] * models::activation_derivative(kind, xn->value[i]);
  });
  return y;
}

Var add(Var a, Var b) {
  const Var in[] = {a, b};
  return add_n(in);
}

Var add_n(std::span<const Var> inputs) {
  if (inputs.empty()) throw ShapeError("add_n needs at least one input");
  Tensor out = inputs[0].value();
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    if (inputs[i].shape() != out.shape()) {
      throw ShapeError("add: shape " + shape_string(inputs[i].shape()) + " vs " + shape_string(out.shape()));
    }
    kernels::axpy(out.size(), 1.0, inputs[i].value().ptr(), out.ptr());
  }
  auto& tape = inputs[0].tape();
  Var y = tape.record(std::move(out), any_requires_grad(inputs));
  Node* yn = y.node();
  std::vector<Node*> ins;
  for (const auto& v : inputs) ins.push_back(v.node());
  tape.set_backward(y, [=] {
    for (Node* in : ins) {
      if (in->requires_grad) kernels::axpy(yn->grad.size(), 1.0, yn->grad.ptr(), in->grad_buffer().ptr());
    }
  });
  return y;
}

Var upsample_nearest(Var x, std::size_t factor) {
  require_rank4(x, "upsample_nearest");
  if (factor == 0) throw ShapeError("upsample factor must be positive");
  if (factor == 1) return x;
  const std::size_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const std::size_t ho = h * factor, wo = w * factor;
  Tensor out({n, c, ho, wo});
  const double* src = x.value().ptr();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      const double* srow = src + (plane * h + oy / factor) * w;
      double* drow = out.ptr() + (plane * ho + oy) * wo;
      for (std::size_t ox = 0; ox < wo; ++ox) drow[ox] = srow[ox / factor];
    }
  }
  auto& tape = x.tape();
  Var y = tape.record(std::move(out), x.requires_grad());
  Node* yn = y.node();
  Node* xn = x.node();
  tape.set_backward(y, [=] {
    double* dx = xn->grad_buffer().ptr();
    const double* dy = yn->grad.ptr();
    for (std::size_t plane = 0; plane < n * c; ++plane) {
      for (std::size_t oy = 0; oy < ho; ++oy) {
        double* drow = dx + (plane * h + oy / factor) * w;
        const double* grow = dy + (plane * ho + oy) * wo;
        for (std::size_t ox = 0; ox < wo; ++ox) drow[ox / factor] += grow[ox];
      }
    }
  });
  return y;
}

Var max_pool2(Var x) {
  require_rank4(x, "max_pool2");
  const std::size_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("max_pool2 needs even spatial dims, got " + shape_string(x.shape()));
  const std::size_t ho = h / 2, wo = w / 2;
  Tensor out({n, c, ho, wo});
  std::vector<std::size_t> argmax(out.size());
  const double* src = x.value().ptr();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (plane * h + 2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (plane * h + 2 * oy + dy) * w + 2 * ox + dx;
            if (src[idx] > src[best]) best = idx;
          }
        }
        const std::size_t o = (plane * ho + oy) * wo + ox;
        out[o] = src[best];
        argmax[o] = best;
      }
    }
  }
  auto& tape = x.tape();
  Var y = tape.record(std::move(out), x.requires_grad());
  Node* yn = y.node();
  Node* xn = x.node();
  tape.set_backward(y, [=, argmax = std::move(argmax)] {
    auto& dx = xn->grad_buffer();
    for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += yn->grad[o];
  });
  return y;
}

Var concat_channels(std::span<const Var> inputs) {
  if (inputs.empty()) throw ShapeError("concat needs at least one input");
  for (const auto& v : inputs) require_rank4(v, "concat_channels");
  const auto& s0 = inputs[0].shape();
  const std::size_t n = s0[0], h = s0[2], w = s0[3];
  std::size_t total = 0;
  for (const auto& v : inputs) {
    if (v.shape()[0] != n || v.shape()[2] != h || v.shape()[3] != w) {
      throw ShapeError("concat: " + shape_string(v.shape()) + " incompatible with " + shape_string(s0));
    }
    total += v.shape()[1];
  }
  const std::size_t plane = h * w;
  Tensor out({n, total, h, w});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& v : inputs) {
    offsets.push_back(off);
    const std::size_t c = v.shape()[1];
    for (std::size_t s = 0; s < n; ++s) {
      std::copy_n(v.value().ptr() + s * c * plane, c * plane, out.ptr() + (s * total + off) * plane);
    }
    off += c;
  }
  auto& tape = inputs[0].tape();
  Var y = tape.record(std::move(out), any_requires_grad(inputs));
  Node* yn = y.node();
  std::vector<Node*> ins;
  for (const auto& v : inputs) ins.push_back(v.node());
  tape.set_backward(y, [=] {
    for (std::size_t i = 0; i < ins.size(); ++i) {
      Node* in = ins[i];
      if (!in->requires_grad) continue;
      const std::size_t c = in->value.shape()[1];
      double* dx = in->grad_buffer().ptr();
      for (std::size_t s = 0; s < n; ++s) {
        kernels::axpy(c * plane, 1.0, yn->grad.ptr() + (s * total + offsets[i]) * plane, dx + s * c * plane);
      }
    }
  });
  return y;
}

Var mse_loss(Var pred, Var target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss: prediction " + shape_string(pred.shape()) + " vs target " + shape_string(target.shape()));
  }
  const std::size_t count = pred.value().size();
  if (count == 0) throw ShapeError("mse_loss on empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = pred.value()[i] - target.value()[i];
    acc += d * d;
  }
  auto& tape = pred.tape();
  const Var in[] = {pred, target};
  Var y = tape.record(Tensor({1}, acc / static_cast<double>(count)), any_requires_grad(in));
  Node* yn = y.node();
  Node* pn = pred.node();
  Node* tn = target.node();
  tape.set_backward(y, [=] {
    const double scale = 2.0 * yn->grad[0] / static_cast<double>(count);
    if (pn->requires_grad) {
      auto& g = pn->grad_buffer();
      for (std::size_t i = 0; i < count; ++i) g[i] += scale * (pn->value[i] - tn->value[i]);
    }
    if (tn->requires_grad) {
      auto& g = tn->grad_buffer();
      for (std::size_t i = 0; i < count; ++i) g[i] -= scale * (pn->value[i] - tn->value[i]);
    }
  });
  return y;
}

Tensor renormalize_pixels(const Tensor& table, std::optional<double> max_norm) {
  if (table.rank() != 3) throw ShapeError("embedding table must be (C, H, W)");
  Tensor out = table;
  if (!max_norm) return out;
  const std::size_t c = table.dim(0), plane = table.dim(1) * table.dim(2);
  for (std::size_t p = 0; p < plane; ++p) {
    double sq = 0.0;
    for (std::size_t k = 0; k < c; ++k) sq += table[k * plane + p] * table[k * plane + p];
    const double norm = std::sqrt(sq);
    if (norm > *max_norm) {
      const double s = *max_norm / norm;
      for (std::size_t k = 0; k < c; ++k) out[k * plane + p] *= s;
    }
  }
  return out;
}

Var broadcast_embedding(Var table, std::size_t batch, std::optional<double> max_norm) {
  const Tensor read = renormalize_pixels(table.value(), max_norm);
  const std::size_t c = read.dim(0), h = read.dim(1), w = read.dim(2), plane = h * w;
  Tensor out({batch, c, h, w});
  for (std::size_t s = 0; s < batch; ++s) std::copy_n(read.ptr(), read.size(), out.ptr() + s * read.size());
  auto& tape = table.tape();
  Var y = tape.record(std::move(out), table.requires_grad());
  Node* yn = y.node();
  Node* tn = table.node();
  tape.set_backward(y, [=] {
    // Sum over the batch, then pull back through the renormalisation.
    std::vector<double> g(c * plane, 0.0);
    for (std::size_t s = 0; s < batch; ++s) kernels::axpy(g.size(), 1.0, yn->grad.ptr() + s * g.size(), g.data());
    auto& dt = tn->grad_buffer();
    const auto& v = tn->value;
    for (std::size_t p = 0; p < plane; ++p) {
      double sq = 0.0;
      for (std::size_t k = 0; k < c; ++k) sq += v[k * plane + p] * v[k * plane + p];
      const double norm = std::sqrt(sq);
      if (!max_norm || norm <= *max_norm) {
        for (std::size_t k = 0; k < c; ++k) dt[k * plane + p] += g[k * plane + p];
        continue;
      }
      // out = m v / |v|  =>  dv = (m / |v|) (g - u (u . g)), u = v / |v|
      double ug = 0.0;
      for (std::size_t k = 0; k < c; ++k) ug += v[k * plane + p] / norm * g[k * plane + p];
      const double s = *max_norm / norm;
      for (std::size_t k = 0; k < c; ++k) {
        dt[k * plane + p] += s * (g[k * plane + p] - v[k * plane + p] / norm * ug);
      }
    }
  });
  return y;
}

}  // namespace gridcast::nn
