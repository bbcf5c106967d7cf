#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gridcast/models/activation.hpp"
#include "gridcast/nn/tape.hpp"

namespace gridcast::nn {

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

/// x (N, Ci, H, W), weight (Co, Ci, k, k), optional bias (Co). im2col + GEMM.
Var conv2d(Var x, Var weight, std::optional<Var> bias, ConvGeometry geom);

Var activation(Var x, const models::ActivationKind& kind);
Var add(Var a, Var b);
/// Sum of same-shaped inputs.
Var add_n(std::span<const Var> inputs);
/// Nearest-neighbour upsampling by an integer factor in both spatial dims.
Var upsample_nearest(Var x, std::size_t factor);
/// 2x2 max pooling, stride 2. Ties route the gradient to the first maximum.
Var max_pool2(Var x);
Var concat_channels(std::span<const Var> inputs);
/// Mean over all elements of (pred - target)^2. Returns a (1) tensor.
Var mse_loss(Var pred, Var target);

/// Replicates a (C, H, W) table across a batch of `batch` samples, applying
/// the per-pixel renormalisation v * min(1, max_norm / |v|) when max_norm is set.
Var broadcast_embedding(Var table, std::size_t batch, std::optional<double> max_norm);

/// Forward-only renormalisation used outside the tape.
Tensor renormalize_pixels(const Tensor& table, std::optional<double> max_norm);

}  // namespace gridcast::nn
