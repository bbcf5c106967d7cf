#pragma once

#include <map>
#include <string>
#include <vector>

#include "gridcast/container.hpp"
#include "gridcast/nn/tensor.hpp"

namespace gridcast::harness {

/// Pixel-wise MSE on the unit scale with per-channel and per-horizon cells.
/// Every cell stores its element count so the overall value is recoverable
/// as the count-weighted mean of either breakdown.
struct CityScore {
  double mse = 0.0;
  std::size_t elements = 0;
  std::size_t samples = 0;
  std::vector<double> per_channel;
  std::vector<std::size_t> channel_elements;
  std::vector<double> per_horizon;
  std::vector<std::size_t> horizon_elements;

  ordered_json to_json() const;
};

/// Tensors of shape (N, out_frames * out_channels, H, W), planes ordered
/// f * out_channels + c. With out_frames = 0 any shape is accepted and the
/// breakdowns hold a single cell. ShapeError on mismatch.
CityScore score(const nn::Tensor& predictions, const nn::Tensor& targets, int out_frames = 0, int out_channels = 0);

struct EvalReport {
  std::map<std::string, CityScore> cities;

  std::size_t sample_count() const;
  /// Element-weighted mean over cities.
  double overall_mse() const;
  ordered_json to_json() const;
};

}  // namespace gridcast::harness
