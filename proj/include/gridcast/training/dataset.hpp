#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gridcast/features.hpp"
#include "gridcast/nn/tensor.hpp"

namespace gridcast::training {

struct SampleKey {
  Date date;
  int t = 0;  // anchor frame: last input frame within `date`

  auto operator<=>(const SampleKey&) const = default;
};

/// Every (date, anchor) pair for dates in [first, last].
std::vector<SampleKey> sample_keys(Date first, Date last, std::span<const int> anchors);

/// Materialised features and targets. Features are computed once because
/// their sampling seed depends only on (seed, date, t), so they are the same
/// every epoch. Targets are stored as planes f * C + c on the unit scale.
class SampleSet {
 public:
  SampleSet() = default;
  /// Builds samples on up to `threads` workers; the result does not depend on it.
  SampleSet(const FeaturePipeline& pipeline, std::vector<SampleKey> keys, FeatureMode mode, std::uint64_t seed,
            unsigned threads = 1);

  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }
  const std::vector<SampleKey>& keys() const { return keys_; }
  int feature_channels() const { return feature_channels_; }
  int target_planes() const { return target_planes_; }
  int height() const { return height_; }
  int width() const { return width_; }
  const ChannelManifest& manifest() const { return manifest_; }

  std::span<const float> features(std::size_t i) const;
  std::span<const float> targets(std::size_t i) const;

  /// Same-geometry union; ShapeError otherwise.
  static SampleSet concat(const SampleSet& a, const SampleSet& b);

 private:
  std::vector<SampleKey> keys_;
  int feature_channels_ = 0;
  int target_planes_ = 0;
  int height_ = 0;
  int width_ = 0;
  ChannelManifest manifest_;
  std::vector<float> features_;
  std::vector<float> targets_;
};

struct Batch {
  nn::Tensor features;  // (N, C_in, H, W)
  nn::Tensor targets;   // (N, T*C, H, W)
};

Batch make_batch(const SampleSet& set, std::span<const std::size_t> indices);

/// Seeded epoch permutation of [0, n).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

}  // namespace gridcast::training
