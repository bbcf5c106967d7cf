#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gridcast/models/backbone_config.hpp"
#include "gridcast/models/geo_embedding.hpp"
#include "gridcast/nn/batch_norm.hpp"
#include "gridcast/nn/ops.hpp"

namespace gridcast::models {

/// Image-to-image backbone plus the optional geo-embedding that is
/// concatenated to its input. Input (N, feature_channels, H, W), output
/// (N, out_frames * out_channels, H, W). The head is linear.
class Model {
 public:
  Model(BackboneConfig config, int height, int width, std::uint64_t seed);
  ~Model();
  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;

  const BackboneConfig& config() const { return config_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::uint64_t seed() const { return seed_; }

  /// Every trainable tensor, in construction order (geo-embedding table last).
  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;
  /// Running statistics, named "<layer>.running_mean" / ".running_var".
  std::vector<std::pair<std::string, nn::Tensor*>> buffers();
  std::size_t parameter_count() const;

  GeoEmbedding* geo_embedding() { return embedding_.get(); }

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }
  /// Hook for batch-norm statistics; nullptr for a single context.
  void set_stats_sync(nn::StatsSync* sync) { sync_ = sync; }

  void zero_grad();

  nn::Var forward(nn::Tape& tape, nn::Var features);
  /// Forward pass without retaining gradients, in the current mode.
  nn::Tensor predict(const nn::Tensor& features);

  struct Impl;

 private:
  BackboneConfig config_;
  int height_;
  int width_;
  std::uint64_t seed_;
  bool training_ = true;
  nn::StatsSync* sync_ = nullptr;
  std::unique_ptr<Impl> impl_;
  std::unique_ptr<GeoEmbedding> embedding_;
};

}  // namespace gridcast::models
