#pragma once

#include <optional>
#include <vector>

#include "gridcast/container.hpp"
#include "gridcast/models/activation.hpp"

namespace gridcast::models {

enum class Family { hrnet, unet };
std::string_view to_string(Family f);
Family parse_family(std::string_view text);

/// One HR-NET stage: number of parallel branches and residual blocks per branch.
struct StageSpec {
  int branches = 1;
  int blocks = 1;
  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

struct GeoEmbeddingConfig {
  int dim = 8;
  std::optional<double> max_norm;
  friend bool operator==(const GeoEmbeddingConfig&, const GeoEmbeddingConfig&) = default;
};

struct BackboneConfig {
  Family family = Family::hrnet;
  int width = 4;  // branch i of HR-NET / level i of U-NET has width * 2^i channels
  std::vector<StageSpec> stages{{1, 1}, {2, 1}, {3, 1}, {4, 1}};  // hrnet only
  int depth = 3;                                                     // unet only
  ActivationKind activation = ActivationKind::elu();
  bool batch_norm = true;
  GeoEmbeddingConfig geo_embedding;
  int in_channels = 215;  // backbone input: feature channels + geo_embedding.dim
  int out_frames = 6;
  int out_channels = 9;

  /// ConfigError on inconsistent settings.
  void validate() const;

  int out_planes() const { return out_frames * out_channels; }
  int feature_channels() const { return in_channels - geo_embedding.dim; }
  int max_branches() const;
  /// Number of 2x reductions; H and W must be divisible by 2^this.
  int downsample_levels() const;
  std::vector<int> branch_widths() const;
  /// ConfigError unless both dims are divisible by 2^downsample_levels().
  void check_grid(int height, int width) const;

  /// Published HR-NET branch widths (18/36/72/144 and 48/96/192/384), four blocks per branch.
  static BackboneConfig hrnet_w18();
  static BackboneConfig hrnet_w48();

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

void to_json(ordered_json& j, const BackboneConfig& c);
void from_json(const ordered_json& j, BackboneConfig& c);

/// Input channels of each U-NET decoder level, deepest first: skip width + upsampled width.
std::vector<int> unet_decoder_in_channels(const BackboneConfig& c);

}  // namespace gridcast::models
