#pragma once

#include <cstdint>
#include <optional>

#include "gridcast/features.hpp"
#include "gridcast/nn/tape.hpp"

namespace gridcast::models {

/// Learnable (C, H, W) table, one C-vector per pixel id = row * W + col.
/// With max_norm set, every read returns v * min(1, max_norm / |v|); the
/// stored table itself is never clamped.
class GeoEmbedding {
 public:
  GeoEmbedding(int dim, int height, int width, std::optional<double> max_norm, std::uint64_t seed);

  int dim() const { return dim_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::optional<double> max_norm() const { return max_norm_; }

  nn::Parameter& table() { return table_; }
  const nn::Parameter& table() const { return table_; }

  /// Renormalised copy of the table.
  nn::Tensor read() const;
  /// Per-pixel C-vector as read (renormalised).
  std::vector<double> lookup(int pixel_id) const;
  /// (batch, C, H, W) on the tape; gradients flow into table().
  nn::Var lookup_batch(nn::Tape& tape, std::size_t batch);

 private:
  int dim_;
  int height_;
  int width_;
  std::optional<double> max_norm_;
  nn::Parameter table_;
};

/// Appends the embedding planes to a bundle under a "geo_embedding" manifest range.
/// ShapeError if the grids differ. dim 0 returns the bundle unchanged.
FeatureBundle geo_embed_concat(const FeatureBundle& bundle, const GeoEmbedding& emb);

}  // namespace gridcast::models
