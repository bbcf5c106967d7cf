#include "gridcast/models/geo_embedding.hpp"

#include <random>

#include "gridcast/error.hpp"
#include "gridcast/nn/ops.hpp"

namespace gridcast::models {

GeoEmbedding::GeoEmbedding(int dim, int height, int width, std::optional<double> max_norm, std::uint64_t seed)
    : dim_(dim), height_(height), width_(width), max_norm_(max_norm) {
  if (dim < 0 || height <= 0 || width <= 0) throw ConfigError("geo-embedding needs dim >= 0 and a positive grid");
  if (max_norm && !(*max_norm > 0.0)) throw ConfigError("geo-embedding max_norm must be positive");
  table_.name = "geo_embedding.table";
  table_.value = nn::Tensor({static_cast<std::size_t>(dim), static_cast<std::size_t>(height), static_cast<std::size_t>(width)});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  for (auto& v : table_.value.data()) v = normal(rng);
  table_.zero_grad();
}

nn::Tensor GeoEmbedding::read() const { return nn::renormalize_pixels(table_.value, max_norm_); }

std::vector<double> GeoEmbedding::lookup(int pixel_id) const {
  const std::size_t plane = static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  if (pixel_id < 0 || static_cast<std::size_t>(pixel_id) >= plane) throw ShapeError("pixel id out of range");
  const auto t = read();
  std::vector<double> v(static_cast<std::size_t>(dim_));
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = t[k * plane + static_cast<std::size_t>(pixel_id)];
  return v;
}

nn::Var GeoEmbedding::lookup_batch(nn::Tape& tape, std::size_t batch) {
  return nn::broadcast_embedding(tape.param(table_), batch, max_norm_);
}

FeatureBundle geo_embed_concat(const FeatureBundle& bundle, const GeoEmbedding& emb) {
  if (emb.dim() == 0) return bundle;
  if (bundle.height != emb.height() || bundle.width != emb.width()) {
    throw ShapeError("geo-embedding grid does not match the feature bundle");
  }
  FeatureBundle out = bundle;
  const auto t = emb.read();
  out.input.reserve(out.input.size() + t.size());
  for (double v : t.data()) out.input.push_back(static_cast<float>(v));
  out.manifest.append("geo_embedding", emb.dim());
  return out;
}

}  // namespace gridcast::models
