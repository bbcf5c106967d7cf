#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "gridcast/container.hpp"
#include "gridcast/models/model.hpp"

namespace gridcast::models {

struct CheckpointMeta {
  std::uint64_t seed = 0;
  int epoch = 0;
  std::optional<double> metric;  // validation MSE when available
  ordered_json extra = ordered_json::object();
};

/// Container with a JSON header {format, config, grid, seed, epoch, metric,
/// tensors:[{name, shape, offset}]} and little-endian f64 payloads in header order.
void save_checkpoint(const std::filesystem::path& path, Model& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  Model model;
  CheckpointMeta meta;
};

/// Rebuilds the model from the stored config and copies every tensor back.
/// FormatError / CorruptionError on malformed files.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gridcast::models
