#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gridcast/models/model.hpp"
#include "gridcast/training/dataset.hpp"

namespace gridcast::harness {

/// One exported forecast: (offsets.size(), H, W, C) bytes, the grid-data layout.
struct ExportedPrediction {
  std::string city;
  Date date;
  int t = 0;
  std::vector<int> offsets;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> values;
};

/// `<out_dir>/<city>/<date>_t<ttt>.grid`
std::filesystem::path prediction_path(const std::filesystem::path& out_dir, const std::string& city,
                                      const training::SampleKey& key);

/// Quantises unit-scale predictions (N, T*C, H, W) and writes one container
/// per key. An empty key list writes nothing. IoError on write failure.
std::vector<std::filesystem::path> export_predictions(const std::string& city, const nn::Tensor& predictions,
                                                      std::span<const training::SampleKey> keys,
                                                      std::span<const int> offsets, int channels,
                                                      const std::filesystem::path& out_dir);

/// Mean of the members' eval-mode predictions over `windows`, then exported.
std::vector<std::filesystem::path> export_predictions(std::span<models::Model* const> ensemble,
                                                      const training::SampleSet& windows,
                                                      std::span<const int> offsets, const std::string& city,
                                                      const std::filesystem::path& out_dir);

ExportedPrediction load_prediction(const std::filesystem::path& path);

/// Back to (N, T*C, H, W) on the unit scale, in the order given.
nn::Tensor dequantize_predictions(std::span<const ExportedPrediction> files);

}  // namespace gridcast::harness
