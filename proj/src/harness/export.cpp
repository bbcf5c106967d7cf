#include "gridcast/harness/export.hpp"

#include <cstdio>

#include "gridcast/error.hpp"
#include "gridcast/training/trainer.hpp"

namespace gridcast::harness {

std::filesystem::path prediction_path(const std::filesystem::path& out_dir, const std::string& city,
                                      const training::SampleKey& key) {
  char name[32];
  std::snprintf(name, sizeof name, "_t%03d.grid", key.t);
  return out_dir / city / (key.date.iso() + name);
}

std::vector<std::filesystem::path> export_predictions(const std::string& city, const nn::Tensor& predictions,
                                                      std::span<const training::SampleKey> keys,
                                                      std::span<const int> offsets, int channels,
                                                      const std::filesystem::path& out_dir) {
  std::vector<std::filesystem::path> written;
  if (keys.empty()) return written;
  const auto& shape = predictions.shape();
  const std::size_t frames = offsets.size();
  if (shape.size() != 4 || shape[0] != keys.size() || shape[1] != frames * static_cast<std::size_t>(channels)) {
    throw ShapeError("predictions " + nn::shape_string(shape) + " do not match " + std::to_string(keys.size()) +
                     " windows of " + std::to_string(frames) + "x" + std::to_string(channels) + " planes");
  }
  const std::size_t h = shape[2];
  const std::size_t w = shape[3];
  const std::size_t plane = h * w;
  const auto c = static_cast<std::size_t>(channels);
  const auto p = predictions.data();
  for (std::size_t n = 0; n < keys.size(); ++n) {
    std::vector<std::uint8_t> bytes(frames * plane * c);
    const double* src = p.data() + n * frames * c * plane;
    // (T*C, H, W) -> (T, H, W, C)
    for (std::size_t f = 0; f < frames; ++f) {
      for (std::size_t k = 0; k < plane; ++k) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          bytes[(f * plane + k) * c + ch] = quantize_from_unit(src[(f * c + ch) * plane + k]);
        }
      }
    }
    ordered_json header;
    header["dtype"] = "u8";
    header["shape"] = {frames, h, w, c};
    header["order"] = "C";
    header["city"] = city;
    header["date"] = keys[n].date.iso();
    header["t"] = keys[n].t;
    header["offsets"] = std::vector<int>(offsets.begin(), offsets.end());
    const auto path = prediction_path(out_dir, city, keys[n]);
    write_container(path, header, bytes);
    written.push_back(path);
  }
  return written;
}

std::vector<std::filesystem::path> export_predictions(std::span<models::Model* const> ensemble,
                                                      const training::SampleSet& windows,
                                                      std::span<const int> offsets, const std::string& city,
                                                      const std::filesystem::path& out_dir) {
  if (windows.empty()) return {};
  if (ensemble.empty()) throw ConfigError("export needs at least one model");
  std::vector<nn::Tensor> preds;
  for (auto* m : ensemble) preds.push_back(training::predict_all(*m, windows));
  const auto mean = training::ensemble_mean(preds);
  const int channels = windows.target_planes() / static_cast<int>(offsets.size());
  return export_predictions(city, mean, windows.keys(), offsets, channels, out_dir);
}

ExportedPrediction load_prediction(const std::filesystem::path& path) {
  const auto c = read_container(path);
  ExportedPrediction e;
  try {
    const auto& h = c.header;
    if (h.at("dtype").get<std::string>() != "u8" || h.at("order").get<std::string>() != "C") {
      throw FormatError(path.string() + ": unsupported dtype or order");
    }
    const auto shape = h.at("shape").get<std::vector<int>>();
    if (shape.size() != 4) throw FormatError(path.string() + ": prediction shape must have rank 4");
    e.city = h.at("city").get<std::string>();
    e.date = Date::parse(h.at("date").get<std::string>());
    e.t = h.at("t").get<int>();
    e.offsets = h.at("offsets").get<std::vector<int>>();
    if (e.offsets.size() != static_cast<std::size_t>(shape[0])) throw FormatError(path.string() + ": offsets/shape mismatch");
    e.height = shape[1];
    e.width = shape[2];
    e.channels = shape[3];
    if (c.payload.size() != shape_volume(h["shape"])) throw CorruptionError(path.string() + ": payload length mismatch");
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(path.string() + ": bad prediction header: " + ex.what());
  }
  e.values = c.payload;
  return e;
}

nn::Tensor dequantize_predictions(std::span<const ExportedPrediction> files) {
  if (files.empty()) return nn::Tensor({0});
  const auto& f0 = files.front();
  const std::size_t frames = f0.offsets.size();
  const auto c = static_cast<std::size_t>(f0.channels);
  const std::size_t plane = static_cast<std::size_t>(f0.height) * static_cast<std::size_t>(f0.width);
  nn::Tensor out({files.size(), frames * c, static_cast<std::size_t>(f0.height), static_cast<std::size_t>(f0.width)});
  auto o = out.data();
  for (std::size_t n = 0; n < files.size(); ++n) {
    const auto& f = files[n];
    if (f.offsets.size() != frames || f.height != f0.height || f.width != f0.width || f.channels != f0.channels) {
      throw ShapeError("exported predictions have mixed geometry");
    }
    double* dst = o.data() + n * frames * c * plane;
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t k = 0; k < plane; ++k) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          dst[(t * c + ch) * plane + k] = scale_to_unit(f.values[(t * plane + k) * c + ch]);
        }
      }
    }
  }
  return out;
}

}  // namespace gridcast::harness
