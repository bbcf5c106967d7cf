#include "gridcast/harness/score.hpp"

#include "gridcast/error.hpp"

namespace gridcast::harness {

ordered_json CityScore::to_json() const {
  return ordered_json{{"mse", mse},
                      {"elements", elements},
                      {"samples", samples},
                      {"per_channel", per_channel},
                      {"per_horizon", per_horizon}};
}

CityScore score(const nn::Tensor& predictions, const nn::Tensor& targets, int out_frames, int out_channels) {
  if (predictions.shape() != targets.shape()) {
    throw ShapeError("prediction shape " + nn::shape_string(predictions.shape()) + " differs from target shape " +
                     nn::shape_string(targets.shape()));
  }
  const auto& shape = predictions.shape();
  const auto p = predictions.data();
  const auto t = targets.data();

  std::size_t samples = shape.empty() ? 1 : shape[0];
  std::size_t frames = 1;
  std::size_t channels = 1;
  std::size_t plane = p.size();
  if (out_frames > 0) {
    if (shape.size() != 4 || out_channels <= 0 ||
        shape[1] != static_cast<std::size_t>(out_frames) * static_cast<std::size_t>(out_channels)) {
      throw ShapeError("expected (N, " + std::to_string(out_frames) + "*" + std::to_string(out_channels) +
                       ", H, W), got " + nn::shape_string(shape));
    }
    frames = static_cast<std::size_t>(out_frames);
    channels = static_cast<std::size_t>(out_channels);
    plane = shape[2] * shape[3];
  } else {
    samples = shape.empty() ? 1 : shape[0];
    plane = samples == 0 ? 0 : p.size() / samples;
  }

  CityScore s;
  s.samples = samples;
  s.elements = p.size();
  std::vector<double> ch_sum(channels, 0.0);
  std::vector<double> hz_sum(frames, 0.0);
  double total = 0.0;
  std::size_t i = 0;
  for (std::size_t n = 0; n < samples; ++n) {
    for (std::size_t f = 0; f < frames; ++f) {
      for (std::size_t c = 0; c < channels; ++c) {
        double cell = 0.0;
        for (std::size_t k = 0; k < plane; ++k, ++i) {
          const double d = p[i] - t[i];
          cell += d * d;
        }
        ch_sum[c] += cell;
        hz_sum[f] += cell;
        total += cell;
      }
    }
  }
  const std::size_t per_channel = samples * frames * plane;
  const std::size_t per_horizon = samples * channels * plane;
  s.mse = s.elements == 0 ? 0.0 : total / static_cast<double>(s.elements);
  for (double v : ch_sum) {
    s.per_channel.push_back(per_channel == 0 ? 0.0 : v / static_cast<double>(per_channel));
    s.channel_elements.push_back(per_channel);
  }
  for (double v : hz_sum) {
    s.per_horizon.push_back(per_horizon == 0 ? 0.0 : v / static_cast<double>(per_horizon));
    s.horizon_elements.push_back(per_horizon);
  }
  return s;
}

std::size_t EvalReport::sample_count() const {
  std::size_t n = 0;
  for (const auto& [_, s] : cities) n += s.samples;
  return n;
}

double EvalReport::overall_mse() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [_, s] : cities) {
    sum += s.mse * static_cast<double>(s.elements);
    n += s.elements;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

ordered_json EvalReport::to_json() const {
  ordered_json per_city = ordered_json::object();
  for (const auto& [city, s] : cities) per_city[city] = s.to_json();
  return ordered_json{{"overall_mse", overall_mse()}, {"sample_count", sample_count()}, {"cities", per_city}};
}

}  // namespace gridcast::harness
