#include "gridcast/synthetic.hpp"

#include <cmath>
#include <numbers>

namespace gridcast {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) { return mix64(seed ^ mix64(value)); }

double hash_unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

namespace {

enum Stream : std::uint64_t { kRoad = 1, kAmplitude, kPhase, kGain, kChannelPhase, kNoise, kStatic };

double stream_unit(std::uint64_t seed, Stream s, std::uint64_t a, std::uint64_t b = 0) {
  return hash_unit(hash_combine(hash_combine(hash_combine(seed, s), a), b));
}

}  // namespace

SyntheticProfile synthetic_profile(const CityGridSpec& spec, std::uint64_t seed, const SyntheticConfig& config) {
  spec.validate();
  SyntheticProfile p;
  p.spec = spec;
  p.pixels.resize(spec.plane_size());
  for (std::size_t i = 0; i < p.pixels.size(); ++i) {
    auto& px = p.pixels[i];
    px.road = stream_unit(seed, kRoad, i) >= config.no_road_fraction;
    px.amplitude = 0.4 + 0.6 * stream_unit(seed, kAmplitude, i);
    px.phase = 0.5 * (stream_unit(seed, kPhase, i) - 0.5);
  }
  for (int c = 0; c < spec.dynamic_channels; ++c) {
    p.channel_gain.push_back(0.5 + 0.5 * stream_unit(seed, kGain, static_cast<std::uint64_t>(c)));
    p.channel_phase.push_back(std::numbers::pi * (stream_unit(seed, kChannelPhase, static_cast<std::uint64_t>(c)) - 0.5));
  }
  return p;
}

double synthetic_signal(const SyntheticProfile& profile, const SyntheticConfig& config, Date date, int t, int h, int w,
                        int c) {
  const auto& spec = profile.spec;
  const auto& px = profile.pixels[static_cast<std::size_t>(h) * spec.width + w];
  if (!px.road) return 0.0;
  const double theta = 2.0 * std::numbers::pi * t / spec.frames_per_day + px.phase + profile.channel_phase[c];
  const double week = config.holidays.contains(date) ? config.holiday_modulation
                                                     : config.weekday_modulation[date.weekday_index()];
  return px.amplitude * profile.channel_gain[c] * (config.base_level + config.diurnal_amplitude * std::sin(theta)) *
         (1.0 + week);
}

DayTensor generate_synthetic_day(const CityGridSpec& spec, Date date, std::uint64_t seed,
                                 const SyntheticConfig& config) {
  const auto profile = synthetic_profile(spec, seed, config);
  std::vector<std::uint8_t> values(spec.day_size());
  const auto day_key = static_cast<std::uint64_t>(date.serial());
  std::size_t idx = 0;
  for (int t = 0; t < spec.frames_per_day; ++t) {
    for (int h = 0; h < spec.height; ++h) {
      for (int w = 0; w < spec.width; ++w) {
        const bool road = profile.pixels[static_cast<std::size_t>(h) * spec.width + w].road;
        for (int c = 0; c < spec.dynamic_channels; ++c, ++idx) {
          if (!road) continue;
          double v = synthetic_signal(profile, config, date, t, h, w, c);
          if (config.noise_amplitude > 0.0) {
            const double u = stream_unit(seed, kNoise, hash_combine(day_key, static_cast<std::uint64_t>(t)), idx);
            v += config.noise_amplitude * (2.0 * u - 1.0);
          }
          values[idx] = quantize_from_unit(v);
        }
      }
    }
  }
  return DayTensor(spec, date, std::move(values));
}

StaticTensor generate_synthetic_static(const CityGridSpec& spec, std::uint64_t seed, const SyntheticConfig& config) {
  const auto profile = synthetic_profile(spec, seed, config);
  const std::size_t plane = spec.plane_size();
  std::vector<std::uint8_t> values(plane * static_cast<std::size_t>(spec.static_channels));
  for (int c = 0; c < spec.static_channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      const auto& px = profile.pixels[i];
      const double u = stream_unit(seed, kStatic, static_cast<std::uint64_t>(c), i);
      double v = 0.0;
      if (c == 0) {
        v = px.road ? 1.0 : 0.0;  // road cells
      } else if (c == 1) {
        v = px.road ? 0.5 * px.amplitude + 0.5 * u : 0.0;  // junction density, loosely tied to demand
      } else {
        v = u < 0.7 ? 0.0 : u;  // sparse points of interest
      }
      values[static_cast<std::size_t>(c) * plane + i] = quantize_from_unit(v);
    }
  }
  return StaticTensor(spec, std::move(values));
}

}  // namespace gridcast
