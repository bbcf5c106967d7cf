#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <vector>

#include "gridcast/grid_data.hpp"

namespace gridcast {

/// Knobs for the synthetic traffic movie. Values are on the unit scale.
struct SyntheticConfig {
  double no_road_fraction = 0.25;
  double base_level = 0.45;
  double diurnal_amplitude = 0.25;
  // Multiplicative offset per weekday, Monday first.
  std::array<double, 7> weekday_modulation{0.10, 0.10, 0.10, 0.10, 0.15, -0.15, -0.25};
  // Holidays use this in place of the weekday modulation.
  double holiday_modulation = -0.30;
  std::set<Date> holidays;
  // Uniform noise in [-amplitude, +amplitude] added per element.
  double noise_amplitude = 0.05;
};

struct PixelProfile {
  bool road = false;
  double amplitude = 0.0;
  double phase = 0.0;
};

/// Seeded per-pixel and per-channel parameters behind the generator.
struct SyntheticProfile {
  CityGridSpec spec;
  std::vector<PixelProfile> pixels;  // H*W, row-major
  std::vector<double> channel_gain;
  std::vector<double> channel_phase;
};

SyntheticProfile synthetic_profile(const CityGridSpec& spec, std::uint64_t seed, const SyntheticConfig& config);

/// Noise-free unit-scale value; zero off-road.
double synthetic_signal(const SyntheticProfile& profile, const SyntheticConfig& config, Date date, int t, int h, int w,
                        int c);

/// Pure function of (spec, date, seed, config).
DayTensor generate_synthetic_day(const CityGridSpec& spec, Date date, std::uint64_t seed,
                                 const SyntheticConfig& config = {});
StaticTensor generate_synthetic_static(const CityGridSpec& spec, std::uint64_t seed, const SyntheticConfig& config = {});

/// Stateless 64-bit mixer used for counter-based noise and seed derivation.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value);
/// Uniform in [0, 1) from a hash.
double hash_unit(std::uint64_t h);

}  // namespace gridcast
