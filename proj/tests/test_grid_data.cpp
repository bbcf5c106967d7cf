#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "gridcast/error.hpp"
#include "gridcast/grid_data.hpp"
#include "gridcast/synthetic.hpp"

using namespace gridcast;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("gridcast_test_grid_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

CityGridSpec tiny(int h = 4, int w = 4, int frames = 288) { return CityGridSpec{"testville", h, w, frames, 9, 9}; }

DayTensor random_day(const CityGridSpec& spec, Date d, std::mt19937_64& rng) {
  std::vector<std::uint8_t> v(spec.day_size());
  for (auto& x : v) x = static_cast<std::uint8_t>(rng() & 0xff);
  return DayTensor(spec, d, std::move(v));
}

}  // namespace

TEST_CASE("unit scaling") {
  CHECK(scale_to_unit(0) == 0.0);
  CHECK(scale_to_unit(255) == 1.0);
  CHECK(scale_to_unit(51) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(quantize_from_unit(1.0) == 255);
  CHECK(quantize_from_unit(-0.3) == 0);
  CHECK(quantize_from_unit(1.7) == 255);
  CHECK(quantize_from_unit(0.2) == 51);
  CHECK(quantize_from_unit(std::nan("")) == 0);
  // Half away from zero: 0.5/255 sits exactly between 0 and 1.
  CHECK(quantize_from_unit(0.5 / 255.0) == 1);
  for (int k = 0; k < 256; ++k) CHECK(quantize_from_unit(scale_to_unit(static_cast<std::uint8_t>(k))) == k);
}

TEST_CASE("day tensor store/load round trip and header") {
  const auto dir = scratch("roundtrip");
  std::mt19937_64 rng(42);
  const auto spec = tiny();
  const auto day = random_day(spec, Date::parse("2019-03-04"), rng);
  const auto path = day_path(dir, spec.city_id, day.date());
  CHECK(path == dir / "testville" / "2019-03-04.grid");
  store_day(day, path);
  CHECK(load_day(path, spec) == day);

  std::ifstream in(path, std::ios::binary);
  std::string header;
  std::getline(in, header);
  CHECK(header == R"({"dtype":"u8","shape":[288,4,4,9],"order":"C","city":"testville","date":"2019-03-04"})");
  CHECK(fs::file_size(path) == header.size() + 1 + spec.day_size());
}

TEST_CASE("static tensor round trip") {
  const auto dir = scratch("static");
  const auto spec = tiny();
  const auto st = generate_synthetic_static(spec, 3);
  store_static(st, static_path(dir, spec.city_id));
  CHECK(load_static(static_path(dir, spec.city_id), spec) == st);
  const auto probed = probe_spec(dir, spec.city_id);
  CHECK(probed == spec);
}

TEST_CASE("truncated and oversized payloads are corruption errors") {
  const auto dir = scratch("corrupt");
  std::mt19937_64 rng(1);
  const auto spec = tiny();
  const auto day = random_day(spec, Date::parse("2019-01-01"), rng);
  const auto path = dir / "d.grid";
  store_day(day, path);
  const auto size = fs::file_size(path);
  fs::resize_file(path, size - 1);
  CHECK_THROWS_AS(load_day(path, spec), CorruptionError);
  fs::resize_file(path, size + 1);
  CHECK_THROWS_AS(load_day(path, spec), CorruptionError);
}

TEST_CASE("spec mismatches are format errors") {
  const auto dir = scratch("format");
  std::mt19937_64 rng(2);
  const auto spec = tiny();
  const auto path = dir / "d.grid";
  store_day(random_day(spec, Date::parse("2019-01-01"), rng), path);
  CHECK_THROWS_AS(load_day(path, tiny(8, 4)), FormatError);
  auto other_city = spec;
  other_city.city_id = "elsewhere";
  CHECK_THROWS_AS(load_day(path, other_city), FormatError);

  std::ofstream(dir / "bad.grid") << "not json\n";
  CHECK_THROWS_AS(load_day(dir / "bad.grid", spec), FormatError);
  CHECK_THROWS_AS(load_day(dir / "missing.grid", spec), IoError);
}

TEST_CASE("slice_window basic cases") {
  std::mt19937_64 rng(3);
  const auto spec = tiny(2, 2);
  const Date d = Date::parse("2019-05-05");
  const auto day = random_day(spec, d, rng);
  const std::vector<DayTensor> days{day};

  const std::vector<int> one{1};
  const auto w = slice_window(days, d, 11, one);
  REQUIRE(w.input.size() == 12 * spec.frame_size());
  for (int f = 0; f < 12; ++f) {
    for (std::size_t i = 0; i < spec.frame_size(); ++i) {
      CHECK(w.input[f * spec.frame_size() + i] == static_cast<float>(day.frame(f)[i]) / 255.0f);
    }
  }
  for (std::size_t i = 0; i < spec.frame_size(); ++i) CHECK(w.targets[i] == static_cast<float>(day.frame(12)[i]) / 255.0f);

  CHECK_THROWS_AS(slice_window(days, d, 5, one), WindowRangeError);
  CHECK_THROWS_AS(slice_window(days, d, 287, one), WindowRangeError);
  const std::vector<int> bad{0};
  CHECK_THROWS_AS(slice_window(days, d, 20, bad), WindowRangeError);
}

TEST_CASE("slice_window equals indexing into the concatenated days") {
  std::mt19937_64 rng(4);
  const auto spec = tiny(2, 3, 48);
  const Date d0 = Date::parse("2019-12-30");
  std::vector<DayTensor> days;
  for (int i = 0; i < 3; ++i) days.push_back(random_day(spec, d0.plus_days(i), rng));
  // Brute-force oracle: one long movie.
  std::vector<std::uint8_t> movie;
  for (const auto& day : days) movie.insert(movie.end(), day.values().begin(), day.values().end());
  const std::size_t fs = spec.frame_size();
  const std::vector<int> offsets{1, 2, 3, 6, 9, 12};
  for (int rel = 0; rel < 3; ++rel) {
    for (int t = 0; t < spec.frames_per_day; ++t) {
      const long g = rel * 48L + t;
      const bool ok = g - 11 >= 0 && g + 12 < 3 * 48;
      if (!ok) {
        CHECK_THROWS_AS(slice_window(days, d0.plus_days(rel), t, offsets), WindowRangeError);
        continue;
      }
      const auto w = slice_window(days, d0.plus_days(rel), t, offsets);
      for (int k = 0; k < 12; ++k) {
        const std::size_t base = static_cast<std::size_t>(g - 11 + k) * fs;
        for (std::size_t i = 0; i < fs; ++i) REQUIRE(w.input[k * fs + i] == static_cast<float>(movie[base + i]) / 255.0f);
      }
      for (std::size_t o = 0; o < offsets.size(); ++o) {
        const std::size_t base = static_cast<std::size_t>(g + offsets[o]) * fs;
        for (std::size_t i = 0; i < fs; ++i) REQUIRE(w.targets[o * fs + i] == static_cast<float>(movie[base + i]) / 255.0f);
      }
    }
  }
}

TEST_CASE("window at the last frame stitches into the next day") {
  std::mt19937_64 rng(5);
  const auto spec = tiny(2, 2);
  const Date d = Date::parse("2019-02-28");
  std::vector<DayTensor> days{random_day(spec, d, rng), random_day(spec, d.plus_days(1), rng)};
  const std::vector<int> one{1};
  const auto w = slice_window(days, d, 287, one);
  for (std::size_t i = 0; i < spec.frame_size(); ++i) CHECK(w.targets[i] == static_cast<float>(days[1].frame(0)[i]) / 255.0f);
}

TEST_CASE("synthetic generation is deterministic") {
  const auto spec = tiny(6, 5);
  const Date d = Date::parse("2019-07-01");
  CHECK(generate_synthetic_day(spec, d, 9) == generate_synthetic_day(spec, d, 9));
  CHECK_FALSE(generate_synthetic_day(spec, d, 9) == generate_synthetic_day(spec, d, 10));
  CHECK(generate_synthetic_static(spec, 9) == generate_synthetic_static(spec, 9));
}

TEST_CASE("no-road fraction 1 gives an all-zero day") {
  SyntheticConfig cfg;
  cfg.no_road_fraction = 1.0;
  const auto day = generate_synthetic_day(tiny(), Date::parse("2019-01-02"), 1, cfg);
  for (auto v : day.values()) REQUIRE(v == 0);
}

TEST_CASE("noise-free daily mean matches the closed-form sinusoid mean") {
  // Over a whole number of periods the sine averages to zero exactly, so the
  // daily mean of the signal is amplitude * gain * base * (1 + weekday term).
  SyntheticConfig cfg;
  cfg.noise_amplitude = 0.0;
  const auto spec = tiny(4, 4);
  const auto profile = synthetic_profile(spec, 17, cfg);
  for (const Date d : {Date::parse("2019-01-07"), Date::parse("2019-01-12"), Date::parse("2019-01-13")}) {
    const double week = cfg.weekday_modulation[d.weekday_index()];
    for (int h = 0; h < spec.height; ++h) {
      for (int w = 0; w < spec.width; ++w) {
        const auto& px = profile.pixels[static_cast<std::size_t>(h * spec.width + w)];
        for (int c = 0; c < spec.dynamic_channels; ++c) {
          double sum = 0.0;
          for (int t = 0; t < spec.frames_per_day; ++t) sum += synthetic_signal(profile, cfg, d, t, h, w, c);
          const double closed = px.road ? px.amplitude * profile.channel_gain[c] * cfg.base_level * (1.0 + week) : 0.0;
          CHECK(sum / spec.frames_per_day == doctest::Approx(closed).epsilon(1e-12));
        }
      }
    }
  }
  // Quantised day: the byte mean tracks the same value within half a step.
  const Date d = Date::parse("2019-01-08");
  const auto day = generate_synthetic_day(spec, d, 17, cfg);
  const double week = cfg.weekday_modulation[d.weekday_index()];
  for (int h = 0; h < spec.height; ++h) {
    for (int w = 0; w < spec.width; ++w) {
      const auto& px = profile.pixels[static_cast<std::size_t>(h * spec.width + w)];
      for (int c = 0; c < spec.dynamic_channels; ++c) {
        double sum = 0.0;
        for (int t = 0; t < spec.frames_per_day; ++t) sum += scale_to_unit(day.at(t, h, w, c));
        const double closed = px.road ? px.amplitude * profile.channel_gain[c] * cfg.base_level * (1.0 + week) : 0.0;
        CHECK(std::abs(sum / spec.frames_per_day - closed) <= 0.5 / 255.0 + 1e-12);
      }
    }
  }
}

TEST_CASE("holidays replace the weekday modulation") {
  SyntheticConfig cfg;
  cfg.noise_amplitude = 0.0;
  const Date d = Date::parse("2019-05-01");
  cfg.holidays.insert(d);
  const auto spec = tiny(3, 3);
  const auto profile = synthetic_profile(spec, 2, cfg);
  SyntheticConfig plain = cfg;
  plain.holidays.clear();
  for (int h = 0; h < 3; ++h) {
    for (int w = 0; w < 3; ++w) {
      const double a = synthetic_signal(profile, cfg, d, 100, h, w, 0);
      const double b = synthetic_signal(profile, plain, d, 100, h, w, 0);
      if (!profile.pixels[static_cast<std::size_t>(h * 3 + w)].road) continue;
      CHECK(a / b == doctest::Approx((1.0 + cfg.holiday_modulation) / (1.0 + cfg.weekday_modulation[d.weekday_index()])));
    }
  }
}

TEST_CASE("memory and file stores serve the same days") {
  const auto dir = scratch("stores");
  const auto spec = tiny();
  MemoryDayStore mem(spec);
  for (int i = 0; i < 3; ++i) {
    const auto day = generate_synthetic_day(spec, Date::parse("2019-04-01").plus_days(i), 5);
    store_day(day, day_path(dir, spec.city_id, day.date()));
    mem.insert(day);
  }
  FileDayStore files(dir, spec);
  for (int i = 0; i < 3; ++i) {
    const Date d = Date::parse("2019-04-01").plus_days(i);
    REQUIRE(files.find(d));
    CHECK(*files.find(d) == *mem.find(d));
  }
  CHECK(files.find(Date::parse("2019-04-10")) == nullptr);
  CHECK(mem.find(Date::parse("2019-04-10")) == nullptr);
}
