#include "gridcast/grid_data.hpp"

#include <algorithm>
#include <cmath>

#include "gridcast/container.hpp"
#include "gridcast/error.hpp"
#include "gridcast/kernels/kernels.hpp"

namespace gridcast {
namespace fs = std::filesystem;

void CityGridSpec::validate() const {
  if (city_id.empty()) throw ConfigError("city id must be non-empty");
  if (height <= 0 || width <= 0 || frames_per_day <= 0 || dynamic_channels <= 0 || static_channels <= 0) {
    throw ConfigError("grid spec dimensions must be positive");
  }
}

DayTensor::DayTensor(CityGridSpec spec, Date date, std::vector<std::uint8_t> values)
    : spec_(std::move(spec)), date_(date), values_(std::move(values)) {
  spec_.validate();
  if (values_.size() != spec_.day_size()) {
    throw ShapeError("day tensor for " + date_.iso() + " has " + std::to_string(values_.size()) +
                     " values, expected " + std::to_string(spec_.day_size()));
  }
}

StaticTensor::StaticTensor(CityGridSpec spec, std::vector<std::uint8_t> values)
    : spec_(std::move(spec)), values_(std::move(values)) {
  spec_.validate();
  const auto expected = spec_.plane_size() * static_cast<std::size_t>(spec_.static_channels);
  if (values_.size() != expected) {
    throw ShapeError("static tensor has " + std::to_string(values_.size()) + " values, expected " +
                     std::to_string(expected));
  }
}

double scale_to_unit(std::uint8_t raw) { return static_cast<double>(raw) / 255.0; }

std::uint8_t quantize_from_unit(double x) {
  if (!(x > 0.0)) return 0;  // also NaN
  if (x >= 1.0) return 255;
  return static_cast<std::uint8_t>(std::round(x * 255.0));  // std::round is half-away-from-zero
}

namespace {

ordered_json grid_header(const std::string& city, const std::vector<int>& shape, const Date* date) {
  ordered_json h;
  h["dtype"] = "u8";
  h["shape"] = shape;
  h["order"] = "C";
  h["city"] = city;
  if (date != nullptr) h["date"] = date->iso();
  return h;
}

void check_header(const ordered_json& h, const fs::path& path, const std::string& city,
                  const std::vector<int>& expected_shape) {
  auto fail = [&](const std::string& why) { return FormatError(path.string() + ": " + why); };
  if (h.value("dtype", "") != "u8") throw fail("dtype must be \"u8\"");
  if (h.value("order", "") != "C") throw fail("order must be \"C\"");
  if (!h.contains("shape") || !h["shape"].is_array()) throw fail("missing shape");
  std::vector<int> shape;
  try {
    shape = h["shape"].get<std::vector<int>>();
  } catch (const nlohmann::json::exception&) {
    throw fail("shape must be integers");
  }
  if (shape != expected_shape) {
    std::string got, want;
    for (int d : shape) got += std::to_string(d) + ",";
    for (int d : expected_shape) want += std::to_string(d) + ",";
    throw fail("shape [" + got + "] does not match spec [" + want + "]");
  }
  if (!h.contains("city") || !h["city"].is_string() || h["city"].get<std::string>() != city) {
    throw fail("city does not match spec '" + city + "'");
  }
}

void check_payload(const Container& c, std::size_t expected, const fs::path& path) {
  if (c.payload.size() != expected) {
    throw CorruptionError(path.string() + ": payload has " + std::to_string(c.payload.size()) + " bytes, header implies " +
                          std::to_string(expected));
  }
}

std::vector<int> day_shape(const CityGridSpec& s) { return {s.frames_per_day, s.height, s.width, s.dynamic_channels}; }
std::vector<int> static_shape(const CityGridSpec& s) { return {s.static_channels, s.height, s.width}; }

}  // namespace

void store_day(const DayTensor& day, const fs::path& path) {
  const auto date = day.date();
  write_container(path, grid_header(day.spec().city_id, day_shape(day.spec()), &date), day.values());
}

DayTensor load_day(const fs::path& path, const CityGridSpec& spec) {
  spec.validate();
  auto c = read_container(path);
  check_header(c.header, path, spec.city_id, day_shape(spec));
  if (!c.header.contains("date") || !c.header["date"].is_string()) throw FormatError(path.string() + ": missing date");
  Date date;
  try {
    date = Date::parse(c.header["date"].get<std::string>());
  } catch (const ParseError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  check_payload(c, spec.day_size(), path);
  return DayTensor(spec, date, std::move(c.payload));
}

void store_static(const StaticTensor& tensor, const fs::path& path) {
  write_container(path, grid_header(tensor.spec().city_id, static_shape(tensor.spec()), nullptr), tensor.values());
}

StaticTensor load_static(const fs::path& path, const CityGridSpec& spec) {
  spec.validate();
  auto c = read_container(path);
  check_header(c.header, path, spec.city_id, static_shape(spec));
  check_payload(c, spec.plane_size() * static_cast<std::size_t>(spec.static_channels), path);
  return StaticTensor(spec, std::move(c.payload));
}

fs::path day_path(const fs::path& root, const std::string& city, Date date) {
  return root / city / (date.iso() + ".grid");
}

fs::path static_path(const fs::path& root, const std::string& city) { return root / city / "static.grid"; }

SampleWindow slice_window(std::span<const DayTensor* const> days, Date date, int t, std::span<const int> offsets) {
  if (days.empty()) throw WindowRangeError("no day tensors supplied");
  const auto& spec = days.front()->spec();
  const int frames = spec.frames_per_day;
  if (t < 0 || t >= frames) throw WindowRangeError("anchor frame " + std::to_string(t) + " outside day");

  auto day_at = [&](int rel) -> const DayTensor* {
    const Date want = date.plus_days(rel);
    for (const auto* d : days) {
      if (d->date() == want) {
        if (!(d->spec() == spec)) throw ShapeError("day tensors in one window must share a grid spec");
        return d;
      }
    }
    return nullptr;
  };
  // Global frame index g relative to frame 0 of `date`.
  auto frame_at = [&](long g) -> std::span<const std::uint8_t> {
    const long rel = g >= 0 ? g / frames : -((-g + frames - 1) / frames);
    const long local = g - rel * frames;
    const auto* d = day_at(static_cast<int>(rel));
    if (d == nullptr) {
      throw WindowRangeError("window around " + date.iso() + " frame " + std::to_string(t) + " needs day " +
                             date.plus_days(static_cast<int>(rel)).iso() + " which is not available");
    }
    return d->frame(static_cast<int>(local));
  };

  SampleWindow w;
  w.height = spec.height;
  w.width = spec.width;
  w.channels = spec.dynamic_channels;
  w.date = date;
  w.t = t;
  w.offsets.assign(offsets.begin(), offsets.end());
  const std::size_t fs = spec.frame_size();
  for (int off : offsets) {
    if (off <= 0) throw WindowRangeError("target offsets must be positive");
  }
  // Resolve every frame before allocating output so errors leave nothing half-built.
  std::vector<std::span<const std::uint8_t>> in_frames, out_frames;
  for (int k = kHistoryFrames - 1; k >= 0; --k) in_frames.push_back(frame_at(static_cast<long>(t) - k));
  for (int off : offsets) out_frames.push_back(frame_at(static_cast<long>(t) + off));

  w.input.resize(in_frames.size() * fs);
  w.targets.resize(out_frames.size() * fs);
  for (std::size_t i = 0; i < in_frames.size(); ++i) kernels::u8_to_unit(fs, in_frames[i].data(), w.input.data() + i * fs);
  for (std::size_t i = 0; i < out_frames.size(); ++i)
    kernels::u8_to_unit(fs, out_frames[i].data(), w.targets.data() + i * fs);
  return w;
}

SampleWindow slice_window(std::span<const DayTensor> days, Date date, int t, std::span<const int> offsets) {
  std::vector<const DayTensor*> ptrs;
  ptrs.reserve(days.size());
  for (const auto& d : days) ptrs.push_back(&d);
  return slice_window(std::span<const DayTensor* const>(ptrs), date, t, offsets);
}

void MemoryDayStore::insert(DayTensor day) {
  if (!(day.spec() == spec_)) throw ShapeError("day tensor spec does not match store spec");
  const auto d = day.date();
  days_[d] = std::make_shared<const DayTensor>(std::move(day));
}

std::shared_ptr<const DayTensor> MemoryDayStore::find(Date date) const {
  auto it = days_.find(date);
  return it == days_.end() ? nullptr : it->second;
}

std::vector<Date> MemoryDayStore::dates() const {
  std::vector<Date> out;
  for (const auto& [d, _] : days_) out.push_back(d);
  return out;
}

FileDayStore::FileDayStore(fs::path root, CityGridSpec spec) : root_(std::move(root)), spec_(std::move(spec)) {
  spec_.validate();
}

std::shared_ptr<const DayTensor> FileDayStore::find(Date date) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(date); it != cache_.end()) return it->second;
  }
  const auto path = day_path(root_, spec_.city_id, date);
  std::shared_ptr<const DayTensor> day;
  if (fs::exists(path)) day = std::make_shared<const DayTensor>(load_day(path, spec_));
  std::lock_guard lock(mutex_);
  cache_.emplace(date, day);
  return day;
}

CityGridSpec probe_spec(const fs::path& root, const std::string& city, int frames_per_day, int dynamic_channels) {
  const auto path = static_path(root, city);
  auto c = read_container(path);
  const auto& h = c.header;
  if (!h.contains("shape") || !h["shape"].is_array() || h["shape"].size() != 3) {
    throw FormatError(path.string() + ": static tensor shape must be [C,H,W]");
  }
  CityGridSpec spec;
  spec.city_id = city;
  spec.static_channels = h["shape"][0].get<int>();
  spec.height = h["shape"][1].get<int>();
  spec.width = h["shape"][2].get<int>();
  spec.frames_per_day = frames_per_day;
  spec.dynamic_channels = dynamic_channels;
  spec.validate();
  return spec;
}

}  // namespace gridcast
