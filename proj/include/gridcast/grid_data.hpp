#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "gridcast/date.hpp"

namespace gridcast {

/// Number of history frames fed to every model input.
inline constexpr int kHistoryFrames = 12;

struct CityGridSpec {
  std::string city_id;
  int height = 32;
  int width = 32;
  int frames_per_day = 288;
  int dynamic_channels = 9;
  int static_channels = 9;

  /// Throws ConfigError on non-positive dimensions.
  void validate() const;
  std::size_t frame_size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(dynamic_channels);
  }
  std::size_t day_size() const { return frame_size() * static_cast<std::size_t>(frames_per_day); }
  std::size_t plane_size() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }

  friend bool operator==(const CityGridSpec&, const CityGridSpec&) = default;
};

/// One day of one city, shape (frames, H, W, channels), row-major. 0 means missing.
class DayTensor {
 public:
  DayTensor(CityGridSpec spec, Date date, std::vector<std::uint8_t> values);

  const CityGridSpec& spec() const { return spec_; }
  Date date() const { return date_; }
  std::span<const std::uint8_t> values() const { return values_; }
  std::span<const std::uint8_t> frame(int t) const {
    return std::span<const std::uint8_t>(values_).subspan(static_cast<std::size_t>(t) * spec_.frame_size(),
                                                          spec_.frame_size());
  }
  std::uint8_t at(int t, int h, int w, int c) const {
    return values_[((static_cast<std::size_t>(t) * spec_.height + h) * spec_.width + w) * spec_.dynamic_channels + c];
  }

  friend bool operator==(const DayTensor&, const DayTensor&) = default;

 private:
  CityGridSpec spec_;
  Date date_;
  std::vector<std::uint8_t> values_;
};

/// Per-city fixed channels, shape (channels, H, W).
class StaticTensor {
 public:
  StaticTensor(CityGridSpec spec, std::vector<std::uint8_t> values);

  const CityGridSpec& spec() const { return spec_; }
  std::span<const std::uint8_t> values() const { return values_; }
  std::span<const std::uint8_t> plane(int c) const {
    return std::span<const std::uint8_t>(values_).subspan(static_cast<std::size_t>(c) * spec_.plane_size(),
                                                          spec_.plane_size());
  }

  friend bool operator==(const StaticTensor&, const StaticTensor&) = default;

 private:
  CityGridSpec spec_;
  std::vector<std::uint8_t> values_;
};

/// Unit-scaled history and targets around an anchor frame.
struct SampleWindow {
  int height = 0;
  int width = 0;
  int channels = 0;
  Date date;
  int t = 0;  // frame index of the last input frame within `date`
  std::vector<int> offsets;
  std::vector<float> input;    // (12, H, W, C)
  std::vector<float> targets;  // (offsets.size(), H, W, C)

  std::size_t frame_size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
  }
};

inline const std::vector<int>& default_offsets() {
  static const std::vector<int> offsets{1, 2, 3, 6, 9, 12};
  return offsets;
}

double scale_to_unit(std::uint8_t raw);
/// round(clamp(x, 0, 1) * 255), half away from zero. NaN maps to 0.
std::uint8_t quantize_from_unit(double x);

void store_day(const DayTensor& day, const std::filesystem::path& path);
/// FormatError on header/spec mismatch, CorruptionError on short or long payload.
DayTensor load_day(const std::filesystem::path& path, const CityGridSpec& spec);

void store_static(const StaticTensor& tensor, const std::filesystem::path& path);
StaticTensor load_static(const std::filesystem::path& path, const CityGridSpec& spec);

std::filesystem::path day_path(const std::filesystem::path& root, const std::string& city, Date date);
std::filesystem::path static_path(const std::filesystem::path& root, const std::string& city);

/// Cuts a window out of `days`, stitching across midnight when consecutive
/// dates are present. Throws WindowRangeError when frames are missing.
SampleWindow slice_window(std::span<const DayTensor* const> days, Date date, int t, std::span<const int> offsets);
SampleWindow slice_window(std::span<const DayTensor> days, Date date, int t, std::span<const int> offsets);

/// Resolves dates to day tensors. nullptr means the day is absent; other
/// failures throw. Implementations must tolerate concurrent readers.
class DayProvider {
 public:
  virtual ~DayProvider() = default;
  virtual const CityGridSpec& spec() const = 0;
  virtual std::shared_ptr<const DayTensor> find(Date date) const = 0;
};

class MemoryDayStore final : public DayProvider {
 public:
  explicit MemoryDayStore(CityGridSpec spec) : spec_(std::move(spec)) {}
  void insert(DayTensor day);
  const CityGridSpec& spec() const override { return spec_; }
  std::shared_ptr<const DayTensor> find(Date date) const override;
  std::vector<Date> dates() const;

 private:
  CityGridSpec spec_;
  std::map<Date, std::shared_ptr<const DayTensor>> days_;
};

/// Lazily loads `<root>/<city>/<date>.grid`, caching what it has read.
class FileDayStore final : public DayProvider {
 public:
  FileDayStore(std::filesystem::path root, CityGridSpec spec);
  const CityGridSpec& spec() const override { return spec_; }
  std::shared_ptr<const DayTensor> find(Date date) const override;

 private:
  std::filesystem::path root_;
  CityGridSpec spec_;
  mutable std::mutex mutex_;
  mutable std::map<Date, std::shared_ptr<const DayTensor>> cache_;
};

/// Reads the spec back out of a stored static file (city, H, W, channels).
CityGridSpec probe_spec(const std::filesystem::path& root, const std::string& city, int frames_per_day = 288,
                        int dynamic_channels = 9);

}  // namespace gridcast
