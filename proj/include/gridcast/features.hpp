#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gridcast/calendar.hpp"
#include "gridcast/container.hpp"
#include "gridcast/grid_data.hpp"

namespace gridcast {

/// Signed day offsets around the predicted day D.
struct DaySet {
  std::vector<int> offsets{-7, -3, -2, -1, 1, 2, 3, 7};
  /// ConfigError on duplicates or a zero offset.
  void validate() const;
};

/// D + offset for every offset, in offset order.
std::vector<Date> periodic_day_set(Date day, const DaySet& set = {});

/// Number of statistic planes per day: one mean per dynamic channel plus a validity fraction.
inline int daily_stat_count(const CityGridSpec& spec) { return spec.dynamic_channels + 1; }

struct EstimationMode {
  bool sampled = false;
  int blocks = 0;           // k in {1..4} when sampled
  std::vector<int> starts;  // block start frames
};

struct DailyStats {
  int num_stats = 0;
  int height = 0;
  int width = 0;
  Date source_date;
  EstimationMode mode;
  std::vector<float> values;  // (num_stats, H, W)

  std::span<const float> plane(int s) const {
    const auto n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    return std::span<const float>(values).subspan(static_cast<std::size_t>(s) * n, n);
  }
};

inline constexpr int kSampleBlockFrames = 12;
inline constexpr int kMaxSampleBlocks = 4;

/// Per-channel means over every frame, plus the fraction of frames with any nonzero channel.
DailyStats daily_stats_full(const DayTensor& day);

/// Same statistics over k uniform blocks of 12 frames, k uniform in {1..4}.
/// Block starts are uniform over the day and may overlap; a block starting within 11 frames of the
/// end wraps to frame 0, which makes the expectation equal the full-day statistics.
/// DomainError when frames_per_day < 48.
DailyStats daily_stats_sampled(const DayTensor& day, std::mt19937_64& rng);

enum class FeatureMode { train, test };
FeatureMode parse_feature_mode(std::string_view text);

struct PeriodicConfig {
  DaySet day_set;
  // Test mode samples future days always; past days only when this is set.
  bool sample_past_in_test = false;
};

/// Fill value per statistic for days the provider does not have.
using FillValues = std::vector<float>;

/// City-wide mean of each full-day statistic over `dates` (absent dates skipped);
/// zeros when none are available.
FillValues compute_fill_values(const DayProvider& provider, std::span<const Date> dates);

/// 8 x num_stats planes of (H, W), in day-set order. Memoizes full-day statistics.
class PeriodicFeatureBuilder {
 public:
  PeriodicFeatureBuilder(const DayProvider& provider, PeriodicConfig config, FillValues fill);

  std::vector<float> build(Date day, FeatureMode mode, std::mt19937_64& rng) const;
  int channels() const;
  const PeriodicConfig& config() const { return config_; }

 private:
  std::shared_ptr<const DailyStats> full_stats(const DayTensor& day) const;

  const DayProvider& provider_;
  PeriodicConfig config_;
  FillValues fill_;
  mutable std::mutex mutex_;
  mutable std::map<Date, std::shared_ptr<const DailyStats>> cache_;
};

std::vector<float> periodic_feature(Date day, const DayProvider& provider, FeatureMode mode, std::mt19937_64& rng,
                                    const PeriodicConfig& config = {}, const FillValues& fill = {});

struct ChannelRange {
  std::string tag;
  int begin = 0;
  int end = 0;  // exclusive
  int size() const { return end - begin; }
  friend bool operator==(const ChannelRange&, const ChannelRange&) = default;
};

/// Ordered map from channel ranges to the feature each came from.
class ChannelManifest {
 public:
  void append(std::string tag, int count);
  void append_manifest(const ChannelManifest& other);
  const std::vector<ChannelRange>& entries() const { return entries_; }
  int total() const { return entries_.empty() ? 0 : entries_.back().end; }
  /// ShapeError if no entry carries `tag`.
  const ChannelRange& find(std::string_view tag) const;
  bool contains(std::string_view tag) const;
  /// Ranges contiguous, disjoint, non-empty, covering [0, total).
  bool valid() const;

  ordered_json to_json() const;
  static ChannelManifest from_json(const ordered_json& j);

  friend bool operator==(const ChannelManifest&, const ChannelManifest&) = default;

 private:
  std::vector<ChannelRange> entries_;
};

enum class FeatureGroup { dynamic, static_map, periodic, time, weekday, holiday };
std::string_view to_string(FeatureGroup g);
FeatureGroup parse_feature_group(std::string_view text);

inline std::vector<FeatureGroup> default_feature_order() {
  return {FeatureGroup::dynamic, FeatureGroup::static_map, FeatureGroup::periodic,
          FeatureGroup::time,    FeatureGroup::weekday,    FeatureGroup::holiday};
}

struct FeatureBundle {
  int height = 0;
  int width = 0;
  std::vector<float> input;  // (channels, H, W)
  ChannelManifest manifest;

  int channels() const { return manifest.total(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  std::span<const float> plane(int c) const {
    return std::span<const float>(input).subspan(static_cast<std::size_t>(c) * plane_size(), plane_size());
  }
};

/// Pieces assemble_input concatenates. Groups absent from `order` are skipped
/// and their pointers may be null.
struct FeatureParts {
  const SampleWindow* window = nullptr;
  const StaticTensor* static_map = nullptr;
  std::span<const float> periodic;  // (num_periodic_planes, H, W)
  ChannelManifest periodic_manifest;
  TimeOfDayEncoding time;
  std::array<std::uint8_t, 7> weekday{};
  bool holiday = false;
};

/// Concatenates the groups in `order`. ShapeError when the pieces disagree on (H, W).
FeatureBundle assemble_input(const FeatureParts& parts, std::span<const FeatureGroup> order);
FeatureBundle assemble_input(const FeatureParts& parts);

/// Manifest for periodic planes: one "periodic[offset k]" range per day-set offset.
ChannelManifest periodic_manifest(const DaySet& set, int stats_per_day);

void store_bundle(const FeatureBundle& bundle, const std::filesystem::path& path, const ordered_json& extra = {});
FeatureBundle load_bundle(const std::filesystem::path& path);

struct FeatureConfig {
  std::vector<FeatureGroup> order = default_feature_order();
  PeriodicConfig periodic;
  std::vector<int> offsets = default_offsets();

  bool uses(FeatureGroup g) const;
};

/// Per-sample rng seed from (global seed, date, anchor frame).
std::uint64_t sample_seed(std::uint64_t global_seed, Date date, int t);

/// Windowing plus feature assembly for one city.
class FeaturePipeline {
 public:
  /// `calendar` may be null when the holiday group is disabled.
  FeaturePipeline(const DayProvider& provider, std::shared_ptr<const StaticTensor> static_map,
                  std::shared_ptr<const HolidayCalendar> calendar, FeatureConfig config, FillValues fill);

  struct Sample {
    FeatureBundle bundle;
    SampleWindow window;
  };

  Sample build(Date date, int t, FeatureMode mode, std::uint64_t global_seed) const;
  /// Channel count and manifest without building a sample.
  const ChannelManifest& manifest() const { return manifest_; }
  int channels() const { return manifest_.total(); }
  const FeatureConfig& config() const { return config_; }
  const CityGridSpec& spec() const { return provider_.spec(); }

 private:
  const DayProvider& provider_;
  std::shared_ptr<const StaticTensor> static_map_;
  std::shared_ptr<const HolidayCalendar> calendar_;
  FeatureConfig config_;
  PeriodicFeatureBuilder periodic_;
  ChannelManifest manifest_;
};

}  // namespace gridcast
