#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gridcast/calendar.hpp"
#include "gridcast/features.hpp"
#include "gridcast/models/model.hpp"
#include "gridcast/synthetic.hpp"
#include "gridcast/training/trainer.hpp"

namespace gridcast {

void to_json(ordered_json& j, const FeatureConfig& c);
void from_json(const ordered_json& j, FeatureConfig& c);

}  // namespace gridcast

namespace gridcast::training {

struct DateRange {
  Date first;
  Date last;
  friend bool operator==(const DateRange&, const DateRange&) = default;
};

/// Where the traffic movies come from and which days form each split.
struct DataConfig {
  std::string source = "synthetic";  // synthetic | files
  std::string root;                  // files: dataset root holding <city>/...
  std::string city = "berlin";
  int height = 16;
  int width = 16;
  int frames_per_day = 288;
  std::uint64_t seed = 7;  // synthetic generator seed
  SyntheticConfig synthetic;
  std::string calendar_dir;  // empty: the shipped calendars
  DateRange train{Date::parse("2019-01-08"), Date::parse("2019-02-04")};
  DateRange validation{Date::parse("2019-02-05"), Date::parse("2019-02-11")};
  DateRange test{Date::parse("2019-02-12"), Date::parse("2019-02-18")};
  std::vector<int> anchors{47, 95, 143, 191, 239};
};

/// Everything a run depends on. Its JSON form is what the run hash covers.
struct ExperimentConfig {
  DataConfig data;
  FeatureConfig features;
  models::BackboneConfig model;
  OptimizerConfig optimizer;
  ScheduleConfig schedule;
  TrainConfig train;

  ordered_json to_json() const;
  /// Missing sections take defaults. ConfigError on malformed input.
  static ExperimentConfig from_json(const ordered_json& j);
  /// Model config with channel counts derived from the features and grid.
  models::BackboneConfig resolved_model(int feature_channels) const;
  std::string hash() const { return config_hash(to_json()); }
};

/// Per-city synthetic seed so that cities differ under one data seed.
std::uint64_t city_seed(std::uint64_t seed, const std::string& city);

/// Loaded or generated data plus the feature pipeline over it.
class ExperimentData {
 public:
  explicit ExperimentData(const ExperimentConfig& config);

  const FeaturePipeline& pipeline() const { return *pipeline_; }
  const DayProvider& provider() const { return *provider_; }
  std::shared_ptr<const HolidayCalendar> calendar() const { return calendar_; }
  const CityGridSpec& spec() const { return provider_->spec(); }

  /// Train samples use train-mode features, the others test-mode.
  SampleSet train_set(unsigned threads = 1) const;
  SampleSet validation_set(unsigned threads = 1) const;
  SampleSet test_set(unsigned threads = 1) const;

 private:
  SampleSet build(const DateRange& range, FeatureMode mode, unsigned threads) const;

  ExperimentConfig config_;
  std::unique_ptr<DayProvider> provider_;
  std::shared_ptr<const StaticTensor> static_map_;
  std::shared_ptr<const HolidayCalendar> calendar_;
  std::unique_ptr<FeaturePipeline> pipeline_;
};

/// Calendar for `city` from `dir` (empty: shipped); nullopt when no file exists.
std::optional<HolidayCalendar> find_calendar(const std::string& dir, const std::string& city);

struct ExperimentResult {
  RunRecord record;
  models::Model model;
  std::optional<std::filesystem::path> run_dir;
};

/// Builds data and model, trains, and when `runs_root` is set persists to
/// `<runs_root>/<hash>/`.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::optional<std::filesystem::path>& runs_root = std::nullopt,
                                unsigned threads = 1);

}  // namespace gridcast::training
