#include "gridcast/training/experiment.hpp"

#include <algorithm>

#include "gridcast/error.hpp"

namespace gridcast {

void to_json(ordered_json& j, const FeatureConfig& c) {
  ordered_json groups = ordered_json::array();
  for (auto g : c.order) groups.push_back(to_string(g));
  j = ordered_json{{"groups", groups},
                   {"periodic_offsets", c.periodic.day_set.offsets},
                   {"sample_past_in_test", c.periodic.sample_past_in_test},
                   {"offsets", c.offsets}};
}

void from_json(const ordered_json& j, FeatureConfig& c) {
  c = FeatureConfig{};
  try {
    if (j.contains("groups")) {
      c.order.clear();
      for (const auto& g : j["groups"]) {
        auto group = parse_feature_group(g.get<std::string>());
        if (std::find(c.order.begin(), c.order.end(), group) != c.order.end()) {
          throw ConfigError("feature group '" + g.get<std::string>() + "' listed twice");
        }
        c.order.push_back(group);
      }
      if (!c.uses(FeatureGroup::dynamic)) throw ConfigError("the dynamic feature group is required");
    }
    if (j.contains("periodic_offsets")) c.periodic.day_set.offsets = j["periodic_offsets"].get<std::vector<int>>();
    c.periodic.sample_past_in_test = j.value("sample_past_in_test", c.periodic.sample_past_in_test);
    if (j.contains("offsets")) c.offsets = j["offsets"].get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad features config: ") + e.what());
  }
  c.periodic.day_set.validate();
  if (c.offsets.empty()) throw ConfigError("features.offsets must not be empty");
  for (int o : c.offsets) {
    if (o <= 0) throw ConfigError("prediction offsets must be positive");
  }
}

}  // namespace gridcast

namespace gridcast::training {

namespace {

ordered_json range_json(const DateRange& r) { return ordered_json::array({r.first.iso(), r.last.iso()}); }

DateRange parse_range(const ordered_json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(std::string(what) + " must be [first, last]");
  DateRange r{Date::parse(j[0].get<std::string>()), Date::parse(j[1].get<std::string>())};
  if (r.last < r.first) throw ConfigError(std::string(what) + " ends before it starts");
  return r;
}

ordered_json synthetic_json(const SyntheticConfig& s) {
  return ordered_json{{"no_road_fraction", s.no_road_fraction},
                      {"base_level", s.base_level},
                      {"diurnal_amplitude", s.diurnal_amplitude},
                      {"weekday_modulation", s.weekday_modulation},
                      {"holiday_modulation", s.holiday_modulation},
                      {"noise_amplitude", s.noise_amplitude}};
}

SyntheticConfig parse_synthetic(const ordered_json& j) {
  SyntheticConfig s;
  s.no_road_fraction = j.value("no_road_fraction", s.no_road_fraction);
  s.base_level = j.value("base_level", s.base_level);
  s.diurnal_amplitude = j.value("diurnal_amplitude", s.diurnal_amplitude);
  if (j.contains("weekday_modulation")) s.weekday_modulation = j["weekday_modulation"].get<std::array<double, 7>>();
  s.holiday_modulation = j.value("holiday_modulation", s.holiday_modulation);
  s.noise_amplitude = j.value("noise_amplitude", s.noise_amplitude);
  return s;
}

ordered_json data_json(const DataConfig& d) {
  ordered_json j{{"source", d.source}, {"city", d.city}};
  if (d.source == "files") j["root"] = d.root;
  j["height"] = d.height;
  j["width"] = d.width;
  j["frames_per_day"] = d.frames_per_day;
  if (d.source == "synthetic") {
    j["seed"] = d.seed;
    j["synthetic"] = synthetic_json(d.synthetic);
  }
  j["calendar_dir"] = d.calendar_dir;
  j["train"] = range_json(d.train);
  j["validation"] = range_json(d.validation);
  j["test"] = range_json(d.test);
  j["anchors"] = d.anchors;
  return j;
}

DataConfig parse_data(const ordered_json& j) {
  DataConfig d;
  d.source = j.value("source", d.source);
  if (d.source != "synthetic" && d.source != "files") throw ConfigError("data.source must be synthetic or files");
  d.root = j.value("root", d.root);
  if (d.source == "files" && d.root.empty()) throw ConfigError("data.root is required for source=files");
  d.city = j.value("city", d.city);
  if (d.city.empty()) throw ConfigError("data.city must not be empty");
  d.height = j.value("height", d.height);
  d.width = j.value("width", d.width);
  d.frames_per_day = j.value("frames_per_day", d.frames_per_day);
  d.seed = j.value("seed", d.seed);
  if (j.contains("synthetic")) d.synthetic = parse_synthetic(j["synthetic"]);
  d.calendar_dir = j.value("calendar_dir", d.calendar_dir);
  if (j.contains("train")) d.train = parse_range(j["train"], "data.train");
  if (j.contains("validation")) d.validation = parse_range(j["validation"], "data.validation");
  if (j.contains("test")) d.test = parse_range(j["test"], "data.test");
  if (j.contains("anchors")) d.anchors = j["anchors"].get<std::vector<int>>();
  if (d.anchors.empty()) throw ConfigError("data.anchors must not be empty");
  for (int t : d.anchors) {
    if (t < 0 || t >= d.frames_per_day) throw ConfigError("anchor frame " + std::to_string(t) + " out of range");
  }
  return d;
}

}  // namespace

ordered_json ExperimentConfig::to_json() const {
  ordered_json j;
  j["data"] = data_json(data);
  j["features"] = features;
  j["model"] = model;
  // Channel counts follow from the features and grid; see resolved_model.
  j["model"].erase("in_channels");
  j["model"].erase("out_frames");
  j["model"].erase("out_channels");
  j["optimizer"] = optimizer;
  j["schedule"] = schedule;
  j["train"] = train;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const ordered_json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "data" && key != "features" && key != "model" && key != "optimizer" && key != "schedule" &&
        key != "train") {
      throw ConfigError("unknown config section '" + key + "'");
    }
  }
  ExperimentConfig c;
  try {
    if (j.contains("data")) c.data = parse_data(j["data"]);
    if (j.contains("features")) c.features = j["features"].get<FeatureConfig>();
    if (j.contains("model")) {
      // Channel counts are derived, so a stale in_channels is not an error here.
      auto m = j["model"];
      m.erase("in_channels");
      m.erase("out_frames");
      m.erase("out_channels");
      c.model = m.get<models::BackboneConfig>();
    }
    if (j.contains("optimizer")) c.optimizer = j["optimizer"].get<OptimizerConfig>();
    if (j.contains("schedule")) c.schedule = j["schedule"].get<ScheduleConfig>();
    if (j.contains("train")) c.train = j["train"].get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  if (c.train.include_validation) c.train.selection = Selection::final_epoch;
  return c;
}

models::BackboneConfig ExperimentConfig::resolved_model(int feature_channels) const {
  auto m = model;
  m.in_channels = feature_channels + m.geo_embedding.dim;
  m.out_frames = static_cast<int>(features.offsets.size());
  m.out_channels = CityGridSpec{}.dynamic_channels;
  m.validate();
  m.check_grid(data.height, data.width);
  return m;
}

std::uint64_t city_seed(std::uint64_t seed, const std::string& city) {
  std::uint64_t h = seed;
  for (unsigned char ch : city) h = hash_combine(h, ch);
  return h;
}

std::optional<HolidayCalendar> find_calendar(const std::string& dir, const std::string& city) {
  const std::filesystem::path base = dir.empty() ? shipped_calendar_dir() : std::filesystem::path(dir);
  const auto path = base / (city + ".json");
  if (!std::filesystem::exists(path)) return std::nullopt;
  return load_calendar(path);
}

ExperimentData::ExperimentData(const ExperimentConfig& config) : config_(config) {
  const auto& d = config_.data;
  Date first = std::min({d.train.first, d.validation.first, d.test.first});
  Date last = std::max({d.train.last, d.validation.last, d.test.last});

  auto calendar = find_calendar(d.calendar_dir, d.city);
  if (config_.features.uses(FeatureGroup::holiday)) {
    if (!calendar) throw CoverageError("no holiday calendar for city '" + d.city + "'");
    calendar->require_coverage(first, last);
  }
  if (calendar) calendar_ = std::make_shared<const HolidayCalendar>(std::move(*calendar));

  if (d.source == "synthetic") {
    CityGridSpec spec{d.city, d.height, d.width, d.frames_per_day, 9, 9};
    spec.validate();
    auto synth = d.synthetic;
    if (calendar_) synth.holidays = calendar_->holidays();
    const auto seed = city_seed(d.seed, d.city);
    // Periodic days reach a week out; windows may cross one midnight.
    int reach = 1;
    for (int o : config_.features.periodic.day_set.offsets) reach = std::max(reach, std::abs(o));
    auto store = std::make_unique<MemoryDayStore>(spec);
    for (Date day = first.plus_days(-reach - 1); day <= last.plus_days(reach + 1); day = day.plus_days(1)) {
      store->insert(generate_synthetic_day(spec, day, seed, synth));
    }
    static_map_ = std::make_shared<const StaticTensor>(generate_synthetic_static(spec, seed, synth));
    provider_ = std::move(store);
  } else {
    const auto spec = probe_spec(d.root, d.city, d.frames_per_day);
    if (spec.height != d.height || spec.width != d.width) {
      throw ShapeError("dataset grid " + std::to_string(spec.height) + "x" + std::to_string(spec.width) +
                       " differs from the configured grid");
    }
    static_map_ = std::make_shared<const StaticTensor>(load_static(static_path(d.root, d.city), spec));
    provider_ = std::make_unique<FileDayStore>(d.root, spec);
  }

  std::vector<Date> fill_dates;
  for (Date day = d.train.first; day <= d.train.last; day = day.plus_days(1)) fill_dates.push_back(day);
  auto fill = compute_fill_values(*provider_, fill_dates);
  pipeline_ = std::make_unique<FeaturePipeline>(*provider_, static_map_, calendar_, config_.features, std::move(fill));
}

SampleSet ExperimentData::build(const DateRange& range, FeatureMode mode, unsigned threads) const {
  return SampleSet(*pipeline_, sample_keys(range.first, range.last, config_.data.anchors), mode, config_.train.seed,
                   threads);
}

SampleSet ExperimentData::train_set(unsigned threads) const {
  return build(config_.data.train, FeatureMode::train, threads);
}
SampleSet ExperimentData::validation_set(unsigned threads) const {
  return build(config_.data.validation, FeatureMode::test, threads);
}
SampleSet ExperimentData::test_set(unsigned threads) const {
  return build(config_.data.test, FeatureMode::test, threads);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const std::optional<std::filesystem::path>& runs_root,
                                unsigned threads) {
  ExperimentData data(config);
  const auto train_samples = data.train_set(threads);
  const auto val_samples = data.validation_set(threads);
  models::Model model(config.resolved_model(data.pipeline().channels()), config.data.height, config.data.width,
                      hash_combine(config.train.seed, 0x6d6f64656cull));
  RunOptions options;
  options.config = config.to_json();
  std::optional<std::filesystem::path> dir;
  if (runs_root) {
    dir = *runs_root / config_hash(options.config);
    options.run_dir = dir;
  }
  auto record = train(model, train_samples, &val_samples, config.train, config.optimizer, config.schedule, options);
  return ExperimentResult{std::move(record), std::move(model), dir};
}

}  // namespace gridcast::training
