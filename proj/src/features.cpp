#include "gridcast/features.hpp"

#include <algorithm>
#include <cstring>
#include <set>

#include "gridcast/error.hpp"
#include "gridcast/kernels/kernels.hpp"
#include "gridcast/synthetic.hpp"

namespace gridcast {

void DaySet::validate() const {
  std::set<int> seen;
  for (int o : offsets) {
    if (o == 0) throw ConfigError("day set must not contain offset 0");
    if (!seen.insert(o).second) throw ConfigError("day set contains duplicate offset " + std::to_string(o));
  }
}

std::vector<Date> periodic_day_set(Date day, const DaySet& set) {
  set.validate();
  std::vector<Date> out;
  out.reserve(set.offsets.size());
  for (int o : set.offsets) out.push_back(day.plus_days(o));
  return out;
}

namespace {

// Accumulates channel sums and nonzero counts over a list of frames.
DailyStats stats_over_frames(const DayTensor& day, std::span<const int> frames) {
  const auto& spec = day.spec();
  const std::size_t plane = spec.plane_size();
  const int channels = spec.dynamic_channels;
  std::vector<std::uint64_t> sums(plane * static_cast<std::size_t>(channels), 0);
  std::vector<std::uint32_t> valid(plane, 0);
  for (int t : frames) {
    const auto f = day.frame(t);
    for (std::size_t p = 0; p < plane; ++p) {
      const std::uint8_t* px = f.data() + p * static_cast<std::size_t>(channels);
      bool any = false;
      for (int c = 0; c < channels; ++c) {
        sums[static_cast<std::size_t>(c) * plane + p] += px[c];
        any = any || px[c] != 0;
      }
      valid[p] += any ? 1U : 0U;
    }
  }
  DailyStats out;
  out.num_stats = channels + 1;
  out.height = spec.height;
  out.width = spec.width;
  out.source_date = day.date();
  out.values.resize(static_cast<std::size_t>(out.num_stats) * plane);
  const double n = static_cast<double>(frames.size());
  for (std::size_t i = 0; i < sums.size(); ++i) out.values[i] = static_cast<float>(static_cast<double>(sums[i]) / (255.0 * n));
  float* validity = out.values.data() + static_cast<std::size_t>(channels) * plane;
  for (std::size_t p = 0; p < plane; ++p) validity[p] = static_cast<float>(static_cast<double>(valid[p]) / n);
  return out;
}

}  // namespace

DailyStats daily_stats_full(const DayTensor& day) {
  std::vector<int> frames(static_cast<std::size_t>(day.spec().frames_per_day));
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i] = static_cast<int>(i);
  return stats_over_frames(day, frames);
}

DailyStats daily_stats_sampled(const DayTensor& day, std::mt19937_64& rng) {
  const int frames_per_day = day.spec().frames_per_day;
  if (frames_per_day < kSampleBlockFrames * kMaxSampleBlocks) {
    throw DomainError("sampled daily statistics need at least 48 frames per day");
  }
  std::uniform_int_distribution<int> blocks_dist(1, kMaxSampleBlocks);
  // Blocks wrap around the day, so every frame is covered by exactly kSampleBlockFrames starts and
  // the estimator is unbiased for the full-day statistics.
  std::uniform_int_distribution<int> start_dist(0, frames_per_day - 1);
  EstimationMode mode;
  mode.sampled = true;
  mode.blocks = blocks_dist(rng);
  std::vector<int> frames;
  for (int b = 0; b < mode.blocks; ++b) {
    const int s = start_dist(rng);
    mode.starts.push_back(s);
    for (int j = 0; j < kSampleBlockFrames; ++j) frames.push_back((s + j) % frames_per_day);
  }
  auto out = stats_over_frames(day, frames);
  out.mode = std::move(mode);
  return out;
}

FeatureMode parse_feature_mode(std::string_view text) {
  if (text == "train") return FeatureMode::train;
  if (text == "test") return FeatureMode::test;
  throw ConfigError("unknown feature mode '" + std::string(text) + "' (expected train|test)");
}

FillValues compute_fill_values(const DayProvider& provider, std::span<const Date> dates) {
  const int stats = daily_stat_count(provider.spec());
  FillValues fill(static_cast<std::size_t>(stats), 0.0f);
  std::vector<double> acc(static_cast<std::size_t>(stats), 0.0);
  std::size_t days = 0;
  for (const Date d : dates) {
    const auto day = provider.find(d);
    if (!day) continue;
    const auto s = daily_stats_full(*day);
    const std::size_t plane = provider.spec().plane_size();
    for (int k = 0; k < stats; ++k) {
      double sum = 0.0;
      for (float v : s.plane(k)) sum += v;
      acc[static_cast<std::size_t>(k)] += sum / static_cast<double>(plane);
    }
    ++days;
  }
  if (days > 0) {
    for (std::size_t k = 0; k < acc.size(); ++k) fill[k] = static_cast<float>(acc[k] / static_cast<double>(days));
  }
  return fill;
}

PeriodicFeatureBuilder::PeriodicFeatureBuilder(const DayProvider& provider, PeriodicConfig config, FillValues fill)
    : provider_(provider), config_(std::move(config)), fill_(std::move(fill)) {
  config_.day_set.validate();
  const auto stats = static_cast<std::size_t>(daily_stat_count(provider_.spec()));
  if (fill_.empty()) fill_.assign(stats, 0.0f);
  if (fill_.size() != stats) throw ConfigError("fill values must have one entry per daily statistic");
}

int PeriodicFeatureBuilder::channels() const {
  return static_cast<int>(config_.day_set.offsets.size()) * daily_stat_count(provider_.spec());
}

std::shared_ptr<const DailyStats> PeriodicFeatureBuilder::full_stats(const DayTensor& day) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(day.date()); it != cache_.end()) return it->second;
  }
  auto stats = std::make_shared<const DailyStats>(daily_stats_full(day));
  std::lock_guard lock(mutex_);
  return cache_.emplace(day.date(), std::move(stats)).first->second;
}

std::vector<float> PeriodicFeatureBuilder::build(Date day, FeatureMode mode, std::mt19937_64& rng) const {
  const auto& spec = provider_.spec();
  const std::size_t plane = spec.plane_size();
  const int stats = daily_stat_count(spec);
  const std::size_t block = static_cast<std::size_t>(stats) * plane;
  std::vector<float> out(config_.day_set.offsets.size() * block);
  for (std::size_t i = 0; i < config_.day_set.offsets.size(); ++i) {
    const int offset = config_.day_set.offsets[i];
    float* dst = out.data() + i * block;
    const auto tensor = provider_.find(day.plus_days(offset));
    if (!tensor) {
      for (int s = 0; s < stats; ++s) std::fill_n(dst + static_cast<std::size_t>(s) * plane, plane, fill_[static_cast<std::size_t>(s)]);
      continue;
    }
    const bool sample = mode == FeatureMode::train || offset > 0 || config_.sample_past_in_test;
    if (sample) {
      const auto s = daily_stats_sampled(*tensor, rng);
      std::copy(s.values.begin(), s.values.end(), dst);
    } else {
      const auto s = full_stats(*tensor);
      std::copy(s->values.begin(), s->values.end(), dst);
    }
  }
  return out;
}

std::vector<float> periodic_feature(Date day, const DayProvider& provider, FeatureMode mode, std::mt19937_64& rng,
                                    const PeriodicConfig& config, const FillValues& fill) {
  return PeriodicFeatureBuilder(provider, config, fill).build(day, mode, rng);
}

void ChannelManifest::append(std::string tag, int count) {
  if (count <= 0) return;
  const int begin = total();
  entries_.push_back({std::move(tag), begin, begin + count});
}

void ChannelManifest::append_manifest(const ChannelManifest& other) {
  for (const auto& e : other.entries_) append(e.tag, e.size());
}

const ChannelRange& ChannelManifest::find(std::string_view tag) const {
  for (const auto& e : entries_) {
    if (e.tag == tag) return e;
  }
  throw ShapeError("manifest has no entry '" + std::string(tag) + "'");
}

bool ChannelManifest::contains(std::string_view tag) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const ChannelRange& e) { return e.tag == tag; });
}

bool ChannelManifest::valid() const {
  int expect = 0;
  std::set<std::string> tags;
  for (const auto& e : entries_) {
    if (e.begin != expect || e.end <= e.begin) return false;
    if (!tags.insert(e.tag).second) return false;
    expect = e.end;
  }
  return true;
}

ordered_json ChannelManifest::to_json() const {
  auto arr = ordered_json::array();
  for (const auto& e : entries_) arr.push_back(ordered_json{{"tag", e.tag}, {"begin", e.begin}, {"end", e.end}});
  return arr;
}

ChannelManifest ChannelManifest::from_json(const ordered_json& j) {
  if (!j.is_array()) throw FormatError("manifest must be an array");
  ChannelManifest m;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("tag") || !e.contains("begin") || !e.contains("end")) {
      throw FormatError("manifest entries need tag/begin/end");
    }
    m.entries_.push_back({e["tag"].get<std::string>(), e["begin"].get<int>(), e["end"].get<int>()});
  }
  if (!m.valid()) throw FormatError("manifest ranges must be contiguous and disjoint");
  return m;
}

std::string_view to_string(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::dynamic:
      return "dynamic";
    case FeatureGroup::static_map:
      return "static";
    case FeatureGroup::periodic:
      return "periodic";
    case FeatureGroup::time:
      return "time";
    case FeatureGroup::weekday:
      return "weekday";
    case FeatureGroup::holiday:
      return "holiday";
  }
  return "?";
}

FeatureGroup parse_feature_group(std::string_view text) {
  for (auto g : default_feature_order()) {
    if (to_string(g) == text) return g;
  }
  throw ConfigError("unknown feature group '" + std::string(text) + "'");
}

ChannelManifest periodic_manifest(const DaySet& set, int stats_per_day) {
  ChannelManifest m;
  for (int o : set.offsets) m.append("periodic[offset " + std::string(o > 0 ? "+" : "") + std::to_string(o) + "]", stats_per_day);
  return m;
}

FeatureBundle assemble_input(const FeatureParts& parts, std::span<const FeatureGroup> order) {
  int height = -1;
  int width = -1;
  auto agree = [&](int h, int w, const char* what) {
    if (height < 0) {
      height = h;
      width = w;
    } else if (h != height || w != width) {
      throw ShapeError(std::string(what) + " grid (" + std::to_string(h) + "x" + std::to_string(w) +
                       ") does not match (" + std::to_string(height) + "x" + std::to_string(width) + ")");
    }
  };
  std::set<FeatureGroup> seen;
  for (auto g : order) {
    if (!seen.insert(g).second) throw ConfigError("feature group listed twice: " + std::string(to_string(g)));
    switch (g) {
      case FeatureGroup::dynamic:
        if (parts.window == nullptr) throw ShapeError("dynamic group requested without a window");
        agree(parts.window->height, parts.window->width, "window");
        break;
      case FeatureGroup::static_map:
        if (parts.static_map == nullptr) throw ShapeError("static group requested without a static tensor");
        agree(parts.static_map->spec().height, parts.static_map->spec().width, "static");
        break;
      default:
        break;
    }
  }
  if (height < 0) {
    if (parts.window != nullptr) {
      height = parts.window->height;
      width = parts.window->width;
    } else {
      throw ShapeError("cannot infer grid size: no dynamic or static inputs");
    }
  }
  const std::size_t plane = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);

  FeatureBundle b;
  b.height = height;
  b.width = width;
  auto push_constant = [&](float v) { b.input.insert(b.input.end(), plane, v); };

  for (auto g : order) {
    switch (g) {
      case FeatureGroup::dynamic: {
        const auto& w = *parts.window;
        const int frames = static_cast<int>(w.input.size() / w.frame_size());
        for (int f = 0; f < frames; ++f) {
          const float* src = w.input.data() + static_cast<std::size_t>(f) * w.frame_size();
          for (int c = 0; c < w.channels; ++c) {
            for (std::size_t p = 0; p < plane; ++p) b.input.push_back(src[p * static_cast<std::size_t>(w.channels) + c]);
          }
          b.manifest.append("dynamic[frame " + std::to_string(f - frames + 1) + "]", w.channels);
        }
        break;
      }
      case FeatureGroup::static_map: {
        const auto& s = *parts.static_map;
        const auto values = s.values();
        const auto old = b.input.size();
        b.input.resize(old + values.size());
        kernels::u8_to_unit(values.size(), values.data(), b.input.data() + old);
        b.manifest.append("static", s.spec().static_channels);
        break;
      }
      case FeatureGroup::periodic: {
        const auto planes = parts.periodic_manifest.total();
        if (parts.periodic.size() != static_cast<std::size_t>(planes) * plane) {
          throw ShapeError("periodic planes do not match their manifest / grid size");
        }
        b.input.insert(b.input.end(), parts.periodic.begin(), parts.periodic.end());
        b.manifest.append_manifest(parts.periodic_manifest);
        break;
      }
      case FeatureGroup::time:
        push_constant(static_cast<float>(parts.time.cos_component));
        push_constant(static_cast<float>(parts.time.sin_component));
        b.manifest.append("time", 2);
        break;
      case FeatureGroup::weekday:
        for (auto v : parts.weekday) push_constant(static_cast<float>(v));
        b.manifest.append("weekday", 7);
        break;
      case FeatureGroup::holiday:
        push_constant(parts.holiday ? 1.0f : 0.0f);
        b.manifest.append("holiday", 1);
        break;
    }
  }
  return b;
}

FeatureBundle assemble_input(const FeatureParts& parts) {
  const auto order = default_feature_order();
  return assemble_input(parts, order);
}

void store_bundle(const FeatureBundle& bundle, const std::filesystem::path& path, const ordered_json& extra) {
  ordered_json h;
  h["dtype"] = "f32";
  h["shape"] = {bundle.channels(), bundle.height, bundle.width};
  h["order"] = "C";
  if (extra.is_object()) {
    for (const auto& [k, v] : extra.items()) h[k] = v;
  }
  h["manifest"] = bundle.manifest.to_json();
  std::vector<std::uint8_t> bytes(bundle.input.size() * sizeof(float));
  std::memcpy(bytes.data(), bundle.input.data(), bytes.size());
  write_container(path, h, bytes);
}

FeatureBundle load_bundle(const std::filesystem::path& path) {
  auto c = read_container(path);
  if (c.header.value("dtype", "") != "f32") throw FormatError(path.string() + ": bundle dtype must be f32");
  if (!c.header.contains("shape") || c.header["shape"].size() != 3) throw FormatError(path.string() + ": bad shape");
  FeatureBundle b;
  const int channels = c.header["shape"][0].get<int>();
  b.height = c.header["shape"][1].get<int>();
  b.width = c.header["shape"][2].get<int>();
  b.manifest = ChannelManifest::from_json(c.header.value("manifest", ordered_json::array()));
  if (b.manifest.total() != channels) throw FormatError(path.string() + ": manifest does not cover the channel count");
  const std::size_t expected = shape_volume(c.header["shape"]) * sizeof(float);
  if (c.payload.size() != expected) throw CorruptionError(path.string() + ": bundle payload size mismatch");
  b.input.resize(expected / sizeof(float));
  std::memcpy(b.input.data(), c.payload.data(), expected);
  return b;
}

bool FeatureConfig::uses(FeatureGroup g) const { return std::find(order.begin(), order.end(), g) != order.end(); }

std::uint64_t sample_seed(std::uint64_t global_seed, Date date, int t) {
  return hash_combine(hash_combine(global_seed, static_cast<std::uint64_t>(date.serial())), static_cast<std::uint64_t>(t));
}

FeaturePipeline::FeaturePipeline(const DayProvider& provider, std::shared_ptr<const StaticTensor> static_map,
                                 std::shared_ptr<const HolidayCalendar> calendar, FeatureConfig config, FillValues fill)
    : provider_(provider),
      static_map_(std::move(static_map)),
      calendar_(std::move(calendar)),
      config_(std::move(config)),
      periodic_(provider, config_.periodic, std::move(fill)) {
  const auto& spec = provider_.spec();
  if (config_.uses(FeatureGroup::static_map)) {
    if (!static_map_) throw ConfigError("static feature group enabled but no static tensor supplied");
    if (!(static_map_->spec() == spec)) throw ShapeError("static tensor spec does not match the day provider");
  }
  if (config_.uses(FeatureGroup::holiday) && !calendar_) {
    throw ConfigError("holiday feature group enabled but no calendar supplied");
  }
  if (config_.offsets.empty()) throw ConfigError("at least one target offset is required");
  // Channel layout does not depend on the sample; derive it once.
  for (auto g : config_.order) {
    switch (g) {
      case FeatureGroup::dynamic:
        for (int f = 0; f < kHistoryFrames; ++f) {
          manifest_.append("dynamic[frame " + std::to_string(f - kHistoryFrames + 1) + "]", spec.dynamic_channels);
        }
        break;
      case FeatureGroup::static_map:
        manifest_.append("static", spec.static_channels);
        break;
      case FeatureGroup::periodic:
        manifest_.append_manifest(periodic_manifest(config_.periodic.day_set, daily_stat_count(spec)));
        break;
      case FeatureGroup::time:
        manifest_.append("time", 2);
        break;
      case FeatureGroup::weekday:
        manifest_.append("weekday", 7);
        break;
      case FeatureGroup::holiday:
        manifest_.append("holiday", 1);
        break;
    }
  }
}

FeaturePipeline::Sample FeaturePipeline::build(Date date, int t, FeatureMode mode, std::uint64_t global_seed) const {
  std::vector<std::shared_ptr<const DayTensor>> held;
  std::vector<const DayTensor*> days;
  const int max_offset = *std::max_element(config_.offsets.begin(), config_.offsets.end());
  const int span_after = (t + max_offset) / spec().frames_per_day;
  const int span_before = t - (kHistoryFrames - 1) < 0 ? 1 : 0;
  for (int rel = -span_before; rel <= span_after; ++rel) {
    if (auto d = provider_.find(date.plus_days(rel))) {
      days.push_back(d.get());
      held.push_back(std::move(d));
    }
  }
  Sample s;
  s.window = slice_window(std::span<const DayTensor* const>(days), date, t, config_.offsets);

  FeatureParts parts;
  parts.window = &s.window;
  parts.static_map = static_map_.get();
  std::vector<float> periodic;
  if (config_.uses(FeatureGroup::periodic)) {
    std::mt19937_64 rng(sample_seed(global_seed, date, t));
    periodic = periodic_.build(date, mode, rng);
    parts.periodic = periodic;
    parts.periodic_manifest = periodic_manifest(config_.periodic.day_set, daily_stat_count(spec()));
  }
  if (config_.uses(FeatureGroup::time)) parts.time = encode_time(t, spec().frames_per_day);
  if (config_.uses(FeatureGroup::weekday)) parts.weekday = weekday_onehot(date);
  if (config_.uses(FeatureGroup::holiday)) parts.holiday = calendar_->is_holiday(date);
  s.bundle = assemble_input(parts, config_.order);
  return s;
}

}  // namespace gridcast
