#include "gridcast/training/schedule.hpp"

#include <cmath>
#include <string>

#include "gridcast/error.hpp"

namespace gridcast::training {

long ScheduleConfig::warmup_steps() const {
  return static_cast<long>(std::floor(warmup_fraction * static_cast<double>(total_steps)));
}

void ScheduleConfig::validate() const {
  if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ConfigError("warmup_fraction must lie in [0, 1)");
  if (warmup_steps() >= total_steps) throw ConfigError("warm-up must end before total_steps");
}

void to_json(ordered_json& j, const ScheduleConfig& c) {
  j = ordered_json{{"total_steps", c.total_steps}, {"warmup_fraction", c.warmup_fraction}};
}

void from_json(const ordered_json& j, ScheduleConfig& c) {
  c = ScheduleConfig{};
  try {
    c.total_steps = j.value("total_steps", c.total_steps);
    c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad schedule config: ") + e.what());
  }
  if (c.total_steps < 0) throw ConfigError("total_steps must be non-negative");
  if (!(c.warmup_fraction >= 0.0 && c.warmup_fraction < 1.0)) throw ConfigError("warmup_fraction must lie in [0, 1)");
}

double lr_at(const ScheduleConfig& schedule, long step, double lr_peak) {
  schedule.validate();
  if (step < 0 || step > schedule.total_steps) {
    throw DomainError("step " + std::to_string(step) + " outside [0, " + std::to_string(schedule.total_steps) + "]");
  }
  const long w = schedule.warmup_steps();
  // Ratios first so that the boundary points come out exact.
  if (w > 0 && step <= w) return lr_peak * (static_cast<double>(step) / static_cast<double>(w));
  return lr_peak * (static_cast<double>(schedule.total_steps - step) / static_cast<double>(schedule.total_steps - w));
}

}  // namespace gridcast::training
