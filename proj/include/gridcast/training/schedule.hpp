#pragma once

#include "gridcast/container.hpp"

namespace gridcast::training {

/// Linear warm-up from 0 to the peak, then linear decay to 0 at total_steps.
struct ScheduleConfig {
  long total_steps = 0;  // 0 = filled in by the trainer from epochs x batches
  double warmup_fraction = 0.05;

  long warmup_steps() const;
  /// ConfigError unless total_steps >= 1, warmup_fraction in [0,1), warmup_steps < total_steps.
  void validate() const;
};

void to_json(ordered_json& j, const ScheduleConfig& c);
void from_json(const ordered_json& j, ScheduleConfig& c);

/// DomainError unless 0 <= step <= total_steps.
double lr_at(const ScheduleConfig& schedule, long step, double lr_peak);

}  // namespace gridcast::training
