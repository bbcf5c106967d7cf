#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gridcast/training/experiment.hpp"

namespace gridcast::harness {

enum class AblationAxis { model_family, activation, optimizer, warmup, periodic_features, holiday_features, geo_embedding };
std::string_view to_string(AblationAxis a);
AblationAxis parse_axis(std::string_view text);

/// Config keys (JSON pointers) an axis is allowed to change.
std::vector<std::string> axis_fields(AblationAxis a);

struct AblationPlan {
  std::string name;   // e.g. "table2"
  std::string title;  // row-set description printed above the table
  training::ExperimentConfig base;
  AblationAxis axis = AblationAxis::activation;
  std::vector<std::string> variants;
  std::vector<std::string> cities{"berlin", "istanbul", "moscow"};
  int seeds = 3;

  /// ConfigError on empty lists, no seeds, or a variant that is unknown or
  /// touches fields outside its axis. Repeated variants are allowed.
  void validate() const;
};

/// Base config with one axis set to `variant`. ConfigError if unknown.
training::ExperimentConfig apply_variant(const training::ExperimentConfig& base, AblationAxis axis,
                                         const std::string& variant);

/// True when the two configs agree everywhere outside the axis' fields.
bool differs_only_in_axis(const training::ExperimentConfig& a, const training::ExperimentConfig& b,
                          AblationAxis axis);

/// Presets table1 .. table7, one per comparison axis, sized for a desktop CPU.
AblationPlan preset(const std::string& name);
std::vector<std::string> preset_names();

struct AblationCell {
  std::vector<double> values;  // validation MSE per seed
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for one seed
  bool best = false;
  std::optional<std::string> error;
};

struct AblationTable {
  std::string name;
  std::string title;
  AblationAxis axis = AblationAxis::activation;
  int seeds = 0;
  std::vector<std::string> variants;
  std::vector<std::string> cities;
  std::vector<std::vector<AblationCell>> cells;  // [variant][city]

  /// Fixed-width text with variant rows, city columns, best cell marked '*'.
  std::string render() const;
  /// Contains no timing, so equal seeds give identical documents.
  ordered_json to_json() const;
};

struct AblationOptions {
  std::optional<std::filesystem::path> runs_root;
  unsigned jobs = 1;  // concurrent runs; the table does not depend on it
  std::function<void(const std::string&)> log;
};

AblationTable run_ablation(const AblationPlan& plan, const AblationOptions& options = {});

}  // namespace gridcast::harness
