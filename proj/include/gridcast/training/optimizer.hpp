#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gridcast/container.hpp"
#include "gridcast/nn/tape.hpp"

namespace gridcast::training {

enum class OptimizerKind { sgd, adam, adamw, lamb };
std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer_kind(std::string_view text);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::lamb;
  double lr_peak = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-6;
  // Unset means the per-kind default: 0.01 for adamw/lamb, 0 otherwise.
  std::optional<double> weight_decay;
  double momentum = 0.9;  // sgd

  double decay() const;
  /// ConfigError on lr_peak <= 0, betas outside [0,1), epsilon <= 0.
  void validate() const;
};

void to_json(ordered_json& j, const OptimizerConfig& c);
void from_json(const ordered_json& j, OptimizerConfig& c);

/// Moment buffers for one parameter tensor. SGD keeps its momentum in `m`.
struct ParamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

// Single-tensor update rules. Each is a pure function of its arguments and
// throws NumericError if a gradient is not finite.
void sgd_step(std::span<double> w, std::span<const double> g, ParamState& s, double lr, const OptimizerConfig& c);
void adam_step(std::span<double> w, std::span<const double> g, ParamState& s, double lr, const OptimizerConfig& c);
void adamw_step(std::span<double> w, std::span<const double> g, ParamState& s, double lr, const OptimizerConfig& c);
/// Layer-wise trust-ratio update; returns the trust ratio used.
double lamb_step(std::span<double> w, std::span<const double> g, ParamState& s, double lr, const OptimizerConfig& c);

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  /// Applies one update to every parameter from its accumulated grad.
  void step(std::span<nn::Parameter* const> params, double lr);
  const OptimizerConfig& config() const { return config_; }
  long steps_taken() const { return steps_; }

 private:
  OptimizerConfig config_;
  std::vector<ParamState> states_;
  long steps_ = 0;
};

}  // namespace gridcast::training
