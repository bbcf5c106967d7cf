#pragma once

#include <barrier>
#include <memory>
#include <mutex>
#include <vector>

#include "gridcast/nn/tape.hpp"

namespace gridcast::nn {

/// Count-weighted per-channel moments. `var` may be empty when only means are carried.
struct Moments {
  double count = 0.0;
  std::vector<double> mean;
  std::vector<double> var;
};

/// Pure reduction: merged mean is the count-weighted mean of means; merged
/// variance adds the between-group spread of the means.
Moments combine_moments(std::span<const Moments> parts);

/// Cross-context hook. Called once in forward (batch mean/variance) and once
/// in backward (means of dy and dy*xhat). Single-process runs pass no hook.
class StatsSync {
 public:
  virtual ~StatsSync() = default;
  /// Replaces the local moments with the moments over all participants.
  virtual void reduce(Moments& local) = 0;
};

/// In-process all-reduce between `participants` threads, one handle per rank.
class InProcessStatsGroup {
 public:
  explicit InProcessStatsGroup(std::size_t participants);
  ~InProcessStatsGroup();
  StatsSync& rank(std::size_t r);

 private:
  class Handle;
  std::size_t participants_;
  std::vector<Moments> slots_;
  std::barrier<> gather_;
  std::barrier<> release_;
  std::vector<std::unique_ptr<Handle>> handles_;
};

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean({channels}, 0.0), running_var({channels}, 1.0) {}
};

/// Per-channel batch normalisation over (N, H, W). In training mode uses
/// batch statistics (biased variance), updates running stats with the
/// unbiased variance, and calls `sync` if given. In eval mode uses running stats.
Var batch_norm(Var x, Var gamma, Var beta, BatchNormState& state, bool training, StatsSync* sync = nullptr);

}  // namespace gridcast::nn
