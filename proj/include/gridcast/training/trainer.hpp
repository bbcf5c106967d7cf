#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridcast/models/model.hpp"
#include "gridcast/training/dataset.hpp"
#include "gridcast/training/optimizer.hpp"
#include "gridcast/training/schedule.hpp"

namespace gridcast::training {

enum class Selection { best_val_mse, final_epoch };
std::string_view to_string(Selection s);
Selection parse_selection(std::string_view text);

struct TrainConfig {
  int epochs = 15;
  int batch_size = 12;
  std::uint64_t seed = 0;
  bool include_validation = false;
  Selection selection = Selection::best_val_mse;

  /// Selection actually applied: include_validation leaves no held-out set.
  Selection effective_selection() const {
    return include_validation ? Selection::final_epoch : selection;
  }
  void validate() const;
};

void to_json(ordered_json& j, const TrainConfig& c);
void from_json(const ordered_json& j, TrainConfig& c);

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;  // mean over the epoch's batches
  std::optional<double> val_mse;
  double lr = 0.0;  // learning rate of the epoch's last update
  std::string checkpoint;  // relative to the run directory; empty when not persisted
  double seconds = 0.0;
};

struct RunRecord {
  std::string config_hash;
  std::string status = "running";  // running | completed | failed: <reason>
  Selection selection = Selection::final_epoch;
  std::size_t train_samples = 0;
  std::size_t validation_samples = 0;
  long total_steps = 0;
  std::vector<EpochMetrics> epochs;
  std::optional<int> selected_epoch;
  std::string selected_checkpoint;
  std::optional<double> selected_val_mse;
  double wall_clock_seconds = 0.0;

  /// Timing fields are omitted when `timing` is false so that records of
  /// equal-seed runs compare equal.
  ordered_json to_json(bool timing = true) const;
};

/// Stable 16-hex-digit FNV-1a hash of the compact JSON dump.
std::string config_hash(const ordered_json& config);

struct RunOptions {
  /// When set: config.json, metrics.jsonl, checkpoints/epoch_<n>.ckpt and
  /// record.json are written there, each by temp-file-and-rename.
  std::optional<std::filesystem::path> run_dir;
  ordered_json config = ordered_json::object();
  std::function<void(const EpochMetrics&)> on_epoch;
};

/// Trains in place. With include_validation the validation samples join the
/// training set. On return the model holds the selected epoch's weights.
/// A NumericError is rethrown after the record is persisted as failed.
RunRecord train(models::Model& model, const SampleSet& train_set, const SampleSet* validation,
                const TrainConfig& train_config, const OptimizerConfig& optimizer_config,
                ScheduleConfig schedule, const RunOptions& options = {});

/// Eval-mode predictions for every sample, (N, T*C, H, W). Restores the mode.
nn::Tensor predict_all(models::Model& model, const SampleSet& set, int batch_size = 12);
double evaluate_mse(models::Model& model, const SampleSet& set, int batch_size = 12);

/// Elementwise mean; ShapeError on mismatch, ConfigError on an empty list.
nn::Tensor ensemble_mean(std::span<const nn::Tensor> predictions);

}  // namespace gridcast::training
