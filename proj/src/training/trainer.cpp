#include "gridcast/training/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "gridcast/error.hpp"
#include "gridcast/models/checkpoint.hpp"
#include "gridcast/nn/ops.hpp"

namespace gridcast::training {

std::string_view to_string(Selection s) {
  return s == Selection::best_val_mse ? "best_val_mse" : "final_epoch";
}

Selection parse_selection(std::string_view text) {
  if (text == "best_val_mse") return Selection::best_val_mse;
  if (text == "final_epoch") return Selection::final_epoch;
  throw ConfigError("unknown selection rule '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

void to_json(ordered_json& j, const TrainConfig& c) {
  j = ordered_json{{"epochs", c.epochs},
                   {"batch_size", c.batch_size},
                   {"seed", c.seed},
                   {"include_validation", c.include_validation},
                   {"selection", to_string(c.effective_selection())}};
}

void from_json(const ordered_json& j, TrainConfig& c) {
  c = TrainConfig{};
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.include_validation = j.value("include_validation", c.include_validation);
    if (j.contains("selection")) c.selection = parse_selection(j["selection"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad train config: ") + e.what());
  }
  c.validate();
}

ordered_json RunRecord::to_json(bool timing) const {
  ordered_json epochs_json = ordered_json::array();
  for (const auto& e : epochs) {
    ordered_json row{{"epoch", e.epoch}, {"train_loss", e.train_loss}};
    row["val_mse"] = e.val_mse ? ordered_json(*e.val_mse) : ordered_json(nullptr);
    row["lr"] = e.lr;
    row["checkpoint"] = e.checkpoint;
    if (timing) row["seconds"] = e.seconds;
    epochs_json.push_back(std::move(row));
  }
  ordered_json j{{"config_hash", config_hash},
                 {"status", status},
                 {"selection", training::to_string(selection)},
                 {"train_samples", train_samples},
                 {"validation_samples", validation_samples},
                 {"total_steps", total_steps},
                 {"epochs", std::move(epochs_json)}};
  j["selected_epoch"] = selected_epoch ? ordered_json(*selected_epoch) : ordered_json(nullptr);
  j["selected_checkpoint"] = selected_checkpoint;
  j["selected_val_mse"] = selected_val_mse ? ordered_json(*selected_val_mse) : ordered_json(nullptr);
  if (timing) j["wall_clock_seconds"] = wall_clock_seconds;
  return j;
}

std::string config_hash(const ordered_json& config) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : config.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

struct Snapshot {
  std::vector<nn::Tensor> params;
  std::vector<nn::Tensor> buffers;
};

Snapshot take_snapshot(models::Model& model) {
  Snapshot s;
  for (auto* p : model.parameters()) s.params.push_back(p->value);
  for (auto& [name, t] : model.buffers()) s.buffers.push_back(*t);
  return s;
}

void restore_snapshot(models::Model& model, const Snapshot& s) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s.params[i];
  auto buffers = model.buffers();
  for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i].second = s.buffers[i];
}

class RunWriter {
 public:
  RunWriter(const RunOptions& options) : dir_(options.run_dir) {
    if (!dir_) return;
    std::filesystem::create_directories(*dir_ / "checkpoints");
    write_text_atomic(*dir_ / "config.json", options.config.dump(2) + "\n");
  }

  bool enabled() const { return dir_.has_value(); }

  std::string checkpoint(models::Model& model, const EpochMetrics& e, std::uint64_t seed) {
    if (!dir_) return {};
    const std::string rel = "checkpoints/epoch_" + std::to_string(e.epoch) + ".ckpt";
    models::CheckpointMeta meta{seed, e.epoch, e.val_mse, ordered_json{{"train_loss", e.train_loss}}};
    models::save_checkpoint(*dir_ / rel, model, meta);
    return rel;
  }

  void persist(const RunRecord& record) {
    if (!dir_) return;
    // metrics.jsonl only ever gains lines; it is rewritten whole so a crash
    // leaves either the old or the new version.
    std::ostringstream lines;
    const auto j = record.to_json(true);
    for (const auto& row : j["epochs"]) lines << row.dump() << "\n";
    write_text_atomic(*dir_ / "metrics.jsonl", lines.str());
    write_text_atomic(*dir_ / "record.json", j.dump(2) + "\n");
  }

 private:
  std::optional<std::filesystem::path> dir_;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

RunRecord train(models::Model& model, const SampleSet& train_set, const SampleSet* validation,
                const TrainConfig& train_config, const OptimizerConfig& optimizer_config,
                ScheduleConfig schedule, const RunOptions& options) {
  train_config.validate();
  optimizer_config.validate();
  const auto run_start = Clock::now();

  const bool has_val = validation != nullptr && !validation->empty();
  SampleSet merged;
  const SampleSet* data = &train_set;
  if (train_config.include_validation && has_val) {
    merged = SampleSet::concat(train_set, *validation);
    data = &merged;
  }
  if (data->empty()) throw ConfigError("training set is empty");
  if (data->feature_channels() != model.config().feature_channels() ||
      data->target_planes() != model.config().out_planes() || data->height() != model.height() ||
      data->width() != model.width()) {
    throw ShapeError("sample geometry does not match the model");
  }
  const bool evaluate = has_val && !train_config.include_validation;

  RunRecord record;
  record.config_hash = options.config.empty() ? std::string() : config_hash(options.config);
  record.selection = evaluate ? train_config.effective_selection() : Selection::final_epoch;
  record.train_samples = data->size();
  record.validation_samples = has_val ? validation->size() : 0;

  const std::size_t batch = static_cast<std::size_t>(train_config.batch_size);
  const long steps_per_epoch = static_cast<long>((data->size() + batch - 1) / batch);
  const long needed = steps_per_epoch * train_config.epochs;
  if (schedule.total_steps == 0) schedule.total_steps = needed;
  if (schedule.total_steps < needed) {
    throw ConfigError("schedule total_steps " + std::to_string(schedule.total_steps) + " is shorter than the " +
                      std::to_string(needed) + " updates the run needs");
  }
  schedule.validate();
  record.total_steps = schedule.total_steps;

  RunWriter writer(options);
  Optimizer optimizer(optimizer_config);
  auto params = model.parameters();
  std::optional<Snapshot> best;
  double best_mse = std::numeric_limits<double>::infinity();
  long step = 0;

  try {
    for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
      const auto epoch_start = Clock::now();
      model.set_training(true);
      const auto order = epoch_order(data->size(), train_config.seed, epoch);
      double loss_sum = 0.0;
      double lr = 0.0;
      for (std::size_t begin = 0; begin < order.size(); begin += batch) {
        const std::size_t end = std::min(order.size(), begin + batch);
        auto b = make_batch(*data, std::span<const std::size_t>(order).subspan(begin, end - begin));
        nn::Tape tape;
        model.zero_grad();
        auto x = tape.constant(std::move(b.features));
        auto y = tape.constant(std::move(b.targets));
        auto loss = nn::mse_loss(model.forward(tape, x), y);
        const double value = loss.value()[0];
        if (!std::isfinite(value)) throw NumericError("non-finite training loss", step);
        tape.backward(loss);
        lr = lr_at(schedule, step, optimizer_config.lr_peak);
        try {
          optimizer.step(params, lr);
        } catch (const NumericError& e) {
          throw NumericError(e.what(), step);
        }
        loss_sum += value;
        ++step;
      }

      EpochMetrics m;
      m.epoch = epoch;
      m.train_loss = loss_sum / static_cast<double>(steps_per_epoch);
      m.lr = lr;
      if (evaluate) {
        m.val_mse = evaluate_mse(model, *validation, train_config.batch_size);
        if (!std::isfinite(*m.val_mse)) throw NumericError("non-finite validation MSE", step);
      }
      m.checkpoint = writer.checkpoint(model, m, model.seed());
      m.seconds = seconds_since(epoch_start);
      record.epochs.push_back(m);

      if (record.selection == Selection::best_val_mse) {
        // Strict improvement: ties keep the earlier epoch.
        if (*m.val_mse < best_mse) {
          best_mse = *m.val_mse;
          best = take_snapshot(model);
          record.selected_epoch = epoch;
          record.selected_checkpoint = m.checkpoint;
          record.selected_val_mse = m.val_mse;
        }
      } else {
        record.selected_epoch = epoch;
        record.selected_checkpoint = m.checkpoint;
        record.selected_val_mse = m.val_mse;
      }
      record.wall_clock_seconds = seconds_since(run_start);
      writer.persist(record);
      if (options.on_epoch) options.on_epoch(m);
    }
  } catch (const NumericError& e) {
    record.status = std::string("failed: ") + e.what();
    record.wall_clock_seconds = seconds_since(run_start);
    writer.persist(record);
    throw;
  }

  if (best) restore_snapshot(model, *best);
  model.set_training(false);
  record.status = "completed";
  record.wall_clock_seconds = seconds_since(run_start);
  writer.persist(record);
  return record;
}

nn::Tensor predict_all(models::Model& model, const SampleSet& set, int batch_size) {
  const bool was_training = model.training();
  model.set_training(false);
  const auto plane = static_cast<std::size_t>(set.height()) * static_cast<std::size_t>(set.width());
  nn::Tensor out({set.size(), static_cast<std::size_t>(set.target_planes()), static_cast<std::size_t>(set.height()),
                  static_cast<std::size_t>(set.width())});
  auto od = out.data();
  const std::size_t per = plane * static_cast<std::size_t>(set.target_planes());
  const std::size_t batch = static_cast<std::size_t>(std::max(1, batch_size));
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < set.size(); begin += batch) {
    idx.clear();
    for (std::size_t i = begin; i < std::min(set.size(), begin + batch); ++i) idx.push_back(i);
    auto b = make_batch(set, idx);
    auto pred = model.predict(b.features);
    std::copy(pred.data().begin(), pred.data().end(), od.begin() + static_cast<std::ptrdiff_t>(begin * per));
  }
  model.set_training(was_training);
  return out;
}

double evaluate_mse(models::Model& model, const SampleSet& set, int batch_size) {
  if (set.empty()) throw ConfigError("cannot evaluate an empty sample set");
  const auto pred = predict_all(model, set, batch_size);
  const auto pd = pred.data();
  const std::size_t per = pd.size() / set.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto t = set.targets(i);
    for (std::size_t k = 0; k < per; ++k) {
      const double d = pd[i * per + k] - static_cast<double>(t[k]);
      sum += d * d;
    }
  }
  return sum / static_cast<double>(pd.size());
}

nn::Tensor ensemble_mean(std::span<const nn::Tensor> predictions) {
  if (predictions.empty()) throw ConfigError("ensemble_mean needs at least one prediction");
  nn::Tensor out(predictions.front().shape(), 0.0);
  auto od = out.data();
  for (const auto& p : predictions) {
    if (p.shape() != out.shape()) {
      throw ShapeError("ensemble member shape " + nn::shape_string(p.shape()) + " differs from " +
                       nn::shape_string(out.shape()));
    }
    const auto pd = p.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] += pd[i];
  }
  const double n = static_cast<double>(predictions.size());
  for (auto& v : od) v /= n;
  return out;
}

}  // namespace gridcast::training
