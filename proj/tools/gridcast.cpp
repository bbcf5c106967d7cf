// Command-line front end. Exit codes: 0 ok, 2 config, 3 data, 4 numeric.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gridcast/calendar.hpp"
#include "gridcast/error.hpp"
#include "gridcast/features.hpp"
#include "gridcast/harness/ablation.hpp"
#include "gridcast/harness/export.hpp"
#include "gridcast/harness/score.hpp"
#include "gridcast/models/checkpoint.hpp"
#include "gridcast/synthetic.hpp"
#include "gridcast/training/experiment.hpp"

namespace fs = std::filesystem;
using namespace gridcast;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out_dir;
};

ordered_json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

training::ExperimentConfig load_config(const Globals& g) {
  auto c = g.config.empty() ? training::ExperimentConfig{} : training::ExperimentConfig::from_json(read_json_file(g.config));
  if (g.seed) c.train.seed = *g.seed;
  return c;
}

fs::path out_dir_or(const Globals& g, const char* fallback) { return g.out_dir.empty() ? fs::path(fallback) : fs::path(g.out_dir); }

unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

int cmd_generate(const Globals& g, const std::string& city, const std::string& start, const std::string& end, int height,
                 int width) {
  const Date first = Date::parse(start);
  const Date last = Date::parse(end);
  if (last < first) throw ConfigError("--end is before --start");
  CityGridSpec spec{city, height, width, 288, 9, 9};
  spec.validate();
  const auto root = out_dir_or(g, "data/synthetic");
  const auto seed = training::city_seed(g.seed.value_or(7), city);
  SyntheticConfig synth;
  if (auto cal = training::find_calendar("", city)) synth.holidays = cal->holidays();
  store_static(generate_synthetic_static(spec, seed, synth), static_path(root, city));
  int days = 0;
  for (Date d = first; d <= last; d = d.plus_days(1), ++days) {
    store_day(generate_synthetic_day(spec, d, seed, synth), day_path(root, city, d));
  }
  std::cout << "wrote " << days << " days and a static map for " << city << " under " << (root / city).string() << "\n";
  return 0;
}

int cmd_calendar_validate(const std::string& file) {
  const auto cal = load_calendar(file);
  std::cout << cal.city_id() << ": " << cal.holidays().size() << " holidays, coverage " << cal.coverage_start().iso()
            << " .. " << cal.coverage_end().iso() << " (source " << cal.source() << ")\n";
  return 0;
}

int cmd_calendar_fetch(const Globals& g, const std::string& city, int year, const std::string& dir) {
  FileCalendarProvider provider(dir.empty() ? shipped_calendar_dir() : fs::path(dir));
  const auto cache = out_dir_or(g, "calendars");
  const auto cal = fetch_calendar(provider, city, year, cache);
  std::cout << "cached " << cal.holidays().size() << " holidays for " << city << " " << year << " in "
            << cache.string() << "\n";
  return 0;
}

int cmd_features(const Globals& g, const std::string& city, const std::string& date, int t, const std::string& mode,
                 const std::string& out) {
  auto config = load_config(g);
  if (!city.empty()) config.data.city = city;
  training::ExperimentData data(config);
  auto sample = data.pipeline().build(Date::parse(date), t, parse_feature_mode(mode), config.train.seed);
  fs::path path = out.empty() ? out_dir_or(g, ".") / (config.data.city + "_" + date + "_t" + std::to_string(t) + ".features")
                              : fs::path(out);
  store_bundle(sample.bundle, path, ordered_json{{"city", config.data.city}, {"date", date}, {"t", t}, {"mode", mode}});
  std::cout << "wrote " << sample.bundle.channels() << " channels to " << path.string() << "\n";
  for (const auto& r : sample.bundle.manifest.entries()) {
    std::cout << "  [" << r.begin << ", " << r.end << ") " << r.tag << "\n";
  }
  return 0;
}

int cmd_train(const Globals& g) {
  const auto config = load_config(g);
  const auto runs = out_dir_or(g, "runs");
  auto result = training::run_experiment(config, runs, default_threads());
  const auto& r = result.record;
  for (const auto& e : r.epochs) {
    std::cout << "epoch " << e.epoch << " train_loss " << e.train_loss;
    if (e.val_mse) std::cout << " val_mse " << *e.val_mse;
    std::cout << "\n";
  }
  std::cout << "run " << result.run_dir->string() << " selected epoch " << r.selected_epoch.value_or(0) << "\n";
  return 0;
}

struct Loaded {
  training::ExperimentConfig config;
  std::vector<models::Model> models;
};

// Checkpoints from --checkpoint, or the selected one of --run.
Loaded load_models(const Globals& g, const std::string& run, const std::vector<std::string>& checkpoints) {
  Loaded l;
  std::vector<fs::path> paths(checkpoints.begin(), checkpoints.end());
  if (!run.empty()) {
    l.config = training::ExperimentConfig::from_json(read_json_file(fs::path(run) / "config.json"));
    if (g.seed) l.config.train.seed = *g.seed;
    if (paths.empty()) {
      const auto record = read_json_file(fs::path(run) / "record.json");
      const auto sel = record.value("selected_checkpoint", std::string());
      if (sel.empty()) throw ConfigError("run " + run + " has no selected checkpoint");
      paths.push_back(fs::path(run) / sel);
    }
  } else {
    l.config = load_config(g);
  }
  if (paths.empty()) throw ConfigError("give --run or at least one --checkpoint");
  for (const auto& p : paths) l.models.push_back(std::move(models::load_checkpoint(p).model));
  return l;
}

training::SampleSet split_set(const training::ExperimentData& data, const std::string& split) {
  if (split == "validation") return data.validation_set(default_threads());
  if (split == "test") return data.test_set(default_threads());
  if (split == "train") return data.train_set(default_threads());
  throw ConfigError("--split must be train, validation or test");
}

int cmd_evaluate(const Globals& g, const std::string& run, const std::vector<std::string>& checkpoints,
                 const std::string& split) {
  auto l = load_models(g, run, checkpoints);
  training::ExperimentData data(l.config);
  const auto set = split_set(data, split);
  std::vector<nn::Tensor> preds;
  for (auto& m : l.models) preds.push_back(training::predict_all(m, set));
  const auto mean = training::ensemble_mean(preds);
  nn::Tensor targets(mean.shape());
  auto td = targets.data();
  std::size_t k = 0;
  for (std::size_t i = 0; i < set.size(); ++i)
    for (float v : set.targets(i)) td[k++] = v;
  harness::EvalReport report;
  report.cities[l.config.data.city] = harness::score(mean, targets, static_cast<int>(l.config.features.offsets.size()),
                                                     data.spec().dynamic_channels);
  const auto j = report.to_json();
  std::cout << j.dump(2) << "\n";
  if (!g.out_dir.empty()) write_text_atomic(fs::path(g.out_dir) / ("eval_" + split + ".json"), j.dump(2) + "\n");
  return 0;
}

int cmd_ablate(const Globals& g, const std::string& name, int seeds, unsigned jobs, bool keep_runs) {
  auto plan = harness::preset(name);
  if (!g.config.empty()) plan.base = training::ExperimentConfig::from_json(read_json_file(g.config));
  if (g.seed) plan.base.train.seed = *g.seed;
  if (seeds > 0) plan.seeds = seeds;
  const auto out = out_dir_or(g, "ablations");
  harness::AblationOptions options;
  options.jobs = jobs;
  if (keep_runs) options.runs_root = out / "runs";
  options.log = [](const std::string& line) { std::cerr << line << "\n"; };
  const auto table = harness::run_ablation(plan, options);
  const auto text = table.render();
  std::cout << text;
  write_text_atomic(out / (name + ".json"), table.to_json().dump(2) + "\n");
  write_text_atomic(out / (name + ".txt"), text);
  return 0;
}

int cmd_export(const Globals& g, const std::string& run, const std::vector<std::string>& checkpoints,
               const std::string& split) {
  auto l = load_models(g, run, checkpoints);
  training::ExperimentData data(l.config);
  const auto set = split_set(data, split);
  std::vector<models::Model*> ensemble;
  for (auto& m : l.models) ensemble.push_back(&m);
  const auto out = out_dir_or(g, "predictions");
  const auto files = harness::export_predictions(ensemble, set, l.config.features.offsets, l.config.data.city, out);
  std::cout << "wrote " << files.size() << " prediction files under " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridcast: traffic-movie forecasting toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed override (training seed; data seed for generate-synthetic)");
  app.add_option("--config", g.config, "Experiment config JSON");
  app.add_option("--out-dir", g.out_dir, "Output directory");

  auto* gen = app.add_subcommand("generate-synthetic", "Write a synthetic dataset in the grid container format");
  std::string city = "berlin", start = "2019-01-01", end = "2019-01-31";
  int height = 32, width = 32;
  gen->add_option("--city", city);
  gen->add_option("--start", start);
  gen->add_option("--end", end);
  gen->add_option("--height", height);
  gen->add_option("--width", width);

  auto* cal = app.add_subcommand("calendar", "Holiday calendars");
  cal->require_subcommand(1);
  auto* cal_validate = cal->add_subcommand("validate", "Parse and check a calendar file");
  std::string cal_file;
  cal_validate->add_option("file", cal_file)->required();
  auto* cal_fetch = cal->add_subcommand("fetch", "Cache one city-year from a calendar directory");
  int year = 2019;
  std::string cal_dir;
  cal_fetch->add_option("--city", city);
  cal_fetch->add_option("--year", year);
  cal_fetch->add_option("--source-dir", cal_dir, "Directory of <city>.json documents (default: shipped)");

  auto* feat = app.add_subcommand("features", "Feature assembly");
  feat->require_subcommand(1);
  auto* feat_build = feat->add_subcommand("build", "Assemble one sample's input tensor");
  std::string date = "2019-01-15", mode = "test", out_file, feat_city;
  int t = 143;
  feat_build->add_option("--city", feat_city, "City (default: the config's)");
  feat_build->add_option("--date", date);
  feat_build->add_option("--t", t, "Anchor frame (last input frame)");
  feat_build->add_option("--mode", mode, "train or test");
  feat_build->add_option("--out", out_file);

  auto* train = app.add_subcommand("train", "Train one model; persists runs/<hash>/");

  std::string run, split = "validation";
  std::vector<std::string> checkpoints;
  auto* eval = app.add_subcommand("evaluate", "Score a run or checkpoint ensemble");
  eval->add_option("--run", run, "Run directory (uses its selected checkpoint)");
  eval->add_option("--checkpoint", checkpoints, "Checkpoint files; several form a mean ensemble");
  eval->add_option("--split", split, "train, validation or test");

  auto* abl = app.add_subcommand("ablate", "Run an ablation preset");
  std::string preset;
  int seeds = 0;
  unsigned jobs = 1;
  bool keep_runs = false;
  abl->add_option("--preset", preset, "table1 .. table7")->required();
  abl->add_option("--seeds", seeds, "Seeds per variant (default 3)");
  abl->add_option("--jobs", jobs, "Concurrent runs");
  abl->add_flag("--keep-runs", keep_runs, "Persist every run under <out-dir>/runs");

  auto* exp = app.add_subcommand("export", "Write quantised predictions");
  std::string exp_split = "test";
  exp->add_option("--run", run);
  exp->add_option("--checkpoint", checkpoints);
  exp->add_option("--split", exp_split);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorKind::config);
  }

  try {
    if (*gen) return cmd_generate(g, city, start, end, height, width);
    if (*cal_validate) return cmd_calendar_validate(cal_file);
    if (*cal_fetch) return cmd_calendar_fetch(g, city, year, cal_dir);
    if (*feat_build) return cmd_features(g, feat_city, date, t, mode, out_file);
    if (*train) return cmd_train(g);
    if (*eval) return cmd_evaluate(g, run, checkpoints, split);
    if (*abl) return cmd_ablate(g, preset, seeds, jobs, keep_runs);
    if (*exp) return cmd_export(g, run, checkpoints, exp_split);
  } catch (const NumericError& e) {
    std::cerr << "numeric error";
    if (e.batch_id() >= 0) std::cerr << " at update " << e.batch_id();
    std::cerr << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
