#include "gridcast/harness/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

#include "gridcast/error.hpp"

namespace gridcast::harness {

using training::ExperimentConfig;

std::string_view to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::model_family:
      return "model_family";
    case AblationAxis::activation:
      return "activation";
    case AblationAxis::optimizer:
      return "optimizer";
    case AblationAxis::warmup:
      return "warmup";
    case AblationAxis::periodic_features:
      return "periodic_features";
    case AblationAxis::holiday_features:
      return "holiday_features";
    case AblationAxis::geo_embedding:
      return "geo_embedding";
  }
  return "?";
}

AblationAxis parse_axis(std::string_view text) {
  for (auto a : {AblationAxis::model_family, AblationAxis::activation, AblationAxis::optimizer, AblationAxis::warmup,
                 AblationAxis::periodic_features, AblationAxis::holiday_features, AblationAxis::geo_embedding}) {
    if (to_string(a) == text) return a;
  }
  throw ConfigError("unknown ablation axis '" + std::string(text) + "'");
}

std::vector<std::string> axis_fields(AblationAxis a) {
  switch (a) {
    case AblationAxis::model_family:
      return {"/model/family", "/model/width", "/model/stages", "/model/depth"};
    case AblationAxis::activation:
      return {"/model/activation"};
    case AblationAxis::optimizer:
      return {"/optimizer/kind", "/optimizer/weight_decay"};
    case AblationAxis::warmup:
      return {"/schedule/warmup_fraction"};
    case AblationAxis::periodic_features:
    case AblationAxis::holiday_features:
      return {"/features/groups"};
    case AblationAxis::geo_embedding:
      return {"/model/geo_embedding"};
  }
  return {};
}

namespace {

void set_group(std::vector<FeatureGroup>& order, FeatureGroup g, bool on) {
  auto it = std::find(order.begin(), order.end(), g);
  if (!on) {
    if (it != order.end()) order.erase(it);
    return;
  }
  if (it != order.end()) return;
  // Reinsert at its position in the default order.
  const auto def = default_feature_order();
  const auto rank = [&](FeatureGroup x) { return std::find(def.begin(), def.end(), x) - def.begin(); };
  auto pos = std::find_if(order.begin(), order.end(), [&](FeatureGroup x) { return rank(x) > rank(g); });
  order.insert(pos, g);
}

bool parse_switch(const std::string& v) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw ConfigError("variant must be 'on' or 'off', got '" + v + "'");
}

std::string variant_label(AblationAxis axis, const std::string& v) {
  auto with = [&](const char* what) { return std::string(v == "on" ? "with " : "without ") + what; };
  switch (axis) {
    case AblationAxis::warmup:
      return with("warm-up");
    case AblationAxis::periodic_features:
      return with("periodic features");
    case AblationAxis::holiday_features:
      return with("holiday features");
    case AblationAxis::geo_embedding:
      return with("geo-embedding");
    default:
      return v;
  }
}

}  // namespace

ExperimentConfig apply_variant(const ExperimentConfig& base, AblationAxis axis, const std::string& variant) {
  ExperimentConfig c = base;
  switch (axis) {
    case AblationAxis::model_family: {
      // Desk-scale stand-ins keep the width ratio of the published variants.
      if (variant == "unet") {
        c.model.family = models::Family::unet;
      } else if (variant == "hrnet_w18" || variant == "hrnet_w48") {
        c.model.family = models::Family::hrnet;
        c.model.width = variant == "hrnet_w18" ? base.model.width : (base.model.width * 48 + 9) / 18;
      } else {
        throw ConfigError("unknown model variant '" + variant + "'");
      }
      break;
    }
    case AblationAxis::activation:
      c.model.activation = models::ActivationKind::parse(variant);
      break;
    case AblationAxis::optimizer:
      c.optimizer.kind = training::parse_optimizer_kind(variant);
      c.optimizer.weight_decay.reset();
      break;
    case AblationAxis::warmup:
      c.schedule.warmup_fraction =
          parse_switch(variant) ? (base.schedule.warmup_fraction > 0.0 ? base.schedule.warmup_fraction : 0.05) : 0.0;
      break;
    case AblationAxis::periodic_features:
      set_group(c.features.order, FeatureGroup::periodic, parse_switch(variant));
      break;
    case AblationAxis::holiday_features:
      set_group(c.features.order, FeatureGroup::holiday, parse_switch(variant));
      break;
    case AblationAxis::geo_embedding:
      c.model.geo_embedding.dim = parse_switch(variant) ? (base.model.geo_embedding.dim > 0 ? base.model.geo_embedding.dim : 8) : 0;
      break;
  }
  return c;
}

bool differs_only_in_axis(const ExperimentConfig& a, const ExperimentConfig& b, AblationAxis axis) {
  auto ja = a.to_json();
  auto jb = b.to_json();
  for (const auto& field : axis_fields(axis)) {
    const ordered_json::json_pointer ptr(field);
    // Erase rather than blank: a family switch removes keys outright.
    for (auto* j : {&ja, &jb}) {
      if (j->contains(ptr)) (*j)[ptr.parent_pointer()].erase(ptr.back());
    }
  }
  return ja == jb;
}

void AblationPlan::validate() const {
  if (variants.empty()) throw ConfigError("ablation plan has no variants");
  if (cities.empty()) throw ConfigError("ablation plan has no cities");
  if (seeds < 1) throw ConfigError("ablation plan needs at least one seed");
  for (const auto& v : variants) {
    const auto c = apply_variant(base, axis, v);
    if (!differs_only_in_axis(base, c, axis)) {
      throw ConfigError("variant '" + v + "' changes more than the " + std::string(to_string(axis)) + " axis");
    }
  }
}

std::vector<std::string> preset_names() {
  return {"table1", "table2", "table3", "table4", "table5", "table6", "table7"};
}

namespace {

ExperimentConfig desk_base() {
  ExperimentConfig c;
  c.data.height = 8;
  c.data.width = 8;
  c.data.train = {Date::parse("2019-01-08"), Date::parse("2019-01-21")};
  c.data.validation = {Date::parse("2019-01-22"), Date::parse("2019-01-28")};
  c.data.test = {Date::parse("2019-01-29"), Date::parse("2019-02-04")};
  c.data.anchors = {59, 119, 179, 239};
  // Two branches of width 16: the widest full-resolution branch the desk budget
  // affords. Narrower branches than the 9 output channels bottleneck the head.
  c.model.width = 16;
  c.model.stages = {{1, 1}, {2, 1}};
  c.model.geo_embedding.dim = 8;
  c.train.epochs = 40;
  c.train.batch_size = 4;
  c.train.seed = 1;
  return c;
}

}  // namespace

AblationPlan preset(const std::string& name) {
  AblationPlan p;
  p.name = name;
  p.base = desk_base();
  if (name == "table1") {
    p.title = "Backbone comparison";
    p.axis = AblationAxis::model_family;
    p.variants = {"unet", "hrnet_w18", "hrnet_w48"};
  } else if (name == "table2") {
    p.title = "Hidden-layer activation";
    p.axis = AblationAxis::activation;
    p.variants = {"relu", "elu", "relu6", "leaky_relu"};
  } else if (name == "table3") {
    p.title = "Periodic features";
    p.axis = AblationAxis::periodic_features;
    p.variants = {"off", "on"};
  } else if (name == "table4") {
    p.title = "Holiday features";
    p.axis = AblationAxis::holiday_features;
    p.variants = {"off", "on"};
  } else if (name == "table5") {
    p.title = "Geo-embedding";
    p.axis = AblationAxis::geo_embedding;
    p.variants = {"off", "on"};
  } else if (name == "table6") {
    p.title = "Optimizer at a fixed budget";
    p.axis = AblationAxis::optimizer;
    p.variants = {"sgd", "adam", "adamw", "lamb"};
  } else if (name == "table7") {
    p.title = "Learning-rate warm-up";
    p.axis = AblationAxis::warmup;
    p.variants = {"off", "on"};
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected table1 .. table7)");
  }
  // Activation, geo-embedding, optimizer and warm-up studies are single-city.
  if (name == "table2" || name == "table5" || name == "table6" || name == "table7") p.cities = {"berlin"};
  return p;
}

std::string AblationTable::render() const {
  std::ostringstream out;
  out << name << ": " << title << " (validation MSE, mean +- std over " << seeds << " seed"
      << (seeds == 1 ? "" : "s") << ", * = best in column)\n";
  std::size_t label_width = 8;
  for (const auto& v : variants) label_width = std::max(label_width, variant_label(axis, v).size());
  constexpr int col = 26;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(label_width) + 2, "variant");
  out << buf;
  for (const auto& c : cities) {
    std::snprintf(buf, sizeof buf, "%-*s", col, c.c_str());
    out << buf;
  }
  out << "\n";
  for (std::size_t v = 0; v < variants.size(); ++v) {
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(label_width) + 2, variant_label(axis, variants[v]).c_str());
    out << buf;
    for (std::size_t c = 0; c < cities.size(); ++c) {
      const auto& cell = cells[v][c];
      std::string text;
      if (cell.error) {
        text = "failed";
      } else {
        std::snprintf(buf, sizeof buf, "%.4e +- %.1e%s", cell.mean, cell.stddev, cell.best ? " *" : "");
        text = buf;
      }
      std::snprintf(buf, sizeof buf, "%-*s", col, text.c_str());
      out << buf;
    }
    out << "\n";
  }
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (std::size_t c = 0; c < cities.size(); ++c) {
      if (cells[v][c].error) out << "  " << variants[v] << "/" << cities[c] << ": " << *cells[v][c].error << "\n";
    }
  }
  return out.str();
}

ordered_json AblationTable::to_json() const {
  ordered_json rows = ordered_json::array();
  for (std::size_t v = 0; v < variants.size(); ++v) {
    ordered_json row{{"variant", variants[v]}, {"label", variant_label(axis, variants[v])}};
    ordered_json per_city = ordered_json::object();
    for (std::size_t c = 0; c < cities.size(); ++c) {
      const auto& cell = cells[v][c];
      ordered_json j;
      if (cell.error) {
        j["error"] = *cell.error;
      } else {
        j["mean"] = cell.mean;
        j["stddev"] = cell.stddev;
        j["values"] = cell.values;
        j["best"] = cell.best;
      }
      per_city[cities[c]] = std::move(j);
    }
    row["cells"] = std::move(per_city);
    rows.push_back(std::move(row));
  }
  return ordered_json{{"name", name},   {"title", title},   {"axis", to_string(axis)},
                      {"metric", "validation_mse"}, {"seeds", seeds}, {"cities", cities},
                      {"rows", std::move(rows)}};
}

AblationTable run_ablation(const AblationPlan& plan, const AblationOptions& options) {
  plan.validate();
  AblationTable table;
  table.name = plan.name;
  table.title = plan.title;
  table.axis = plan.axis;
  table.seeds = plan.seeds;
  table.variants = plan.variants;
  table.cities = plan.cities;

  struct Job {
    std::size_t v, c;
    int seed;
  };
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < plan.variants.size(); ++v)
    for (std::size_t c = 0; c < plan.cities.size(); ++c)
      for (int s = 0; s < plan.seeds; ++s) jobs.push_back({v, c, s});

  struct Outcome {
    std::optional<double> value;
    std::optional<std::string> error;
  };
  std::vector<Outcome> outcomes(jobs.size());

  auto run_one = [&](std::size_t i) {
    const auto& job = jobs[i];
    auto config = apply_variant(plan.base, plan.axis, plan.variants[job.v]);
    config.data.city = plan.cities[job.c];
    config.train.seed = plan.base.train.seed + static_cast<std::uint64_t>(job.seed);
    config.train.include_validation = false;
    config.train.selection = training::Selection::best_val_mse;
    try {
      auto result = training::run_experiment(config, options.runs_root);
      if (!result.record.selected_val_mse) throw ConfigError("run produced no validation MSE");
      outcomes[i].value = *result.record.selected_val_mse;
    } catch (const Error& e) {
      outcomes[i].error = e.what();
    }
    if (options.log) {
      std::ostringstream line;
      line << plan.name << " " << plan.variants[job.v] << " " << plan.cities[job.c] << " seed " << job.seed << ": ";
      if (outcomes[i].value) line << *outcomes[i].value;
      else line << "failed (" << *outcomes[i].error << ")";
      options.log(line.str());
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(jobs.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) run_one(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  // Single-threaded reduction in job order.
  table.cells.assign(plan.variants.size(), std::vector<AblationCell>(plan.cities.size()));
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    auto& cell = table.cells[jobs[i].v][jobs[i].c];
    if (outcomes[i].error) {
      if (!cell.error) cell.error = "seed " + std::to_string(jobs[i].seed) + ": " + *outcomes[i].error;
    } else {
      cell.values.push_back(*outcomes[i].value);
    }
  }
  for (std::size_t c = 0; c < plan.cities.size(); ++c) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < plan.variants.size(); ++v) {
      auto& cell = table.cells[v][c];
      if (cell.error) continue;
      double sum = 0.0;
      for (double x : cell.values) sum += x;
      cell.mean = sum / static_cast<double>(cell.values.size());
      double sq = 0.0;
      for (double x : cell.values) sq += (x - cell.mean) * (x - cell.mean);
      cell.stddev = cell.values.size() > 1 ? std::sqrt(sq / static_cast<double>(cell.values.size() - 1)) : 0.0;
      best = std::min(best, cell.mean);
    }
    for (std::size_t v = 0; v < plan.variants.size(); ++v) {
      auto& cell = table.cells[v][c];
      cell.best = !cell.error && cell.mean == best;
    }
  }
  return table;
}

}  // namespace gridcast::harness
