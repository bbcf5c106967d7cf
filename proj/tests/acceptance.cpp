// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Tolerances are pinned here; nothing is read from the environment except the
// CLI path compiled in by the build.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "gradcheck.hpp"
#include "gridcast/calendar.hpp"
#include "gridcast/error.hpp"
#include "gridcast/features.hpp"
#include "gridcast/grid_data.hpp"
#include "gridcast/harness/ablation.hpp"
#include "gridcast/harness/score.hpp"
#include "gridcast/models/model.hpp"
#include "gridcast/nn/ops.hpp"
#include "gridcast/training/experiment.hpp"
#include "gridcast/training/optimizer.hpp"
#include "gridcast/training/schedule.hpp"

using namespace gridcast;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances.
constexpr double kRoundTripSeconds = 5.0;
constexpr double kUnitCircleTol = 1e-9;
constexpr int kDaySetDates = 1000;
constexpr int kStatsDays = 50;
constexpr int kStatsSeeds = 10000;
constexpr double kStatsTol = 0.01;
constexpr double kStatsSeconds = 60.0;
constexpr double kGradTol = 1e-3;
constexpr double kGradStep = 1e-4;
constexpr double kOptimizerTol = 1e-9;
constexpr double kOverfitMse = 1e-4;
constexpr long kOverfitSteps = 500;
constexpr double kOverfitSeconds = 300.0;
constexpr double kRegressionTol = 0.05;
constexpr double kScoreTol = 1e-12;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

fs::path work_root() {
  static const fs::path p = [] {
    auto d = fs::temp_directory_path() / "gridcast_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << std::scientific << v;
  return s.str();
}

// 1
Outcome format_round_trip() {
  std::mt19937_64 rng(101);
  const auto dir = work_root() / "roundtrip";
  fs::create_directories(dir);
  const auto start = Clock::now();
  int bad = 0;
  for (int i = 0; i < 100; ++i) {
    CityGridSpec spec{"city" + std::to_string(i % 3), 1 + static_cast<int>(rng() % 24), 1 + static_cast<int>(rng() % 24),
                      288, 9, 9};
    std::vector<std::uint8_t> v(spec.day_size());
    for (auto& x : v) x = static_cast<std::uint8_t>(rng());
    const Date d = Date::parse("2019-01-01").plus_days(static_cast<int>(rng() % 365));
    const DayTensor day(spec, d, std::move(v));
    const auto path = dir / ("day" + std::to_string(i) + ".grid");
    store_day(day, path);
    const auto back = load_day(path, spec);
    bool same = back == day;
    // Storing the loaded tensor reproduces the file byte for byte.
    const auto again = dir / ("again" + std::to_string(i) + ".grid");
    store_day(back, again);
    std::ifstream a(path, std::ios::binary), b(again, std::ios::binary);
    const std::string sa{std::istreambuf_iterator<char>(a), {}}, sb{std::istreambuf_iterator<char>(b), {}};
    same = same && sa == sb;
    bad += same ? 0 : 1;
  }
  const double secs = seconds_since(start);
  return {bad == 0 && secs < kRoundTripSeconds, std::to_string(100 - bad) + "/100 identical, " + fmt(secs) + " s"};
}

// 2
Outcome encoder_exactness() {
  double worst = 0.0;
  for (int t = 0; t < 288; ++t) {
    const auto e = encode_time(t);
    worst = std::max(worst, std::abs(e.cos_component * e.cos_component + e.sin_component * e.sin_component - 1.0));
  }
  const auto a = encode_time(0), b = encode_time(72), c = encode_time(144), d = encode_time(216);
  const bool axes = a.cos_component == 1.0 && a.sin_component == 0.0 && b.cos_component == 0.0 && b.sin_component == 1.0 &&
                    c.cos_component == -1.0 && c.sin_component == 0.0 && d.cos_component == 0.0 &&
                    d.sin_component == -1.0;
  return {worst <= kUnitCircleTol && axes, "max |cos^2+sin^2-1| " + fmt(worst) + (axes ? ", axes exact" : ", axes NOT exact")};
}

// 3
Outcome day_set_oracle() {
  std::mt19937_64 rng(303);
  int bad = 0;
  for (int i = 0; i < kDaySetDates; ++i) {
    const Date d = Date::parse("1990-01-01").plus_days(static_cast<int>(rng() % 30000));
    std::set<Date> want{d.plus_days(-7), d.plus_days(7)};
    for (int k = 1; k <= 3; ++k) {
      want.insert(d.plus_days(-k));
      want.insert(d.plus_days(k));
    }
    const auto got = periodic_day_set(d);
    if (got.size() != want.size() || std::set<Date>(got.begin(), got.end()) != want) ++bad;
  }
  return {bad == 0, std::to_string(kDaySetDates - bad) + "/" + std::to_string(kDaySetDates) + " dates match"};
}

// 4
Outcome statistics_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 data_rng(404);
  const CityGridSpec spec{"stats", 4, 4, 288, 9, 9};
  const int ns = spec.dynamic_channels + 1;
  const std::size_t plane = spec.plane_size();
  int exact_bad = 0;
  double worst_mc = 0.0;
  for (int day_i = 0; day_i < kStatsDays; ++day_i) {
    std::vector<std::uint8_t> v(spec.day_size());
    for (auto& x : v) x = (data_rng() % 100) < 30 ? 0 : static_cast<std::uint8_t>(data_rng());
    const DayTensor day(spec, Date::parse("2019-01-01").plus_days(day_i), std::move(v));
    // Naive loop oracle over every frame.
    std::vector<double> naive(static_cast<std::size_t>(ns) * plane, 0.0);
    for (std::size_t p = 0; p < plane; ++p) {
      const int h = static_cast<int>(p) / spec.width, w = static_cast<int>(p) % spec.width;
      int nonzero = 0;
      for (int t = 0; t < 288; ++t) {
        bool any = false;
        for (int c = 0; c < 9; ++c) {
          const int x = day.at(t, h, w, c);
          naive[static_cast<std::size_t>(c) * plane + p] += x / 255.0;
          any = any || x != 0;
        }
        nonzero += any;
      }
      for (int c = 0; c < 9; ++c) naive[static_cast<std::size_t>(c) * plane + p] /= 288.0;
      naive[9 * plane + p] = nonzero / 288.0;
    }
    const auto full = daily_stats_full(day);
    for (std::size_t i = 0; i < naive.size(); ++i)
      if (full.values[i] != static_cast<float>(naive[i])) ++exact_bad;

    std::vector<double> acc(naive.size(), 0.0);
    for (int s = 0; s < kStatsSeeds; ++s) {
      std::mt19937_64 rng(static_cast<std::uint64_t>(day_i) * 1000003ULL + static_cast<std::uint64_t>(s));
      const auto st = daily_stats_sampled(day, rng);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += st.values[i];
    }
    for (std::size_t i = 0; i < acc.size(); ++i)
      worst_mc = std::max(worst_mc, std::abs(acc[i] / kStatsSeeds - full.values[i]));
  }
  const double secs = seconds_since(start);
  return {exact_bad == 0 && worst_mc <= kStatsTol && secs < kStatsSeconds,
          std::to_string(exact_bad) + " inexact full stats; max |E[sampled]-full| " + fmt(worst_mc) + "; " + fmt(secs) + " s"};
}

// 5
Outcome channel_accounting() {
  training::ExperimentConfig c;
  c.data.height = 8;
  c.data.width = 8;
  c.data.train = {Date::parse("2019-01-08"), Date::parse("2019-01-08")};
  c.data.validation = c.data.test = c.data.train;
  training::ExperimentData data(c);
  const auto sample = data.pipeline().build(Date::parse("2019-01-08"), 143, FeatureMode::test, 1);
  const auto& m = sample.bundle.manifest;
  int covered = 0;
  bool contiguous = true;
  for (const auto& r : m.entries()) {
    contiguous = contiguous && r.begin == covered && r.end > r.begin;
    covered = r.end;
  }
  const auto model_cfg = c.resolved_model(sample.bundle.channels());
  models::Model model(model_cfg, 8, 8, 1);
  const auto joined = models::geo_embed_concat(sample.bundle, *model.geo_embedding());
  const bool ok = sample.bundle.channels() == 207 && m.valid() && contiguous && covered == 207 &&
                  model_cfg.geo_embedding.dim == 8 && model_cfg.in_channels == 215 && joined.channels() == 215;
  return {ok, std::to_string(sample.bundle.channels()) + " feature channels in " + std::to_string(m.entries().size()) +
                  " ranges; model input " + std::to_string(model_cfg.in_channels)};
}

// 6
Outcome gradient_check() {
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto param = [&](std::string name, nn::Shape shape, double scale) {
    nn::Parameter p;
    p.name = std::move(name);
    p.value = nn::Tensor(std::move(shape));
    for (auto& v : p.value.data()) v = scale * u(rng);
    p.zero_grad();
    return p;
  };
  // Micro-model: [features | C=2 embedding] -> 3x3 conv -> ELU -> 1x1 head.
  const int features = 3, emb = 2, hidden = 4, out = 2;
  auto table = param("embedding", {emb, 2, 2}, 1.0);
  auto conv_w = param("conv.weight", {hidden, features + emb, 3, 3}, 0.5);
  auto conv_b = param("conv.bias", {hidden}, 0.5);
  auto head_w = param("head.weight", {out, hidden, 1, 1}, 0.5);
  auto head_b = param("head.bias", {out}, 0.5);
  nn::Tensor x({2, features, 2, 2}), target({2, out, 2, 2});
  for (auto& v : x.data()) v = u(rng);
  for (auto& v : target.data()) v = u(rng);
  const auto elu = models::ActivationKind::elu();
  const auto r = testing::check_gradients(
      {&table, &conv_w, &conv_b, &head_w, &head_b},
      [&](nn::Tape& t) {
        const nn::Var parts[] = {t.constant(x), nn::broadcast_embedding(t.param(table), 2, std::nullopt)};
        auto h = nn::conv2d(nn::concat_channels(parts), t.param(conv_w), t.param(conv_b), {1, 1});
        h = nn::activation(h, elu);
        return nn::mse_loss(nn::conv2d(h, t.param(head_w), t.param(head_b), {}), t.constant(target));
      },
      kGradStep);
  return {r.max_rel_error <= kGradTol && r.checked == table.value.size() + conv_w.value.size() + conv_b.value.size() +
                                                          head_w.value.size() + head_b.value.size(),
          std::to_string(r.checked) + " entries incl. embedding, max rel error " + fmt(r.max_rel_error)};
}

// 7
Outcome optimizer_units() {
  using namespace training;
  auto cfg = [](OptimizerKind k, double decay) {
    OptimizerConfig c;
    c.kind = k;
    c.weight_decay = decay;
    return c;
  };
  std::vector<std::string> failures;
  auto expect = [&](const std::string& what, double got, double want) {
    if (!(std::abs(got - want) <= kOptimizerTol)) failures.push_back(what + " " + fmt(got) + " vs " + fmt(want));
  };
  {
    std::vector<double> w{1.0};
    ParamState s;
    adam_step(w, std::vector<double>{1.0}, s, 0.01, cfg(OptimizerKind::adam, 0.0));
    expect("adam", w[0], 1.0 - 0.01 / (1.0 + 1e-6));
  }
  {
    std::vector<double> w{1.0};
    ParamState s;
    adamw_step(w, std::vector<double>{1.0}, s, 0.01, cfg(OptimizerKind::adamw, 0.01));
    expect("adamw", w[0], 1.0 - 0.01 * 0.01 - 0.01 / (1.0 + 1e-6));
  }
  {
    std::vector<double> w{1.0};
    ParamState s;
    auto c = cfg(OptimizerKind::sgd, 0.0);
    c.momentum = 0.0;
    sgd_step(w, std::vector<double>{2.0}, s, 0.1, c);
    expect("sgd", w[0], 0.8);
  }
  {
    std::vector<double> w{2.0};
    ParamState s;
    const double r = lamb_step(w, std::vector<double>{1.0}, s, 0.01, cfg(OptimizerKind::lamb, 0.0));
    const double u = 1.0 / (1.0 + 1e-6);
    expect("lamb ratio", r, 2.0 / u);
    expect("lamb", w[0], 2.0 - 0.01 * 2.0);
  }
  {
    // |w| = 0 -> r = 1 and the step equals adamw's.
    std::vector<double> w{0.0, 0.0}, w2{0.0, 0.0};
    ParamState s, s2;
    const std::vector<double> g{0.5, -1.0};
    expect("lamb r(|w|=0)", lamb_step(w, g, s, 0.01, cfg(OptimizerKind::lamb, 0.01)), 1.0);
    adamw_step(w2, g, s2, 0.01, cfg(OptimizerKind::adamw, 0.01));
    expect("lamb==adamw at |w|=0", w[0] - w2[0] + w[1] - w2[1], 0.0);
    // |u| = 0 -> r = 1 and no movement.
    std::vector<double> w3{1.0, -1.0};
    ParamState s3;
    expect("lamb r(|u|=0)", lamb_step(w3, std::vector<double>{0.0, 0.0}, s3, 0.01, cfg(OptimizerKind::lamb, 0.0)), 1.0);
    expect("lamb fixed point", w3[0] - 1.0 + w3[1] + 1.0, 0.0);
  }
  std::string detail = failures.empty() ? "adam, adamw, sgd, lamb and both trust-ratio conventions" : failures.front();
  return {failures.empty(), detail};
}

// 8
Outcome schedule_boundaries() {
  const training::ScheduleConfig s{100, 0.1};
  const double a = training::lr_at(s, 0, 0.01), b = training::lr_at(s, s.warmup_steps(), 0.01),
               c = training::lr_at(s, 100, 0.01), d = training::lr_at(s, 55, 0.01);
  const bool ok = a == 0.0 && b == 0.01 && c == 0.0 && d == 0.005;
  return {ok, "lr(0)=" + fmt(a) + " lr(w)=" + fmt(b) + " lr(55)=" + fmt(d) + " lr(T)=" + fmt(c)};
}

// 9
Outcome overfit_smoke() {
  const auto start = Clock::now();
  training::ExperimentConfig c;
  c.data.height = 4;
  c.data.width = 4;
  c.data.train = {Date::parse("2019-01-08"), Date::parse("2019-01-08")};
  c.data.validation = c.data.test = c.data.train;
  c.data.anchors = {59, 179};
  c.model.width = 16;
  c.model.stages = {{1, 1}, {2, 1}};
  training::ExperimentData data(c);
  const auto two = data.train_set();
  models::Model model(c.resolved_model(two.feature_channels()), 4, 4, 2);
  training::TrainConfig tc;
  tc.epochs = static_cast<int>(kOverfitSteps);
  tc.batch_size = 2;
  training::OptimizerConfig oc;
  oc.lr_peak = 0.05;
  const auto rec = training::train(model, two, nullptr, tc, oc, training::ScheduleConfig{});
  const double mse = rec.epochs.back().train_loss;
  const double secs = seconds_since(start);
  return {two.size() == 2 && rec.total_steps == kOverfitSteps && mse < kOverfitMse && secs < kOverfitSeconds,
          "train MSE " + fmt(mse) + " after " + std::to_string(rec.total_steps) + " steps, " + fmt(secs) + " s"};
}

// 10
Outcome directional_ablation() {
  std::string detail;
  bool ok = true;
  for (const char* name : {"table3", "table7"}) {
    const auto plan = harness::preset(name);
    const auto t = harness::run_ablation(plan);
    // Rows are [off, on].
    for (std::size_t c = 0; c < t.cities.size(); ++c) {
      const auto& off = t.cells[0][c];
      const auto& on = t.cells[1][c];
      if (off.error || on.error) {
        ok = false;
        detail += std::string(name) + "/" + t.cities[c] + " failed; ";
        continue;
      }
      const double rel = on.mean / off.mean - 1.0;
      const bool pass = on.mean <= off.mean * (1.0 + kRegressionTol);
      ok = ok && pass;
      std::ostringstream s;
      s.precision(2);
      s << std::fixed << name << "/" << t.cities[c] << " on/off " << (rel >= 0 ? "+" : "") << 100.0 * rel << "%"
        << (pass ? "" : " REGRESSION") << "; ";
      detail += s.str();
    }
  }
  return {ok, detail};
}

// 11
Outcome ablation_determinism() {
  std::vector<std::string> docs;
  for (int i = 0; i < 2; ++i) {
    const auto out = work_root() / ("ablate" + std::to_string(i));
    const std::string cmd = std::string("\"") + GRIDCAST_CLI_PATH + "\" --seed 1 --out-dir \"" + out.string() +
                            "\" ablate --preset table2 > \"" + (out.string() + ".log") + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return {false, "ablate run " + std::to_string(i) + " failed"};
    std::ifstream in(out / "table2.json", std::ios::binary);
    docs.emplace_back(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  const bool ok = !docs[0].empty() && docs[0] == docs[1];
  return {ok, std::to_string(docs[0].size()) + "-byte JSON documents " + (ok ? "identical" : "differ")};
}

// 12
Outcome scorer_oracle() {
  std::mt19937_64 rng(1212);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 4, frames = 1 + rng() % 6, ch = 1 + rng() % 9, h = 1 + rng() % 8, w = 1 + rng() % 8;
    nn::Tensor p({n, frames * ch, h, w}), t({n, frames * ch, h, w});
    for (auto& v : p.data()) v = u(rng);
    for (auto& v : t.data()) v = u(rng);
    const auto s = harness::score(p, t, static_cast<int>(frames), static_cast<int>(ch));
    // Double loop: samples x elements.
    const std::size_t per = frames * ch * h * w;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < per; ++k) {
        const double d = p[i * per + k] - t[i * per + k];
        sum += d * d;
      }
    worst = std::max(worst, std::abs(s.mse - sum / static_cast<double>(n * per)));
  }
  return {worst <= kScoreTol, "max |score - naive| " + fmt(worst) + " over 20 random shapes"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"format round trip", format_round_trip},
      {"encoder exactness", encoder_exactness},
      {"day-set oracle", day_set_oracle},
      {"statistics oracle", statistics_oracle},
      {"channel accounting", channel_accounting},
      {"gradient check", gradient_check},
      {"optimizer unit values", optimizer_units},
      {"schedule boundaries", schedule_boundaries},
      {"overfit smoke test", overfit_smoke},
      {"directional ablation", directional_ablation},
      {"ablation determinism", ablation_determinism},
      {"scorer oracle", scorer_oracle},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto start = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %2zu %-22s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), seconds_since(start));
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
