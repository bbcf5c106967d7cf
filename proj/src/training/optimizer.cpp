#include "gridcast/training/optimizer.hpp"

#include <cmath>

#include "gridcast/error.hpp"

namespace gridcast::training {

std::string_view to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd:
      return "sgd";
    case OptimizerKind::adam:
      return "adam";
    case OptimizerKind::adamw:
      return "adamw";
    case OptimizerKind::lamb:
      return "lamb";
  }
  return "?";
}

OptimizerKind parse_optimizer_kind(std::string_view text) {
  for (auto k : {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::adamw, OptimizerKind::lamb}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown optimizer '" + std::string(text) + "'");
}

double OptimizerConfig::decay() const {
  if (weight_decay) return *weight_decay;
  return kind == OptimizerKind::adamw || kind == OptimizerKind::lamb ? 0.01 : 0.0;
}

void OptimizerConfig::validate() const {
  if (!(lr_peak > 0.0)) throw ConfigError("lr_peak must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (decay() < 0.0) throw ConfigError("weight decay must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
}

void to_json(ordered_json& j, const OptimizerConfig& c) {
  j = ordered_json{{"kind", to_string(c.kind)}, {"lr_peak", c.lr_peak},   {"betas", {c.beta1, c.beta2}},
                   {"epsilon", c.epsilon},       {"weight_decay", c.decay()}, {"momentum", c.momentum}};
}

void from_json(const ordered_json& j, OptimizerConfig& c) {
  c = OptimizerConfig{};
  try {
    if (j.contains("kind")) c.kind = parse_optimizer_kind(j["kind"].get<std::string>());
    c.lr_peak = j.value("lr_peak", c.lr_peak);
    if (j.contains("betas")) {
      c.beta1 = j["betas"].at(0).get<double>();
      c.beta2 = j["betas"].at(1).get<double>();
    }
    c.epsilon = j.value("epsilon", c.epsilon);
    if (j.contains("weight_decay") && !j["weight_decay"].is_null()) c.weight_decay = j["weight_decay"].get<double>();
    c.momentum = j.value("momentum", c.momentum);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad optimizer config: ") + e.what());
  }
  c.validate();
}

namespace {

void prepare(std::span<double> w, std::span<const double> g, ParamState& s) {
  if (w.size() != g.size()) throw ShapeError("parameter and gradient sizes differ");
  for (double x : g) {
    if (!std::isfinite(x)) throw NumericError("non-finite gradient");
  }
  if (s.m.size() != w.size()) s.m.assign(w.size(), 0.0);
  if (s.v.size() != w.size()) s.v.assign(w.size(), 0.0);
}

// Bias-corrected moment update; writes m_hat / (sqrt(v_hat) + eps) into dir.
void adam_direction(std::span<const double> g, ParamState& s, const OptimizerConfig& c, std::vector<double>& dir) {
  ++s.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.step));
  dir.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    s.m[i] = c.beta1 * s.m[i] + (1.0 - c.beta1) * g[i];
    s.v[i] = c.beta2 * s.v[i] + (1.0 - c.beta2) * g[i] * g[i];
    const double m_hat = s.m[i] / bc1;
    const double v_hat = s.v[i] / bc2;
    dir[i] = m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace

void sgd_step(std::span<double> w, std::span<const double> g, ParamState& s, double lr, const OptimizerConfig& c) {
  prepare(w, g, s);
  ++s.step;
  const double decay = c.decay();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double grad = g[i] + decay * w[i];
    s.m[i] = c.momentum * s.m[i] + grad;
    w[i] -= lr * s.m[i];
  }
}

void adam_step(std::span<double> w, std::span<const double> g, ParamState& s, double lr, const OptimizerConfig& c) {
  prepare(w, g, s);
  // Coupled L2 decay, only when explicitly configured.
  const double decay = c.decay();
  std::vector<double> grad(g.begin(), g.end());
  if (decay != 0.0) {
    for (std::size_t i = 0; i < w.size(); ++i) grad[i] += decay * w[i];
  }
  std::vector<double> dir;
  adam_direction(grad, s, c, dir);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * dir[i];
}

void adamw_step(std::span<double> w, std::span<const double> g, ParamState& s, double lr, const OptimizerConfig& c) {
  prepare(w, g, s);
  const double decay = c.decay();
  for (auto& x : w) x -= lr * decay * x;
  std::vector<double> dir;
  adam_direction(g, s, c, dir);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * dir[i];
}

double lamb_step(std::span<double> w, std::span<const double> g, ParamState& s, double lr, const OptimizerConfig& c) {
  prepare(w, g, s);
  std::vector<double> u;
  adam_direction(g, s, c, u);
  const double decay = c.decay();
  double w_sq = 0.0;
  double u_sq = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    u[i] += decay * w[i];
    w_sq += w[i] * w[i];
    u_sq += u[i] * u[i];
  }
  const double w_norm = std::sqrt(w_sq);
  const double u_norm = std::sqrt(u_sq);
  const double ratio = (w_norm == 0.0 || u_norm == 0.0) ? 1.0 : w_norm / u_norm;
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * ratio * u[i];
  return ratio;
}

Optimizer::Optimizer(OptimizerConfig config) : config_(std::move(config)) { config_.validate(); }

void Optimizer::step(std::span<nn::Parameter* const> params, double lr) {
  if (states_.size() != params.size()) states_.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    if (p.grad.size() != p.value.size()) p.zero_grad();
    auto w = p.value.data();
    auto g = std::span<const double>(p.grad.data());
    switch (config_.kind) {
      case OptimizerKind::sgd:
        sgd_step(w, g, states_[i], lr, config_);
        break;
      case OptimizerKind::adam:
        adam_step(w, g, states_[i], lr, config_);
        break;
      case OptimizerKind::adamw:
        adamw_step(w, g, states_[i], lr, config_);
        break;
      case OptimizerKind::lamb:
        lamb_step(w, g, states_[i], lr, config_);
        break;
    }
  }
  ++steps_;
}

}  // namespace gridcast::training
