#include "gridcast/models/activation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "gridcast/error.hpp"

namespace gridcast::models {

void ActivationKind::validate() const {
  if (variant == Variant::leaky_relu && !(slope > 0.0 && slope < 1.0)) {
    throw ConfigError("leaky_relu slope must lie in (0, 1)");
  }
}

std::string ActivationKind::name() const {
  switch (variant) {
    case Variant::relu:
      return "relu";
    case Variant::elu:
      return "elu";
    case Variant::relu6:
      return "relu6";
    case Variant::leaky_relu:
      return slope == 0.01 ? "leaky_relu" : "leaky_relu(" + std::to_string(slope) + ")";
  }
  return "?";
}

ActivationKind ActivationKind::parse(std::string_view text) {
  if (text == "relu") return relu();
  if (text == "elu") return elu();
  if (text == "relu6") return relu6();
  if (text == "leaky_relu") return leaky_relu();
  constexpr std::string_view prefix = "leaky_relu(";
  if (text.starts_with(prefix) && text.ends_with(")")) {
    const std::string inner(text.substr(prefix.size(), text.size() - prefix.size() - 1));
    char* end = nullptr;
    const double slope = std::strtod(inner.c_str(), &end);
    if (end == inner.c_str() || *end != '\0') throw ConfigError("bad leaky_relu slope '" + inner + "'");
    auto a = leaky_relu(slope);
    a.validate();
    return a;
  }
  throw ConfigError("unknown activation '" + std::string(text) + "'");
}

double activation_apply(const ActivationKind& kind, double x) {
  switch (kind.variant) {
    case ActivationKind::Variant::relu:
      return x > 0.0 ? x : 0.0;
    case ActivationKind::Variant::elu:
      return x > 0.0 ? x : std::expm1(x);
    case ActivationKind::Variant::relu6:
      return std::min(std::max(x, 0.0), 6.0);
    case ActivationKind::Variant::leaky_relu:
      return x > 0.0 ? x : kind.slope * x;
  }
  return x;
}

double activation_derivative(const ActivationKind& kind, double x) {
  switch (kind.variant) {
    case ActivationKind::Variant::relu:
      return x > 0.0 ? 1.0 : 0.0;
    case ActivationKind::Variant::elu:
      return x > 0.0 ? 1.0 : std::exp(x);
    case ActivationKind::Variant::relu6:
      return x > 0.0 && x < 6.0 ? 1.0 : 0.0;
    case ActivationKind::Variant::leaky_relu:
      return x > 0.0 ? 1.0 : kind.slope;
  }
  return 1.0;
}

void to_json(ordered_json& j, const ActivationKind& a) { j = a.variant == ActivationKind::Variant::leaky_relu ? ordered_json{{"kind", "leaky_relu"}, {"slope", a.slope}} : ordered_json{{"kind", a.name()}}; }

void from_json(const ordered_json& j, ActivationKind& a) {
  if (j.is_string()) {
    a = ActivationKind::parse(j.get<std::string>());
    return;
  }
  a = ActivationKind::parse(j.at("kind").get<std::string>());
  if (a.variant == ActivationKind::Variant::leaky_relu) a.slope = j.value("slope", 0.01);
  a.validate();
}

}  // namespace gridcast::models
