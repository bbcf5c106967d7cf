#pragma once

#include <string>
#include <string_view>

#include "gridcast/container.hpp"

namespace gridcast::models {

struct ActivationKind {
  enum class Variant { relu, elu, relu6, leaky_relu };
  Variant variant = Variant::elu;
  double slope = 0.01;  // leaky_relu only, in (0, 1)

  static ActivationKind relu() { return {Variant::relu}; }
  static ActivationKind elu() { return {Variant::elu}; }
  static ActivationKind relu6() { return {Variant::relu6}; }
  static ActivationKind leaky_relu(double slope = 0.01) { return {Variant::leaky_relu, slope}; }

  /// ConfigError for a leaky slope outside (0, 1).
  void validate() const;
  std::string name() const;
  /// "relu" | "elu" | "relu6" | "leaky_relu" | "leaky_relu(0.2)"
  static ActivationKind parse(std::string_view text);

  friend bool operator==(const ActivationKind&, const ActivationKind&) = default;
};

double activation_apply(const ActivationKind& kind, double x);
/// d activation / dx, evaluated from the input.
double activation_derivative(const ActivationKind& kind, double x);

void to_json(ordered_json& j, const ActivationKind& a);
void from_json(const ordered_json& j, ActivationKind& a);

}  // namespace gridcast::models
