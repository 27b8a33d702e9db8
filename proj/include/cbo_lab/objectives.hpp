#pragma once

// Benchmark objectives and a name -> objective registry used by the CLI.

#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbo_lab/ensemble.hpp"
#include "cbo_lab/errors.hpp"

namespace cbo {

/// 10 D + sum_d (x_d^2 - 10 cos(2 pi x_d)). Global minimum 0 at the origin.
inline double rastrigin(std::span<const double> x) {
  double acc = 10.0 * static_cast<double>(x.size());
  for (double xd : x) acc += xd * xd - 10.0 * std::cos(2.0 * std::numbers::pi * xd);
  return acc;
}

/// sum_{d<D} (1 - x_d)^2 + 100 (x_{d+1} - x_d^2)^2. Requires D >= 2.
inline double rosenbrock(std::span<const double> x) {
  if (x.size() < 2) throw DimensionError("rosenbrock needs D >= 2, got D = " + std::to_string(x.size()));
  double acc = 0.0;
  for (std::size_t d = 0; d + 1 < x.size(); ++d) {
    const double a = 1.0 - x[d];
    const double b = x[d + 1] - x[d] * x[d];
    acc += a * a + 100.0 * b * b;
  }
  return acc;
}

/// -exp(5 sum_d x_d) when every x_d <= 1/2 (boundary included), else 0.
inline double discontinuous_integrand(std::span<const double> x) {
  double s = 0.0;
  for (double xd : x) {
    if (!(xd <= 0.5)) return 0.0;
    s += 5.0 * xd;
  }
  return -std::exp(s);
}

inline ObjectiveHandle make_rastrigin() {
  return {"rastrigin", rastrigin,
          [](std::size_t d) -> std::optional<Vector> { return Vector::Zero(static_cast<Eigen::Index>(d)); }};
}

inline ObjectiveHandle make_rosenbrock() {
  return {"rosenbrock", rosenbrock,
          [](std::size_t d) -> std::optional<Vector> { return Vector::Ones(static_cast<Eigen::Index>(d)); }};
}

inline ObjectiveHandle make_discontinuous() {
  return {"discontinuous", discontinuous_integrand, [](std::size_t d) -> std::optional<Vector> {
            return Vector::Constant(static_cast<Eigen::Index>(d), 0.5);
          }};
}

/// f = c everywhere. Softmax weights are uniform, so the dynamics are linear.
inline ObjectiveHandle make_constant(double c = 0.0) {
  return {"constant", [c](std::span<const double>) { return c; },
          [](std::size_t) -> std::optional<Vector> { return std::nullopt; }};
}

class ObjectiveRegistry {
public:
  ObjectiveRegistry() {
    add(make_rastrigin());
    add(make_rosenbrock());
    add(make_discontinuous());
    add(make_constant());
  }

  /// Registers a user objective. Names are unique.
  void add(ObjectiveHandle f) {
    if (f.name.empty()) throw ConfigError("objective name is empty");
    if (!f.evaluate) throw ConfigError("objective '" + f.name + "' has no evaluator");
    auto [it, inserted] = entries_.emplace(f.name, std::move(f));
    if (!inserted) throw ConfigError("objective '" + it->first + "' is already registered");
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const ObjectiveHandle& get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown objective '" + name + "'");
    return it->second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : entries_) out.push_back(name);
    return out;
  }

private:
  std::map<std::string, ObjectiveHandle> entries_;
};

}  // namespace cbo
