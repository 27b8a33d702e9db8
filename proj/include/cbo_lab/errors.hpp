#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cbo {

/// Invalid scalar parameter (alpha <= 0, dt <= 0, too few samples, ...).
class ParameterError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Mismatched vector/matrix sizes.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Objective called on a dimension it is not defined for.
class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// An objective produced a non-finite value at a particular particle.
class ObjectiveError : public std::runtime_error {
public:
  ObjectiveError(std::size_t particle, double value)
      : std::runtime_error("non-finite objective value " + std::to_string(value) +
                           " at particle " + std::to_string(particle)),
        particle_(particle) {}

  std::size_t particle() const noexcept { return particle_; }

private:
  std::size_t particle_;
};

/// Bad Monte-Carlo / sweep configuration (unknown objective, empty grid, ...).
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace cbo
