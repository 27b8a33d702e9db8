#pragma once

// Closed-form decay rates, empirical rate fits, and the Monte-Carlo estimate
// of the discrete almost-sure Lyapunov exponent.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cbo_lab/dynamics.hpp"
#include "cbo_lab/errors.hpp"
#include "cbo_lab/random.hpp"

namespace cbo {

/// Theoretical rates for one parameter set. Rates are positive for decay.
/// Quantities undefined in a regime are empty optionals.
struct RateReport {
  Mode mode = Mode::anisotropic;
  double det_rate = 0.0;  ///< lambda, on |E|
  double as_rate = 0.0;   ///< lambda + sigma^2 / 2
  double ms_rate = 0.0;   ///< 2 lambda - sigma^2
  bool ms_condition_ok = false;
  double em_ms_rate = 0.0;                ///< 2 lambda - sigma^2 - lambda^2 dt
  double em_ms_factor = 0.0;              ///< (1 - lambda dt)^2 + sigma^2 dt per step
  std::optional<double> em_ms_log_rate;   ///< -ln(em_ms_factor) / dt, if the factor is positive
  std::optional<double> em_step_bound;    ///< (2 lambda - sigma^2) / lambda^2
  bool em_step_ok = false;
  bool euler_stable = false;              ///< lambda dt < 1
  double isotropic_mf_rate = 0.0;         ///< 2 lambda - D sigma^2
  bool isotropic_mf_condition_ok = false;
};

inline RateReport theoretical_rates(const CboParams& p, std::size_t dim) {
  if (!std::isfinite(p.lambda)) throw ParameterError("lambda must be finite");
  const double l = p.lambda;
  const double s2 = p.effective_sigma() * p.effective_sigma();
  const double dt = p.dt;

  RateReport r;
  r.mode = p.mode;
  r.det_rate = l;
  r.as_rate = l + s2 / 2.0;
  r.ms_rate = 2.0 * l - s2;
  r.ms_condition_ok = 2.0 * l > s2;
  r.em_ms_rate = 2.0 * l - s2 - l * l * dt;
  r.em_ms_factor = (1.0 - l * dt) * (1.0 - l * dt) + s2 * dt;
  if (r.em_ms_factor > 0.0) r.em_ms_log_rate = -std::log(r.em_ms_factor) / dt;
  if (r.ms_condition_ok && l != 0.0) {
    r.em_step_bound = (2.0 * l - s2) / (l * l);
    r.em_step_ok = dt > 0.0 && dt < *r.em_step_bound;
  }
  r.euler_stable = l * dt < 1.0;
  r.isotropic_mf_rate = 2.0 * l - static_cast<double>(dim) * s2;
  r.isotropic_mf_condition_ok = r.isotropic_mf_rate > 0.0;
  return r;
}

struct AsRateEstimate {
  double estimate = 0.0;   ///< -(1/dt) E ln|1 - lambda dt + sigma sqrt(dt) Z|
  double std_error = 0.0;
  double min_abs_argument = std::numeric_limits<double>::infinity();
  std::size_t samples = 0;
};

inline constexpr std::size_t kMinAsSamples = 10'000;

/// Monte-Carlo estimate of the discrete almost-sure decay rate. The log
/// singularity at a zero argument is integrable and is not clipped; the
/// smallest |argument| seen is reported instead.
inline AsRateEstimate em_as_rate_mc(double lambda, double sigma, double dt, std::size_t samples,
                                    std::uint64_t seed) {
  if (samples < kMinAsSamples)
    throw ParameterError("em_as_rate_mc needs at least " + std::to_string(kMinAsSamples) + " samples");
  if (!(dt > 0.0)) throw ParameterError("dt must be positive");
  if (!(sigma >= 0.0)) throw ParameterError("sigma must be nonnegative");

  Engine engine(derive_seed(seed, 0));
  std::normal_distribution<double> normal;
  const double drift = 1.0 - lambda * dt;
  const double scale = sigma * std::sqrt(dt);

  // Welford: identical samples keep mean exact and variance zero.
  AsRateEstimate out;
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 1; i <= samples; ++i) {
    const double arg = drift + scale * normal(engine);
    out.min_abs_argument = std::min(out.min_abs_argument, std::abs(arg));
    const double x = -std::log(std::abs(arg)) / dt;
    const double delta = x - mean;
    mean += delta / static_cast<double>(i);
    m2 += delta * (x - mean);
  }
  out.samples = samples;
  out.estimate = mean;
  out.std_error = std::sqrt(m2 / static_cast<double>(samples - 1) / static_cast<double>(samples));
  return out;
}

struct DecayFit {
  double slope = 0.0;      ///< d ln(value) / dt; negative for decay
  double intercept = 0.0;
  double r_squared = 1.0;
};

/// Least squares of ln(values) on times, skipping the first `burn_in` points.
inline DecayFit fit_decay_rate(std::span<const double> times, std::span<const double> values,
                               std::size_t burn_in = 0) {
  if (times.size() != values.size()) throw ShapeError("times and values differ in length");
  if (values.size() < burn_in + 3) throw ParameterError("fewer than 3 points after burn-in");
  const std::size_t n = values.size() - burn_in;

  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = values[burn_in + i];
    if (!(v > 0.0) || !std::isfinite(v))
      throw ParameterError("non-positive or non-finite value at index " + std::to_string(burn_in + i));
    y[i] = std::log(v);
  }
  double t_mean = 0.0;
  double y_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    t_mean += times[burn_in + i];
    y_mean += y[i];
  }
  t_mean /= static_cast<double>(n);
  y_mean /= static_cast<double>(n);

  double stt = 0.0;
  double sty = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = times[burn_in + i] - t_mean;
    const double dy = y[i] - y_mean;
    stt += dt * dt;
    sty += dt * dy;
    syy += dy * dy;
  }
  if (stt == 0.0) throw ParameterError("times are all equal");

  DecayFit fit;
  fit.slope = sty / stt;
  fit.intercept = y_mean - fit.slope * t_mean;
  // A flat series is fitted perfectly.
  fit.r_squared = syy == 0.0 ? 1.0 : (sty * sty) / (stt * syy);
  return fit;
}

/// Default burn-in: none for deterministic runs, 10% of the points otherwise.
inline std::size_t default_burn_in(Mode mode, std::size_t points) {
  return mode == Mode::deterministic ? 0 : points / 10;
}

/// (1/T) ln(|E_T| / |E_0|) over the recorded span. -infinity when the final
/// offset is exactly zero, 0 for a zero-length span.
inline double pathwise_log_rate(const Trajectory& traj) {
  const auto& s = traj.diagnostics;
  if (s.size() == 0) throw ParameterError("empty trajectory");
  const double span = s.times.back() - s.times.front();
  const double e0 = s.e_norm_series.front();
  const double et = s.e_norm_series.back();
  if (et == 0.0) return -std::numeric_limits<double>::infinity();
  if (span == 0.0) return 0.0;
  if (e0 == 0.0) throw ParameterError("initial offset is zero");
  return (std::log(et) - std::log(e0)) / span;
}

}  // namespace cbo
