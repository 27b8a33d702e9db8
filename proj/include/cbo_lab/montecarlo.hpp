#pragma once

// Replicated runs and one-parameter sweeps of the mean squared distance to
// the consensus manifold.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "cbo_lab/diagnostics.hpp"
#include "cbo_lab/dynamics.hpp"
#include "cbo_lab/errors.hpp"
#include "cbo_lab/objectives.hpp"
#include "cbo_lab/random.hpp"

namespace cbo {

/// Pointwise cap applied to each run's V series before averaging.
struct ClipPolicy {
  enum class Kind { none, absolute, relative };
  Kind kind = Kind::relative;
  double value = 10.0;  ///< threshold, or multiple of the run's own V(0)

  static ClipPolicy none() { return {Kind::none, 0.0}; }
  static ClipPolicy absolute(double t) { return {Kind::absolute, t}; }
  static ClipPolicy relative(double factor) { return {Kind::relative, factor}; }

  double threshold_for(double v0) const {
    switch (kind) {
      case Kind::none: return std::numeric_limits<double>::infinity();
      case Kind::absolute: return value;
      case Kind::relative: return value * v0;
    }
    return std::numeric_limits<double>::infinity();
  }
};

inline std::string to_string(const ClipPolicy& c) {
  switch (c.kind) {
    case ClipPolicy::Kind::none: return "none";
    case ClipPolicy::Kind::absolute: return "absolute";
    case ClipPolicy::Kind::relative: return "relative";
  }
  return "?";
}

struct McConfig {
  CboParams base;
  std::string objective = "rastrigin";
  std::size_t n_particles = 100;
  std::size_t dim = 2;
  std::size_t steps = 100;
  std::size_t runs = 1000;
  std::uint64_t seed = 42;
  double init_low = -5.0;
  double init_high = 5.0;
  ClipPolicy clip;
  /// Every replicate draws its own initial ensemble unless shared. Unset means
  /// shared in deterministic mode (so replicates coincide) and per-replicate otherwise.
  std::optional<bool> share_init;
  /// Replicate stream ids; empty means 0..runs-1.
  std::vector<std::uint64_t> stream_ids;
  /// 0 = CBO_LAB_THREADS, falling back to the hardware concurrency.
  std::size_t workers = 0;

  bool shares_init() const { return share_init.value_or(base.mode == Mode::deterministic); }
};

struct McResult {
  std::vector<double> times;
  std::vector<double> mean_v;
  std::vector<double> stderr_v;
  std::size_t diverged_count = 0;
  /// pathwise_log_rate of each replicate, +infinity for diverged runs.
  std::vector<double> per_run_final_rates;
};

inline std::size_t resolve_workers(std::size_t requested) {
  if (requested != 0) return requested;
  if (const char* env = std::getenv("CBO_LAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Calls body(i) for i in [0, count) on up to `workers` threads.
template <typename Body>
void parallel_for(std::size_t count, std::size_t workers, Body&& body) {
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count && !failed; i = next++) {
          try {
            body(i);
          } catch (...) {
            if (!failed.exchange(true)) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

namespace detail {

inline void validate(const McConfig& cfg, const ObjectiveRegistry& registry) {
  cfg.base.validate();
  if (cfg.runs < 1) throw ConfigError("runs must be >= 1");
  if (cfg.steps < 1) throw ConfigError("steps must be >= 1");
  if (cfg.n_particles < 1) throw ConfigError("n_particles must be >= 1");
  if (cfg.dim < 1) throw ConfigError("dim must be >= 1");
  if (!(cfg.init_low < cfg.init_high)) throw ConfigError("init_low must be below init_high");
  if (cfg.clip.kind != ClipPolicy::Kind::none && !(cfg.clip.value > 0.0))
    throw ConfigError("clip threshold must be positive");
  if (!cfg.stream_ids.empty() && cfg.stream_ids.size() != cfg.runs)
    throw ConfigError("stream_ids must have one entry per run");
  const auto& f = registry.get(cfg.objective);
  try {
    const std::vector<double> probe(cfg.dim, 0.0);
    (void)f(probe);
  } catch (const DimensionError& e) {
    throw ConfigError(e.what());
  }
}

// Mean and standard error of `x`, summed in sorted order so the result does
// not depend on the order of the replicates.
inline std::pair<double, double> sorted_mean_stderr(std::vector<double>& x) {
  std::sort(x.begin(), x.end());
  const auto n = static_cast<double>(x.size());
  // Offsets from the smallest value, so identical replicates give their
  // common value back exactly.
  const double anchor = x.empty() ? 0.0 : x.front();
  double sum = 0.0;
  for (double v : x) sum += v - anchor;
  const double mean = std::isfinite(anchor) ? anchor + sum / n : anchor;
  if (x.size() < 2 || !std::isfinite(mean)) return {mean, x.size() < 2 ? 0.0 : std::numeric_limits<double>::quiet_NaN()};
  std::vector<double> sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - mean) * (x[i] - mean);
  std::sort(sq.begin(), sq.end());
  double ss = 0.0;
  for (double v : sq) ss += v;
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace detail

inline McResult run_mc(const McConfig& cfg, const ObjectiveRegistry& registry = ObjectiveRegistry{}) {
  detail::validate(cfg, registry);
  const auto& f = registry.get(cfg.objective);
  const std::size_t points = cfg.steps + 1;
  const auto stream_of = [&](std::size_t r) -> std::uint64_t {
    return cfg.stream_ids.empty() ? r : cfg.stream_ids[r];
  };

  std::optional<ParticleEnsemble> shared;
  if (cfg.shares_init()) {
    auto engine = NoiseSource(cfg.seed, stream_of(0)).init_engine();
    shared = uniform_ensemble(cfg.n_particles, cfg.dim, cfg.init_low, cfg.init_high, engine);
  }

  std::vector<std::vector<double>> clipped(cfg.runs);
  std::vector<double> rates(cfg.runs);
  std::vector<char> diverged(cfg.runs, 0);

  const auto run_one = [&](std::size_t r) {
    NoiseSource noise(cfg.seed, stream_of(r));
    ParticleEnsemble init = shared ? *shared : [&] {
      auto engine = noise.init_engine();
      return uniform_ensemble(cfg.n_particles, cfg.dim, cfg.init_low, cfg.init_high, engine);
    }();
    const Trajectory traj = simulate(init, cfg.base, f, cfg.steps, noise);
    const auto& v = traj.diagnostics.v_series;
    const double threshold =
        cfg.clip.threshold_for(v.empty() ? std::numeric_limits<double>::infinity() : v.front());
    std::vector<double> out(points, std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < v.size(); ++k) out[k] = v[k];
    for (double& x : out) x = std::min(x, threshold);
    clipped[r] = std::move(out);
    diverged[r] = traj.diverged ? 1 : 0;
    rates[r] = traj.diverged ? std::numeric_limits<double>::infinity() : pathwise_log_rate(traj);
  };

  // Deterministic dynamics from a shared start give identical replicates.
  if (shared && cfg.base.mode == Mode::deterministic) {
    run_one(0);
    for (std::size_t r = 1; r < cfg.runs; ++r) {
      clipped[r] = clipped[0];
      rates[r] = rates[0];
      diverged[r] = diverged[0];
    }
  } else {
    parallel_for(cfg.runs, resolve_workers(cfg.workers), run_one);
  }

  McResult res;
  res.times.resize(points);
  res.mean_v.resize(points);
  res.stderr_v.resize(points);
  std::vector<double> column(cfg.runs);
  for (std::size_t k = 0; k < points; ++k) {
    res.times[k] = static_cast<double>(k) * cfg.base.dt;
    for (std::size_t r = 0; r < cfg.runs; ++r) column[r] = clipped[r][k];
    std::tie(res.mean_v[k], res.stderr_v[k]) = detail::sorted_mean_stderr(column);
  }
  for (char d : diverged) res.diverged_count += static_cast<std::size_t>(d);
  res.per_run_final_rates = std::move(rates);
  return res;
}

enum class SweepParam { alpha, n_particles, dim };

inline std::string_view to_string(SweepParam p) {
  switch (p) {
    case SweepParam::alpha: return "alpha";
    case SweepParam::n_particles: return "n";
    case SweepParam::dim: return "dim";
  }
  return "?";
}

struct SweepPoint {
  double value;
  McResult result;
};

/// Inclusive arithmetic grid from..to with the given step.
inline std::vector<double> make_grid(double from, double to, double step) {
  if (!(step > 0.0) || !(from <= to)) return {};
  std::vector<double> grid;
  const auto count = static_cast<std::size_t>(std::floor((to - from) / step + 1e-9)) + 1;
  for (std::size_t i = 0; i < count; ++i) grid.push_back(from + static_cast<double>(i) * step);
  return grid;
}

/// run_mc for every grid value. Value i uses the root seed derive_seed(seed, i).
inline std::vector<SweepPoint> sweep(const McConfig& cfg, SweepParam param, const std::vector<double>& values,
                                     const ObjectiveRegistry& registry = ObjectiveRegistry{}) {
  if (values.empty()) throw ConfigError("sweep grid is empty");
  std::vector<McConfig> configs;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    McConfig c = cfg;
    c.seed = derive_seed(cfg.seed, i);
    if (param == SweepParam::alpha) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("invalid alpha grid value " + std::to_string(v));
      c.base.alpha = v;
    } else {
      if (!(v >= 1.0) || v != std::floor(v))
        throw ConfigError("invalid " + std::string(to_string(param)) + " grid value " + std::to_string(v));
      (param == SweepParam::n_particles ? c.n_particles : c.dim) = static_cast<std::size_t>(v);
    }
    detail::validate(c, registry);
    configs.push_back(std::move(c));
  }
  std::vector<SweepPoint> out;
  for (std::size_t i = 0; i < configs.size(); ++i) out.push_back({values[i], run_mc(configs[i], registry)});
  return out;
}

}  // namespace cbo
