#pragma once

// Time steppers for the three CBO variants and trajectory simulation.
//
//   deterministic  X+ = X - lambda dt (X - 1 nu^T)
//   anisotropic    Z+ = Z - lambda dt (Z - 1 nu^T) + sigma (Z - 1 nu^T) o dW
//   isotropic      Z+^n = Z^n - lambda dt (Z^n - nu) + sigma |Z^n - nu|_2 dW^n
//
// with dW ~ N(0, dt I) and nu the softmax consensus point of the pre-step state.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "cbo_lab/ensemble.hpp"
#include "cbo_lab/errors.hpp"
#include "cbo_lab/random.hpp"
#include "cbo_lab/series.hpp"

namespace cbo {

enum class Mode { deterministic, anisotropic, isotropic };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::deterministic: return "deterministic";
    case Mode::anisotropic: return "anisotropic";
    case Mode::isotropic: return "isotropic";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "deterministic") return Mode::deterministic;
  if (s == "anisotropic") return Mode::anisotropic;
  if (s == "isotropic") return Mode::isotropic;
  throw ParameterError("unknown mode '" + std::string(s) + "'");
}

struct CboParams {
  double lambda = 1.0;
  double sigma = 1.0;
  double alpha = 1000.0;
  double dt = 0.05;
  Mode mode = Mode::anisotropic;

  /// Diffusion gain actually used; always 0 in deterministic mode.
  double effective_sigma() const noexcept { return mode == Mode::deterministic ? 0.0 : sigma; }

  /// lambda dt < 1: explicit Euler contracts the projected offset.
  bool euler_ok() const noexcept { return lambda * dt < 1.0; }

  /// 0 < dt < (2 lambda - sigma^2) / lambda^2 with 2 lambda > sigma^2.
  bool em_ms_ok() const noexcept {
    const double s2 = effective_sigma() * effective_sigma();
    if (!(2.0 * lambda > s2) || lambda == 0.0) return false;
    return dt > 0.0 && dt < (2.0 * lambda - s2) / (lambda * lambda);
  }

  void validate() const {
    if (!std::isfinite(lambda)) throw ParameterError("lambda must be finite");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ParameterError("dt must be positive and finite");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ParameterError("alpha must be positive and finite");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ParameterError("sigma must be nonnegative and finite");
  }
};

/// Brownian increments for one replicate. Agent n draws from its own engine
/// seeded with derive_seed(derive_seed(seed, stream_id), n), coordinates in
/// order, so a draw never depends on the ensemble's other agents.
class NoiseSource {
public:
  NoiseSource(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id), stream_seed_(derive_seed(seed, stream_id)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t stream_seed() const noexcept { return stream_seed_; }

  /// N x D matrix of independent N(0, dt) draws.
  Matrix increments(std::size_t n_particles, std::size_t dim, double dt) {
    if (agents_.empty()) {
      agents_.reserve(n_particles);
      for (std::size_t n = 0; n < n_particles; ++n) agents_.emplace_back(derive_seed(stream_seed_, n));
    } else if (agents_.size() != n_particles) {
      throw ShapeError("noise source was started with " + std::to_string(agents_.size()) + " agents");
    }
    const double scale = std::sqrt(dt);
    Matrix out(static_cast<Eigen::Index>(n_particles), static_cast<Eigen::Index>(dim));
    for (std::size_t n = 0; n < n_particles; ++n) {
      auto& a = agents_[n];
      for (std::size_t d = 0; d < dim; ++d)
        out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d)) = scale * a.normal(a.engine);
    }
    return out;
  }

  /// Engine for the replicate's initial positions, independent of the agent streams.
  Engine init_engine() const { return Engine(derive_seed(stream_seed_, kInitTag)); }

private:
  struct AgentStream {
    explicit AgentStream(std::uint64_t s) : engine(s) {}
    Engine engine;
    std::normal_distribution<double> normal;
  };

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t stream_seed_;
  std::vector<AgentStream> agents_;
};

/// Uniform box initialisation, agent-major.
inline ParticleEnsemble uniform_ensemble(std::size_t n_particles, std::size_t dim, double low, double high,
                                         Engine& engine) {
  if (!(low < high)) throw ParameterError("init box needs low < high");
  std::uniform_real_distribution<double> u(low, high);
  Matrix m(static_cast<Eigen::Index>(n_particles), static_cast<Eigen::Index>(dim));
  for (Eigen::Index n = 0; n < m.rows(); ++n)
    for (Eigen::Index d = 0; d < m.cols(); ++d) m(n, d) = u(engine);
  return ParticleEnsemble(std::move(m));
}

namespace detail {

struct CenteredState {
  Vector center;
  Matrix offsets;
};

// One step from the consensus point center + delta, in offset coordinates:
// Y = (E - 1 delta^T) - lambda dt (E - 1 delta^T) + diffusion, then re-centred.
// `increments` is ignored when the effective diffusion is zero, so sigma = 0
// reproduces the Euler step bit for bit.
inline CenteredState advance(const Vector& center, const Matrix& e, const Vector& delta, const CboParams& p,
                             const Matrix* increments) {
  const Matrix offset = e.rowwise() - delta.transpose();
  Matrix y = offset - (p.lambda * p.dt) * offset;
  const double sigma = p.effective_sigma();
  if (sigma != 0.0) {
    if (increments == nullptr || increments->rows() != e.rows() || increments->cols() != e.cols())
      throw ShapeError("increment matrix must match the ensemble shape");
    if (p.mode == Mode::anisotropic) {
      y += sigma * offset.cwiseProduct(*increments);
    } else {
      for (Eigen::Index n = 0; n < e.rows(); ++n) y.row(n) += (sigma * offset.row(n).norm()) * increments->row(n);
    }
  }
  const Vector shift = y.colwise().sum().transpose() / static_cast<double>(y.rows());
  return {center + delta + shift, y.rowwise() - shift.transpose()};
}

inline void require_mode(const CboParams& p, Mode m) {
  if (p.mode != m)
    throw ParameterError("stepper for " + std::string(to_string(m)) + " mode called with mode " +
                         std::string(to_string(p.mode)));
}

inline ParticleEnsemble step_with(const ParticleEnsemble& ens, const CboParams& p, const ObjectiveHandle& f,
                                  const Matrix* increments) {
  p.validate();
  const auto w = softmax_weights(ens, f, p.alpha);
  auto next = advance(ens.center(), ens.offsets(), weighted_offset(ens.offsets(), w), p, increments);
  return ParticleEnsemble::from_centered(std::move(next.center), std::move(next.offsets));
}

}  // namespace detail

inline ParticleEnsemble euler_step_deterministic(const ParticleEnsemble& ens, const CboParams& p,
                                                 const ObjectiveHandle& f) {
  detail::require_mode(p, Mode::deterministic);
  return detail::step_with(ens, p, f, nullptr);
}

/// Anisotropic EM step with an explicit N x D increment matrix.
inline ParticleEnsemble em_step_anisotropic(const ParticleEnsemble& ens, const CboParams& p,
                                            const ObjectiveHandle& f, const Matrix& increments) {
  detail::require_mode(p, Mode::anisotropic);
  return detail::step_with(ens, p, f, &increments);
}

inline ParticleEnsemble em_step_anisotropic(const ParticleEnsemble& ens, const CboParams& p,
                                            const ObjectiveHandle& f, NoiseSource& noise) {
  return em_step_anisotropic(ens, p, f, noise.increments(ens.n_particles(), ens.dim(), p.dt));
}

/// Isotropic EM step with an explicit N x D increment matrix.
inline ParticleEnsemble em_step_isotropic(const ParticleEnsemble& ens, const CboParams& p,
                                          const ObjectiveHandle& f, const Matrix& increments) {
  detail::require_mode(p, Mode::isotropic);
  return detail::step_with(ens, p, f, &increments);
}

inline ParticleEnsemble em_step_isotropic(const ParticleEnsemble& ens, const CboParams& p,
                                          const ObjectiveHandle& f, NoiseSource& noise) {
  return em_step_isotropic(ens, p, f, noise.increments(ens.n_particles(), ens.dim(), p.dt));
}

/// Mode-dispatched step. Deterministic mode draws no noise.
inline ParticleEnsemble step(const ParticleEnsemble& ens, const CboParams& p, const ObjectiveHandle& f,
                             NoiseSource& noise) {
  switch (p.mode) {
    case Mode::deterministic: return euler_step_deterministic(ens, p, f);
    case Mode::anisotropic: return em_step_anisotropic(ens, p, f, noise);
    case Mode::isotropic: return em_step_isotropic(ens, p, f, noise);
  }
  throw ParameterError("unknown mode");
}

struct Snapshot {
  std::size_t step;
  ParticleEnsemble state;
};

struct Trajectory {
  std::vector<double> times;  ///< k dt for every recorded step k
  std::vector<Snapshot> snapshots;
  DiagnosticSeries diagnostics;
  bool diverged = false;
  std::optional<std::size_t> diverged_step;  ///< first step whose state was non-finite
};

/// Runs `steps` steps and records diagnostics at k = 0..steps. A non-finite
/// state or objective value truncates the record and sets `diverged`.
/// Snapshots are kept every `snapshot_stride` steps (0 disables them).
inline Trajectory simulate(const ParticleEnsemble& init, const CboParams& p, const ObjectiveHandle& f,
                           std::size_t steps, NoiseSource& noise, std::size_t snapshot_stride = 0) {
  if (steps < 1) throw ParameterError("simulate needs steps >= 1");
  p.validate();
  const bool stochastic = p.effective_sigma() != 0.0;

  Trajectory traj;
  traj.times.reserve(steps + 1);
  ParticleEnsemble x = init;
  for (std::size_t k = 0;; ++k) {
    Vector values;
    try {
      values = evaluate_all(x, f);
    } catch (const ObjectiveError&) {
      traj.diverged = true;
      traj.diverged_step = k;
      break;
    }
    const auto w = softmax_from_values(values, p.alpha);
    const Vector delta = weighted_offset(x.offsets(), w);
    const Vector nu = x.center() + delta;
    const double v = x.offsets().squaredNorm();
    if (!std::isfinite(v) || !nu.allFinite()) {
      traj.diverged = true;
      traj.diverged_step = k;
      break;
    }
    const double t = static_cast<double>(k) * p.dt;
    traj.times.push_back(t);
    traj.diagnostics.push(t, v, std::sqrt(v), nu, values.minCoeff());
    if (snapshot_stride != 0 && k % snapshot_stride == 0) traj.snapshots.push_back({k, x});
    if (k == steps) break;

    detail::CenteredState next;
    if (stochastic) {
      const Matrix inc = noise.increments(x.n_particles(), x.dim(), p.dt);
      next = detail::advance(x.center(), x.offsets(), delta, p, &inc);
    } else {
      next = detail::advance(x.center(), x.offsets(), delta, p, nullptr);
    }
    const bool finite = next.center.allFinite() && next.offsets.allFinite() &&
                        (next.offsets.rowwise() + next.center.transpose()).allFinite();
    if (!finite) {
      traj.diverged = true;
      traj.diverged_step = k + 1;
      break;
    }
    x = ParticleEnsemble::from_centered(std::move(next.center), std::move(next.offsets));
  }
  return traj;
}

}  // namespace cbo
