#pragma once

// Particle-state representation, softmax weights, consensus point and the
// projection onto the orthogonal complement of the consensus manifold.
//
// Layout: positions are stored row-major, one row per agent and one column
// per spatial coordinate. Per-agent work (objective evaluation) reads a
// contiguous row; per-coordinate work reads a column.

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cbo_lab/errors.hpp"

namespace cbo {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// N x D agent positions. All entries are finite, N >= 1 and D >= 1.
///
/// Alongside the positions the ensemble keeps its column mean and the offsets
/// from it. Steppers advance the offsets directly, so the spread keeps full
/// relative precision long after it drops below the spacing of doubles near
/// the consensus point.
class ParticleEnsemble {
public:
  explicit ParticleEnsemble(Matrix positions) : positions_(std::move(positions)) {
    check_shape(positions_);
    if (!positions_.allFinite())
      throw ParameterError("ensemble contains non-finite coordinates");
    const Vector anchor = positions_.row(0).transpose();
    const Matrix rel = positions_.rowwise() - anchor.transpose();
    const Vector shift = rel.colwise().sum().transpose() / static_cast<double>(rel.rows());
    center_ = anchor + shift;
    offsets_ = rel.rowwise() - shift.transpose();
  }

  /// Ensemble with column mean `center` and rows `center + offsets.row(n)`.
  /// `offsets` should have zero column sums.
  static ParticleEnsemble from_centered(Vector center, Matrix offsets) {
    check_shape(offsets);
    if (center.size() != offsets.cols()) throw ShapeError("center length does not match the dimension");
    if (!center.allFinite() || !offsets.allFinite())
      throw ParameterError("ensemble contains non-finite coordinates");
    Matrix positions = offsets.rowwise() + center.transpose();
    if (!positions.allFinite()) throw ParameterError("ensemble contains non-finite coordinates");
    return ParticleEnsemble(std::move(center), std::move(offsets), std::move(positions));
  }

  /// Every agent placed at `point`.
  static ParticleEnsemble at_consensus(std::size_t n_particles, const Vector& point) {
    return from_centered(point, Matrix::Zero(static_cast<Eigen::Index>(n_particles), point.size()));
  }

  std::size_t n_particles() const noexcept { return static_cast<std::size_t>(positions_.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(positions_.cols()); }
  const Matrix& positions() const noexcept { return positions_; }
  const Vector& center() const noexcept { return center_; }
  /// P X, with P = I - (1/N) 1 1^T.
  const Matrix& offsets() const noexcept { return offsets_; }

  std::span<const double> agent(std::size_t n) const {
    return {positions_.data() + n * dim(), dim()};
  }

  friend bool operator==(const ParticleEnsemble& a, const ParticleEnsemble& b) {
    return a.positions_.rows() == b.positions_.rows() && a.positions_.cols() == b.positions_.cols() &&
           a.positions_ == b.positions_ && a.offsets_ == b.offsets_;
  }

private:
  ParticleEnsemble(Vector center, Matrix offsets, Matrix positions)
      : positions_(std::move(positions)), center_(std::move(center)), offsets_(std::move(offsets)) {}

  static void check_shape(const Matrix& m) {
    if (m.rows() < 1 || m.cols() < 1)
      throw ShapeError("ensemble needs at least one particle and one dimension");
  }

  Matrix positions_;
  Vector center_;
  Matrix offsets_;
};

/// Convex weights over the agents. Entries are nonnegative and sum to one.
class WeightVector {
public:
  static constexpr double kSumTolerance = 1e-12;

  static WeightVector from_values(Vector w) {
    if (w.size() < 1) throw ShapeError("weight vector is empty");
    if (!w.allFinite() || (w.array() < 0.0).any())
      throw ParameterError("weights must be finite and nonnegative");
    if (std::abs(w.sum() - 1.0) > kSumTolerance)
      throw ParameterError("weights do not sum to 1");
    return WeightVector(std::move(w));
  }

  /// Skips the simplex check. Only for negative-control tests.
  static WeightVector unchecked(Vector w) { return WeightVector(std::move(w)); }

  std::size_t size() const noexcept { return static_cast<std::size_t>(w_.size()); }
  const Vector& values() const noexcept { return w_; }
  double operator[](std::size_t i) const { return w_[static_cast<Eigen::Index>(i)]; }

private:
  explicit WeightVector(Vector w) : w_(std::move(w)) {}
  Vector w_;
};

/// A named map R^D -> R. `evaluate` must be deterministic.
struct ObjectiveHandle {
  std::string name;
  std::function<double(std::span<const double>)> evaluate;
  /// Known global minimizer for a given dimension, if there is one.
  std::function<std::optional<Vector>(std::size_t)> known_minimizer;

  double operator()(std::span<const double> x) const { return evaluate(x); }
};

struct ConsensusState {
  Vector point;
  WeightVector weights;
};

/// Objective value of every agent, in agent order.
inline Vector evaluate_all(const ParticleEnsemble& ens, const ObjectiveHandle& f) {
  Vector values(static_cast<Eigen::Index>(ens.n_particles()));
  for (std::size_t n = 0; n < ens.n_particles(); ++n) {
    const double v = f(ens.agent(n));
    if (!std::isfinite(v)) throw ObjectiveError(n, v);
    values[static_cast<Eigen::Index>(n)] = v;
  }
  return values;
}

/// Softmax of -alpha * values, shifted by the minimum so the best agent gets
/// exp(0) and the normaliser is >= 1.
inline WeightVector softmax_from_values(const Vector& values, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ParameterError("alpha must be positive and finite");
  for (Eigen::Index n = 0; n < values.size(); ++n)
    if (!std::isfinite(values[n])) throw ObjectiveError(static_cast<std::size_t>(n), values[n]);
  const double f_min = values.minCoeff();
  Vector w = (-alpha * (values.array() - f_min)).exp().matrix();
  w /= w.sum();
  return WeightVector::unchecked(std::move(w));
}

inline WeightVector softmax_weights(const ParticleEnsemble& ens, const ObjectiveHandle& f, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ParameterError("alpha must be positive and finite");
  return softmax_from_values(evaluate_all(ens, f), alpha);
}

/// Weighted mean of the offsets, accumulated relative to the heaviest agent
/// so a coincident set of rows returns that row exactly.
inline Vector weighted_offset(const Matrix& e, const WeightVector& w) {
  Eigen::Index ref = 0;
  w.values().maxCoeff(&ref);
  const Vector anchor = e.row(ref).transpose();
  Vector acc = Vector::Zero(e.cols());
  for (Eigen::Index m = 0; m < e.rows(); ++m) {
    if (m == ref) continue;
    acc += w.values()[m] * (e.row(m).transpose() - anchor);
  }
  return anchor + acc;
}

/// Consensus point center + sum_m w_m offset_m. A coincident ensemble returns
/// its common position exactly.
inline ConsensusState consensus_point(const ParticleEnsemble& ens, const WeightVector& w) {
  if (w.size() != ens.n_particles())
    throw ShapeError("weight vector length " + std::to_string(w.size()) + " does not match " +
                     std::to_string(ens.n_particles()) + " particles");
  return ConsensusState{ens.center() + weighted_offset(ens.offsets(), w), w};
}

/// Per-coordinate mean of the rows, anchored at the first agent.
inline Vector column_mean(const Matrix& x) {
  const Vector anchor = x.row(0).transpose();
  return anchor + (x.rowwise() - anchor.transpose()).colwise().sum().transpose() / static_cast<double>(x.rows());
}

/// P * X column by column, with P = I - (1/N) 1 1^T.
inline Matrix projected_offset(const Matrix& x) {
  return x.rowwise() - column_mean(x).transpose();
}

inline const Matrix& projected_offset(const ParticleEnsemble& ens) { return ens.offsets(); }

/// Squared Frobenius norm of the projected offset.
inline double distance_sq_to_manifold(const ParticleEnsemble& ens) {
  return ens.offsets().squaredNorm();
}

}  // namespace cbo
