#pragma once

// Linear algebra behind the per-coordinate form of the dynamics:
//   L_hat = I - 1 w^T   (rows sum to zero, spectrum {0, 1, ..., 1})
//   P     = I - (1/N) 1 1^T
// and the identity P L_hat = P that makes the projected dynamics linear.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <vector>

#include "cbo_lab/ensemble.hpp"
#include "cbo_lab/errors.hpp"

namespace cbo {

using DenseMatrix = Eigen::MatrixXd;

struct LaplacianHat {
  std::size_t size = 0;
  Vector weights;
  DenseMatrix dense;
};

struct Projector {
  std::size_t size = 0;
  DenseMatrix dense;
};

inline LaplacianHat build_l_hat(const WeightVector& w) {
  const auto n = static_cast<Eigen::Index>(w.size());
  DenseMatrix m = DenseMatrix::Identity(n, n) - Vector::Ones(n) * w.values().transpose();
  return {w.size(), w.values(), std::move(m)};
}

inline Projector make_projector(std::size_t n) {
  if (n < 1) throw ShapeError("projector size must be >= 1");
  const auto k = static_cast<Eigen::Index>(n);
  return {n, DenseMatrix::Identity(k, k) - DenseMatrix::Constant(k, k, 1.0 / static_cast<double>(n))};
}

/// det(a I + c d^T) by the matrix determinant lemma. For a = 0 the matrix is
/// the rank-one c d^T itself, whose determinant is d.c for N = 1 and 0 otherwise.
inline double rank_one_det(double a_scale, const Vector& c, const Vector& d) {
  if (c.size() != d.size()) throw ShapeError("rank_one_det needs equal-length vectors");
  const auto n = static_cast<double>(c.size());
  if (a_scale == 0.0) return c.size() == 1 ? c[0] * d[0] : 0.0;
  return std::pow(a_scale, n) * (1.0 + d.dot(c) / a_scale);
}

/// det(L_hat - mu I) = det((1 - mu) I - 1 w^T), evaluated without forming L_hat.
inline double l_hat_char_poly(const Vector& weights, double mu) {
  return rank_one_det(1.0 - mu, -Vector::Ones(weights.size()), weights);
}

struct SpectrumReport {
  std::vector<double> eigenvalues;  ///< real parts, ascending
  double max_imag = 0.0;
  double max_deviation = 0.0;       ///< from the expected {0, 1, ..., 1}
  /// Largest |prod_i(lambda_i - mu) - det(L_hat - mu I)| over a mu grid, the
  /// second side computed with the rank-one determinant formula.
  double char_poly_residual = 0.0;
  bool converged = true;
  bool pass = false;
};

/// Dense eigen-decomposition of L_hat compared against {0, 1^(N-1)} within tol.
inline SpectrumReport verify_spectrum(const LaplacianHat& l, double tol) {
  SpectrumReport rep;
  if (l.size == 1) {
    rep.eigenvalues = {l.dense(0, 0)};
    rep.max_deviation = std::abs(l.dense(0, 0));
    rep.pass = rep.max_deviation <= tol;
    return rep;
  }

  Eigen::EigenSolver<DenseMatrix> solver(l.dense, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    rep.converged = false;
    rep.max_deviation = std::numeric_limits<double>::infinity();
    return rep;
  }
  const auto& ev = solver.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    rep.eigenvalues.push_back(ev[i].real());
    rep.max_imag = std::max(rep.max_imag, std::abs(ev[i].imag()));
  }
  std::sort(rep.eigenvalues.begin(), rep.eigenvalues.end());
  for (std::size_t i = 0; i < rep.eigenvalues.size(); ++i) {
    const double expected = i == 0 ? 0.0 : 1.0;
    rep.max_deviation = std::max(rep.max_deviation, std::abs(rep.eigenvalues[i] - expected));
  }

  // Grid inside [-0.5, 1.5]; the polynomial is bounded there by 1.5^N, so
  // the residual is taken relative to that scale.
  const double scale = std::pow(1.5, static_cast<double>(l.size));
  for (int g = 0; g <= 20; ++g) {
    const double mu = -0.5 + 0.1 * g;
    std::complex<double> prod(1.0, 0.0);
    for (Eigen::Index i = 0; i < ev.size(); ++i) prod *= ev[i] - mu;
    const double ref = l_hat_char_poly(l.weights, mu);
    rep.char_poly_residual = std::max(rep.char_poly_residual, std::abs(prod - ref) / scale);
  }

  rep.pass = rep.max_deviation <= tol && rep.max_imag <= tol && rep.char_poly_residual <= tol;
  return rep;
}

/// max |P L_hat - P| <= tol.
inline double projection_identity_residual(const LaplacianHat& l, const Projector& proj) {
  if (l.size != proj.size) throw ShapeError("L_hat and P sizes differ");
  return (proj.dense * l.dense - proj.dense).cwiseAbs().maxCoeff();
}

inline bool verify_projection_identity(const LaplacianHat& l, const Projector& proj, double tol) {
  return projection_identity_residual(l, proj) <= tol;
}

}  // namespace cbo
