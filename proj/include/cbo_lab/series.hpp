#pragma once

#include <cstddef>
#include <vector>

#include "cbo_lab/ensemble.hpp"

namespace cbo {

/// Per-step record of a trajectory. All members have the same length.
struct DiagnosticSeries {
  std::vector<double> times;
  std::vector<double> v_series;       ///< squared distance to the consensus manifold
  std::vector<double> e_norm_series;  ///< Frobenius norm of the projected offset
  std::vector<Vector> consensus_series;
  std::vector<double> best_f_series;

  std::size_t size() const noexcept { return times.size(); }

  void push(double t, double v, double e_norm, Vector consensus, double best_f) {
    times.push_back(t);
    v_series.push_back(v);
    e_norm_series.push_back(e_norm);
    consensus_series.push_back(std::move(consensus));
    best_f_series.push_back(best_f);
  }
};

}  // namespace cbo
