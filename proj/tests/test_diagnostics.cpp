#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "cbo_lab/diagnostics.hpp"
#include "cbo_lab/objectives.hpp"

using namespace cbo;

namespace {

// -(1/dt) E ln|1 - lambda dt + sigma sqrt(dt) Z| by adaptive quadrature
// (scipy.integrate.quad, split at the log singularity).
constexpr double kAsRateQuadrature_1_1_005 = 1.6391336289377734;
constexpr double kAsRateQuadrature_m01_1_001 = 0.40678409743845023;

}  // namespace

TEST(TheoreticalRates, BaseSetting) {
  const auto r = theoretical_rates(CboParams{1.0, 1.0, 1000.0, 0.05, Mode::anisotropic}, 2);
  EXPECT_DOUBLE_EQ(r.det_rate, 1.0);
  EXPECT_DOUBLE_EQ(r.as_rate, 1.5);
  EXPECT_DOUBLE_EQ(r.ms_rate, 1.0);
  EXPECT_TRUE(r.ms_condition_ok);
  EXPECT_NEAR(r.em_ms_rate, 0.95, 1e-15);
  EXPECT_NEAR(r.em_ms_factor, 0.9525, 1e-15);
  ASSERT_TRUE(r.em_step_bound.has_value());
  EXPECT_DOUBLE_EQ(*r.em_step_bound, 1.0);
  EXPECT_TRUE(r.em_step_ok);
  EXPECT_TRUE(r.euler_stable);
  EXPECT_DOUBLE_EQ(r.isotropic_mf_rate, 0.0);
  EXPECT_FALSE(r.isotropic_mf_condition_ok);
}

TEST(TheoreticalRates, ViolatedMeanSquareCondition) {
  const auto r = theoretical_rates(CboParams{1.0, std::sqrt(2.1), 1.0, 0.05, Mode::anisotropic}, 2);
  EXPECT_FALSE(r.ms_condition_ok);
  EXPECT_NEAR(r.as_rate, 2.05, 1e-14);
  EXPECT_FALSE(r.em_step_bound.has_value());
  EXPECT_FALSE(r.em_step_ok);
  EXPECT_GT(r.em_ms_factor, 1.0);
}

TEST(TheoreticalRates, NoiseFreeLimit) {
  for (Mode m : {Mode::anisotropic, Mode::deterministic}) {
    const double sigma = m == Mode::deterministic ? 5.0 : 0.0;  // ignored in deterministic mode
    const auto r = theoretical_rates(CboParams{0.7, sigma, 1.0, 0.05, m}, 3);
    EXPECT_DOUBLE_EQ(r.as_rate, 0.7);
    EXPECT_DOUBLE_EQ(r.ms_rate, 1.4);
    EXPECT_DOUBLE_EQ(r.isotropic_mf_rate, 1.4);
  }
}

TEST(TheoreticalRates, Invariants) {
  for (double lambda : {-0.5, 0.1, 1.0, 3.0})
    for (double sigma : {0.0, 0.5, 1.0, 2.0})
      for (double dt : {0.1, 0.05, 0.01}) {
        const auto r = theoretical_rates(CboParams{lambda, sigma, 1.0, dt, Mode::anisotropic}, 2);
        EXPECT_LE(r.em_ms_rate, r.ms_rate);
        EXPECT_GE(r.as_rate, r.ms_rate / 2.0);
        if (!r.ms_condition_ok) EXPECT_FALSE(r.em_step_bound.has_value());
      }
  double prev = -std::numeric_limits<double>::infinity();
  for (double dt : {0.1, 0.05, 0.01}) {
    const auto r = theoretical_rates(CboParams{1.0, 1.0, 1.0, dt, Mode::anisotropic}, 2);
    EXPECT_GT(r.em_ms_rate, prev);
    prev = r.em_ms_rate;
  }
  EXPECT_LT(prev, 1.0);
}

TEST(AsRateMc, NoiseFreeIsExact) {
  const auto est = em_as_rate_mc(1.0, 0.0, 0.05, 10000, 1);
  EXPECT_EQ(est.estimate, -std::log(0.95) / 0.05);
  EXPECT_NEAR(est.estimate, 1.0258658877510114, 1e-15);
  EXPECT_EQ(est.std_error, 0.0);
}

TEST(AsRateMc, AgreesWithQuadrature) {
  const auto est = em_as_rate_mc(1.0, 1.0, 0.05, 1000000, 7);
  EXPECT_NEAR(est.estimate, kAsRateQuadrature_1_1_005, 4.0 * est.std_error);
  // O(dt) from the continuous rate 1.5.
  EXPECT_NEAR(est.estimate, 1.5, 0.2);
  EXPECT_GT(est.min_abs_argument, 0.0);
}

TEST(AsRateMc, StabilizationByNoise) {
  const auto est = em_as_rate_mc(-0.1, 1.0, 0.01, 1000000, 8);
  EXPECT_GT(est.estimate, 3.0 * est.std_error);
  EXPECT_NEAR(est.estimate, kAsRateQuadrature_m01_1_001, 4.0 * est.std_error);
}

TEST(AsRateMc, Errors) {
  EXPECT_THROW(em_as_rate_mc(1.0, 1.0, 0.05, 9999, 1), ParameterError);
  EXPECT_THROW(em_as_rate_mc(1.0, 1.0, 0.0, 10000, 1), ParameterError);
}

TEST(FitDecayRate, ExactExponential) {
  std::vector<double> t, v;
  for (int k = 0; k < 100; ++k) {
    t.push_back(0.05 * k);
    v.push_back(std::exp(-2.0 * t.back()));
  }
  const auto fit = fit_decay_rate(t, v);
  EXPECT_NEAR(fit.slope, -2.0, 1e-10);
  EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);
}

TEST(FitDecayRate, ConstantSeries) {
  const std::vector<double> t{0, 1, 2, 3}, v{4, 4, 4, 4};
  const auto fit = fit_decay_rate(t, v);
  EXPECT_EQ(fit.slope, 0.0);
}

TEST(FitDecayRate, DeterministicCboSeries) {
  NoiseSource noise(1, 0);
  auto e = noise.init_engine();
  const auto init = uniform_ensemble(100, 2, -5, 5, e);
  const auto traj = simulate(init, CboParams{1.0, 0.0, 1000.0, 0.05, Mode::deterministic}, make_rastrigin(), 100, noise);
  const auto fit = fit_decay_rate(traj.diagnostics.times, traj.diagnostics.v_series);
  EXPECT_NEAR(fit.slope, -2.051731775502023, 1e-6);
}

TEST(FitDecayRate, BurnInAndErrors) {
  const std::vector<double> t{0, 1, 2, 3, 4};
  const std::vector<double> v{100.0, 1.0, std::exp(-1.0), std::exp(-2.0), std::exp(-3.0)};
  EXPECT_NEAR(fit_decay_rate(t, v, 1).slope, -1.0, 1e-12);
  EXPECT_THROW(fit_decay_rate(t, v, 3), ParameterError);

  const std::vector<double> bad{1.0, 0.5, 0.0, 0.1};
  try {
    fit_decay_rate(std::vector<double>{0, 1, 2, 3}, bad);
    FAIL();
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("index 2"), std::string::npos);
  }
}

TEST(PathwiseLogRate, DeterministicTrajectory) {
  NoiseSource noise(1, 0);
  auto e = noise.init_engine();
  const auto init = uniform_ensemble(100, 2, -5, 5, e);
  const auto traj = simulate(init, CboParams{1.0, 0.0, 1000.0, 0.05, Mode::deterministic}, make_rastrigin(), 100, noise);
  EXPECT_NEAR(pathwise_log_rate(traj), -1.0258658877510114, 1e-8);
}

// Exact linear recursion E+ = P(E o G), N = 100, D = 2, renormalised every
// step; mean over 8 seeds was -0.965 with seeds between -0.93 and -0.99. The
// re-centring by P keeps feeding small offsets from the ensemble mean, so
// the norm decays well slower than a single agent's rate.
constexpr double kCoupledPathwiseRate_n100 = -0.965;

TEST(PathwiseLogRate, LongAnisotropicRunMatchesTheCoupledRecursion) {
  NoiseSource noise(11, 0);
  auto e = noise.init_engine();
  const auto init = uniform_ensemble(100, 2, -5, 5, e);
  const auto traj = simulate(init, CboParams{1.0, 1.0, 1.0, 0.05, Mode::anisotropic}, make_constant(), 2000, noise);
  ASSERT_FALSE(traj.diverged);
  EXPECT_NEAR(pathwise_log_rate(traj), kCoupledPathwiseRate_n100, 0.1);
  EXPECT_GT(pathwise_log_rate(traj), -kAsRateQuadrature_1_1_005);
}

TEST(PathwiseLogRate, Degenerate) {
  Trajectory t;
  t.diagnostics.push(0.0, 4.0, 2.0, Vector::Zero(1), 0.0);
  EXPECT_EQ(pathwise_log_rate(t), 0.0);
  t.diagnostics.push(1.0, 4.0, 2.0, Vector::Zero(1), 0.0);
  EXPECT_EQ(pathwise_log_rate(t), 0.0);
  t.diagnostics.push(2.0, 0.0, 0.0, Vector::Zero(1), 0.0);
  EXPECT_EQ(pathwise_log_rate(t), -std::numeric_limits<double>::infinity());
}
