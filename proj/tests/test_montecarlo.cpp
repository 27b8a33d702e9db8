#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "cbo_lab/montecarlo.hpp"

using namespace cbo;

namespace {

McConfig small_config(Mode mode, double sigma = 1.0) {
  McConfig cfg;
  cfg.base = CboParams{1.0, sigma, 1000.0, 0.05, mode};
  cfg.n_particles = 30;
  cfg.dim = 2;
  cfg.steps = 40;
  cfg.runs = 24;
  cfg.seed = 9;
  return cfg;
}

}  // namespace

TEST(RunMc, DeterministicReplicatesCoincide) {
  auto cfg = small_config(Mode::deterministic);
  cfg.runs = 5;
  const auto res = run_mc(cfg);
  ASSERT_EQ(res.mean_v.size(), 41u);
  for (double s : res.stderr_v) EXPECT_EQ(s, 0.0);

  NoiseSource noise(cfg.seed, 0);
  auto e = noise.init_engine();
  const auto init = uniform_ensemble(cfg.n_particles, cfg.dim, cfg.init_low, cfg.init_high, e);
  const auto traj = simulate(init, cfg.base, make_rastrigin(), cfg.steps, noise);
  EXPECT_EQ(res.mean_v, traj.diagnostics.v_series);
}

TEST(RunMc, PerReplicateInitInDeterministicMode) {
  auto cfg = small_config(Mode::deterministic);
  cfg.share_init = false;
  const auto res = run_mc(cfg);
  EXPECT_GT(res.stderr_v[0], 0.0);
  const auto fit = fit_decay_rate(res.times, res.mean_v);
  EXPECT_NEAR(fit.slope, 2.0 * std::log(0.95) / 0.05, 1e-6 * 2.0517);
}

TEST(RunMc, IndependentOfWorkerCount) {
  auto cfg = small_config(Mode::anisotropic);
  cfg.workers = 1;
  const auto a = run_mc(cfg);
  cfg.workers = 4;
  const auto b = run_mc(cfg);
  EXPECT_EQ(a.mean_v, b.mean_v);
  EXPECT_EQ(a.stderr_v, b.stderr_v);
  EXPECT_EQ(a.per_run_final_rates, b.per_run_final_rates);
}

TEST(RunMc, SwappingStreamsPermutesRunsButNotTheMean) {
  auto cfg = small_config(Mode::isotropic, 0.7);
  cfg.runs = 6;
  cfg.stream_ids = {0, 1, 2, 3, 4, 5};
  const auto a = run_mc(cfg);
  cfg.stream_ids = {4, 1, 2, 3, 0, 5};
  const auto b = run_mc(cfg);
  EXPECT_EQ(a.mean_v, b.mean_v);
  EXPECT_EQ(a.stderr_v, b.stderr_v);
  EXPECT_EQ(a.per_run_final_rates[0], b.per_run_final_rates[4]);
  EXPECT_EQ(a.per_run_final_rates[4], b.per_run_final_rates[0]);
  EXPECT_NE(a.per_run_final_rates[0], a.per_run_final_rates[4]);
}

TEST(RunMc, ClippingCapsEachRun) {
  auto cfg = small_config(Mode::anisotropic, 2.5);
  cfg.clip = ClipPolicy::none();
  const auto raw = run_mc(cfg);
  cfg.clip = ClipPolicy::absolute(200.0);
  const auto clipped = run_mc(cfg);
  for (std::size_t k = 0; k < raw.mean_v.size(); ++k) {
    EXPECT_LE(clipped.mean_v[k], 200.0);
    EXPECT_LE(clipped.mean_v[k], raw.mean_v[k]);
  }
  cfg.clip = ClipPolicy::relative(1.0);
  const auto rel = run_mc(cfg);
  for (std::size_t k = 0; k < rel.mean_v.size(); ++k) EXPECT_LE(rel.mean_v[k], rel.mean_v[0] * (1 + 1e-12));
}

TEST(RunMc, DivergedRunsAreCountedAndClipped) {
  auto cfg = small_config(Mode::anisotropic, 60.0);
  cfg.base.dt = 0.5;
  cfg.objective = "constant";
  cfg.steps = 600;
  cfg.runs = 4;
  cfg.clip = ClipPolicy::absolute(1e6);
  const auto res = run_mc(cfg);
  EXPECT_EQ(res.diverged_count, 4u);
  EXPECT_EQ(res.mean_v.back(), 1e6);
  for (double r : res.per_run_final_rates) EXPECT_TRUE(std::isinf(r));

  cfg.clip = ClipPolicy::none();
  EXPECT_TRUE(std::isinf(run_mc(cfg).mean_v.back()));
}

TEST(RunMc, DivergenceAtTheFirstStep) {
  ObjectiveRegistry registry;
  registry.add(ObjectiveHandle{"far_nan",
                               [](std::span<const double> x) {
                                 return std::abs(x[0]) > 1.0 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
                               },
                               {}});
  auto cfg = small_config(Mode::anisotropic);
  cfg.objective = "far_nan";
  cfg.runs = 3;
  const auto res = run_mc(cfg, registry);
  EXPECT_EQ(res.diverged_count, 3u);
  for (double v : res.mean_v) EXPECT_TRUE(std::isinf(v));
}

TEST(RunMc, StrongNoiseRaisesTheMeanEarly) {
  auto cfg = small_config(Mode::anisotropic, std::sqrt(2.1));
  cfg.n_particles = 100;
  cfg.runs = 300;
  cfg.steps = 10;
  const auto res = run_mc(cfg);
  EXPECT_GT(res.mean_v[10], res.mean_v[0]);
}

TEST(RunMc, ConfigErrors) {
  auto cfg = small_config(Mode::anisotropic);
  cfg.objective = "nope";
  EXPECT_THROW(run_mc(cfg), ConfigError);
  cfg.objective = "rosenbrock";
  cfg.dim = 1;
  EXPECT_THROW(run_mc(cfg), ConfigError);
  cfg = small_config(Mode::anisotropic);
  cfg.runs = 0;
  EXPECT_THROW(run_mc(cfg), ConfigError);
  cfg = small_config(Mode::anisotropic);
  cfg.init_low = 1.0;
  cfg.init_high = 1.0;
  EXPECT_THROW(run_mc(cfg), ConfigError);
  cfg = small_config(Mode::anisotropic);
  cfg.stream_ids = {1, 2};
  EXPECT_THROW(run_mc(cfg), ConfigError);
}

TEST(Grid, SweepGrids) {
  EXPECT_EQ(make_grid(1, 1001, 20).size(), 51u);
  EXPECT_EQ(make_grid(10, 1010, 20).size(), 51u);
  EXPECT_EQ(make_grid(1, 201, 10).size(), 21u);
  EXPECT_EQ(make_grid(1, 201, 10).back(), 201.0);
  EXPECT_EQ(make_grid(5, 5, 1).size(), 1u);
  EXPECT_TRUE(make_grid(5, 1, 1).empty());
  EXPECT_TRUE(make_grid(1, 5, 0).empty());
}

TEST(Sweep, AlphaDoesNotChangeTheDeterministicRate) {
  auto cfg = small_config(Mode::deterministic);
  cfg.runs = 3;
  const auto pts = sweep(cfg, SweepParam::alpha, make_grid(1, 1001, 200));
  ASSERT_EQ(pts.size(), 6u);
  for (const auto& pt : pts) {
    const auto fit = fit_decay_rate(pt.result.times, pt.result.mean_v);
    EXPECT_NEAR(fit.slope, -2.051731775502023, 1e-6 * 2.0517) << pt.value;
  }
}

TEST(Sweep, DimensionRaisesTheInitialDistance) {
  auto cfg = small_config(Mode::deterministic);
  cfg.runs = 2;
  cfg.steps = 5;
  const auto pts = sweep(cfg, SweepParam::dim, {1, 11, 21, 31});
  for (std::size_t i = 1; i < pts.size(); ++i) EXPECT_GT(pts[i].result.mean_v[0], pts[i - 1].result.mean_v[0]);
}

TEST(Sweep, UsesOneSeedPerGridValue) {
  auto cfg = small_config(Mode::anisotropic);
  cfg.runs = 2;
  cfg.steps = 5;
  const auto pts = sweep(cfg, SweepParam::alpha, {5.0, 5.0});
  EXPECT_NE(pts[0].result.mean_v, pts[1].result.mean_v);
  auto c1 = cfg;
  c1.base.alpha = 5.0;
  c1.seed = derive_seed(cfg.seed, 1);
  EXPECT_EQ(run_mc(c1).mean_v, pts[1].result.mean_v);
}

TEST(Sweep, InvalidGridValues) {
  const auto cfg = small_config(Mode::deterministic);
  EXPECT_THROW(sweep(cfg, SweepParam::n_particles, {}), ConfigError);
  EXPECT_THROW(sweep(cfg, SweepParam::n_particles, {10, 0}), ConfigError);
  EXPECT_THROW(sweep(cfg, SweepParam::dim, {2.5}), ConfigError);
  EXPECT_THROW(sweep(cfg, SweepParam::alpha, {-1}), ConfigError);
}
