// cbo_lab command-line front end.
//
//   cbo_lab simulate | mc | sweep | rates | verify-spectral | replay
//
// Series are written as CSV, reports and manifests as JSON. Every floating
// point number is printed with 17 significant digits.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cbo_lab/cbo_lab.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Options shared by simulate, mc and sweep.
struct RunOptions {
  std::string objective = "rastrigin";
  std::size_t n = 100;
  std::size_t dim = 2;
  double lambda = 1.0;
  double sigma = 1.0;
  std::optional<double> sigma_sq;
  double alpha = 1000.0;
  double dt = 0.05;
  std::size_t steps = 100;
  std::string mode = "anisotropic";
  std::uint64_t seed = 42;
  std::vector<double> init{-5.0, 5.0};
  std::string out = ".";

  void add_to(CLI::App& app) {
    app.add_option("--objective", objective, "Objective name")->capture_default_str();
    app.add_option("--n", n, "Number of particles")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--dim", dim, "Dimension")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--lambda", lambda, "Drift gain")->capture_default_str();
    auto* s = app.add_option("--sigma", sigma, "Diffusion gain")->capture_default_str()->check(CLI::NonNegativeNumber);
    app.add_option("--sigma-sq", sigma_sq, "Diffusion gain squared")->excludes(s)->check(CLI::NonNegativeNumber);
    app.add_option("--alpha", alpha, "Softmax sharpness")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--dt", dt, "Time step")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--steps", steps, "Number of steps")->capture_default_str();
    app.add_option("--mode", mode, "deterministic | anisotropic | isotropic")
        ->capture_default_str()
        ->check(CLI::IsMember({"deterministic", "anisotropic", "isotropic"}));
    app.add_option("--seed", seed, "Root seed")->capture_default_str();
    app.add_option("--init", init, "Uniform init box LOW HIGH")->expected(2)->capture_default_str();
    app.add_option("--out", out, "Output directory")->capture_default_str();
  }

  void normalize() {
    if (sigma_sq) {
      sigma = std::sqrt(*sigma_sq);
      sigma_sq.reset();
    }
    if (steps < 1) throw UsageError("--steps must be >= 1");
    if (!(init[0] < init[1])) throw UsageError("--init needs LOW < HIGH");
  }

  cbo::CboParams params() const {
    cbo::CboParams p{lambda, sigma, alpha, dt, cbo::parse_mode(mode)};
    p.validate();
    return p;
  }

  json config() const {
    return {{"objective", objective}, {"n", n},       {"dim", dim},         {"lambda", lambda},
            {"sigma", sigma},         {"alpha", alpha}, {"dt", dt},         {"steps", steps},
            {"mode", mode},           {"seed", seed},   {"init", init}};
  }

  std::vector<std::string> argv() const {
    return {"--objective", objective,    "--n",   std::to_string(n), "--dim",   std::to_string(dim),
            "--lambda",    num(lambda),  "--sigma", num(sigma),      "--alpha", num(alpha),
            "--dt",        num(dt),      "--steps", std::to_string(steps),      "--mode", mode,
            "--seed",      std::to_string(seed), "--init", num(init[0]), num(init[1])};
  }
};

struct McOptions {
  std::size_t runs = 1000;
  std::optional<double> clip;
  double clip_factor = 10.0;
  bool no_clip = false;
  std::string init_policy = "auto";
  std::size_t threads = 0;

  void add_to(CLI::App& app) {
    app.add_option("--runs", runs, "Monte-Carlo replicates")->capture_default_str()->check(CLI::PositiveNumber);
    auto* c = app.add_option("--clip", clip, "Absolute clip threshold on each run's V")->check(CLI::PositiveNumber);
    auto* f = app.add_option("--clip-factor", clip_factor, "Clip at this multiple of each run's V(0)")
                  ->capture_default_str()
                  ->check(CLI::PositiveNumber);
    app.add_flag("--no-clip", no_clip, "Disable clipping")->excludes(c)->excludes(f);
    app.add_option("--init-policy", init_policy, "auto | shared | per-replicate")
        ->capture_default_str()
        ->check(CLI::IsMember({"auto", "shared", "per-replicate"}));
    app.add_option("--threads", threads, "Worker threads (default: CBO_LAB_THREADS or all cores)");
  }

  cbo::ClipPolicy policy() const {
    if (no_clip) return cbo::ClipPolicy::none();
    if (clip) return cbo::ClipPolicy::absolute(*clip);
    return cbo::ClipPolicy::relative(clip_factor);
  }

  json config() const {
    const auto p = policy();
    return {{"runs", runs},
            {"clip", {{"kind", cbo::to_string(p)}, {"value", p.value}}},
            {"init_policy", init_policy}};
  }

  std::vector<std::string> argv() const {
    std::vector<std::string> a{"--runs", std::to_string(runs), "--init-policy", init_policy};
    const auto p = policy();
    if (p.kind == cbo::ClipPolicy::Kind::none) a.push_back("--no-clip");
    else if (p.kind == cbo::ClipPolicy::Kind::absolute) a.insert(a.end(), {"--clip", num(p.value)});
    else a.insert(a.end(), {"--clip-factor", num(p.value)});
    return a;
  }

  cbo::McConfig to_config(const RunOptions& r) const {
    cbo::McConfig cfg;
    cfg.base = r.params();
    cfg.objective = r.objective;
    cfg.n_particles = r.n;
    cfg.dim = r.dim;
    cfg.steps = r.steps;
    cfg.runs = runs;
    cfg.seed = r.seed;
    cfg.init_low = r.init[0];
    cfg.init_high = r.init[1];
    cfg.clip = policy();
    if (init_policy == "shared") cfg.share_init = true;
    if (init_policy == "per-replicate") cfg.share_init = false;
    cfg.workers = threads;
    return cfg;
  }
};

std::vector<std::string> admissibility_warnings(const cbo::CboParams& p) {
  std::vector<std::string> w;
  if (!p.euler_ok()) w.push_back("lambda*dt >= 1: explicit Euler does not contract the projected offset");
  if (p.mode != cbo::Mode::deterministic) {
    const double s2 = p.sigma * p.sigma;
    if (!(2.0 * p.lambda > s2)) w.push_back("2*lambda <= sigma^2: mean-square stability condition violated");
    else if (!p.em_ms_ok()) w.push_back("dt >= (2*lambda - sigma^2)/lambda^2: EM mean-square step bound violated");
  }
  for (const auto& s : w) std::cerr << "warning: " << s << '\n';
  return w;
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

std::ofstream open_csv(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

void finish_manifest(json& m, const fs::path& out, const std::vector<fs::path>& files) {
  json outputs = json::array();
  for (const auto& f : files) outputs.push_back(f.string());
  const auto manifest_path = out / "manifest.json";
  outputs.push_back(manifest_path.string());
  m["outputs"] = outputs;
  m["end_time"] = now_iso();
  std::ofstream(manifest_path) << m.dump(2) << '\n';
  std::cout << m.dump(2) << '\n';
}

json manifest_head(const std::string& command, std::uint64_t seed) {
  return {{"command", command}, {"version", cbo::kVersion}, {"seed", seed}, {"start_time", now_iso()}};
}

int cmd_simulate(RunOptions r, std::size_t stride) {
  r.normalize();
  const auto p = r.params();
  const cbo::ObjectiveRegistry registry;
  const auto& f = registry.get(r.objective);
  auto warnings = admissibility_warnings(p);
  const auto out = prepare_out(r.out);

  json m = manifest_head("simulate", r.seed);
  cbo::NoiseSource noise(r.seed, 0);
  auto engine = noise.init_engine();
  const auto init = cbo::uniform_ensemble(r.n, r.dim, r.init[0], r.init[1], engine);
  const auto traj = cbo::simulate(init, p, f, r.steps, noise, stride);

  std::vector<fs::path> files;
  {
    const auto path = out / "trajectory.csv";
    auto csv = open_csv(path);
    csv << "step,time,v,e_norm,best_f";
    for (std::size_t d = 0; d < r.dim; ++d) csv << ",consensus_" << d;
    csv << '\n';
    const auto& s = traj.diagnostics;
    for (std::size_t k = 0; k < s.size(); ++k) {
      csv << k << ',' << num(s.times[k]) << ',' << num(s.v_series[k]) << ',' << num(s.e_norm_series[k]) << ','
          << num(s.best_f_series[k]);
      for (Eigen::Index d = 0; d < s.consensus_series[k].size(); ++d) csv << ',' << num(s.consensus_series[k][d]);
      csv << '\n';
    }
    files.push_back(path);
  }
  if (stride != 0) {
    const auto path = out / "snapshots.csv";
    auto csv = open_csv(path);
    csv << "step,agent";
    for (std::size_t d = 0; d < r.dim; ++d) csv << ",coord_" << d;
    csv << '\n';
    for (const auto& snap : traj.snapshots) {
      const auto& x = snap.state.positions();
      for (Eigen::Index n = 0; n < x.rows(); ++n) {
        csv << snap.step << ',' << n;
        for (Eigen::Index d = 0; d < x.cols(); ++d) csv << ',' << num(x(n, d));
        csv << '\n';
      }
    }
    files.push_back(path);
  }

  auto args = r.argv();
  args.insert(args.begin(), "simulate");
  args.insert(args.end(), {"--snapshot-stride", std::to_string(stride)});
  json cfg = r.config();
  cfg["snapshot_stride"] = stride;
  m["config"] = cfg;
  m["argv"] = args;
  m["warnings"] = warnings;
  m["diverged"] = traj.diverged;
  m["diverged_step"] = traj.diverged_step ? json(*traj.diverged_step) : json(nullptr);
  finish_manifest(m, out, files);
  return kExitOk;
}

int cmd_mc(RunOptions r, const McOptions& mo) {
  r.normalize();
  auto cfg = mo.to_config(r);
  auto warnings = admissibility_warnings(cfg.base);
  const auto out = prepare_out(r.out);

  json m = manifest_head("mc", r.seed);
  const auto res = cbo::run_mc(cfg);
  const auto path = out / "mc_mean.csv";
  {
    auto csv = open_csv(path);
    csv << "step,time,mean_v,stderr_v\n";
    for (std::size_t k = 0; k < res.times.size(); ++k)
      csv << k << ',' << num(res.times[k]) << ',' << num(res.mean_v[k]) << ',' << num(res.stderr_v[k]) << '\n';
  }
  auto args = r.argv();
  args.insert(args.begin(), "mc");
  const auto extra = mo.argv();
  args.insert(args.end(), extra.begin(), extra.end());
  json c = r.config();
  c.update(mo.config());
  m["config"] = c;
  m["argv"] = args;
  m["workers"] = cbo::resolve_workers(cfg.workers);
  m["warnings"] = warnings;
  m["diverged_count"] = res.diverged_count;
  finish_manifest(m, out, {path});
  return kExitOk;
}

int cmd_sweep(RunOptions r, const McOptions& mo, const std::string& param, double from, double to, double step) {
  r.normalize();
  const auto grid = cbo::make_grid(from, to, step);
  if (grid.empty()) throw UsageError("sweep grid is empty");
  const cbo::SweepParam sp = param == "alpha" ? cbo::SweepParam::alpha
                             : param == "n"   ? cbo::SweepParam::n_particles
                                              : cbo::SweepParam::dim;
  auto cfg = mo.to_config(r);
  auto warnings = admissibility_warnings(cfg.base);
  const auto out = prepare_out(r.out);

  json m = manifest_head("sweep", r.seed);
  const auto points = cbo::sweep(cfg, sp, grid);
  const auto path = out / "sweep.csv";
  {
    auto csv = open_csv(path);
    csv << "param_value,step,time,mean_v\n";
    for (const auto& pt : points)
      for (std::size_t k = 0; k < pt.result.times.size(); ++k)
        csv << num(pt.value) << ',' << k << ',' << num(pt.result.times[k]) << ',' << num(pt.result.mean_v[k])
            << '\n';
  }
  auto args = r.argv();
  args.insert(args.begin(), "sweep");
  const auto extra = mo.argv();
  args.insert(args.end(), extra.begin(), extra.end());
  args.insert(args.end(), {"--param", param, "--from", num(from), "--to", num(to), "--step", num(step)});
  json c = r.config();
  c.update(mo.config());
  c["param"] = param;
  c["from"] = from;
  c["to"] = to;
  c["step"] = step;
  m["config"] = c;
  m["argv"] = args;
  m["grid"] = grid;
  m["warnings"] = warnings;
  finish_manifest(m, out, {path});
  return kExitOk;
}

json rate_report_json(const cbo::RateReport& r) {
  return {{"mode", cbo::to_string(r.mode)},
          {"det_rate", r.det_rate},
          {"as_rate", r.as_rate},
          {"ms_rate", r.ms_rate},
          {"ms_condition_ok", r.ms_condition_ok},
          {"em_ms_rate", r.em_ms_rate},
          {"em_ms_factor", r.em_ms_factor},
          {"em_ms_log_rate", optional_json(r.em_ms_log_rate)},
          {"em_step_bound", optional_json(r.em_step_bound)},
          {"em_step_ok", r.em_step_ok},
          {"euler_stable", r.euler_stable},
          {"isotropic_mf_rate", r.isotropic_mf_rate},
          {"isotropic_mf_condition_ok", r.isotropic_mf_condition_ok}};
}

int cmd_rates(double lambda, double sigma, std::optional<double> sigma_sq, double dt, std::size_t dim,
              const std::string& mode, std::optional<std::size_t> mc_samples, std::uint64_t seed) {
  if (sigma_sq) sigma = std::sqrt(*sigma_sq);
  const cbo::CboParams p{lambda, sigma, 1.0, dt, cbo::parse_mode(mode)};
  json out = rate_report_json(cbo::theoretical_rates(p, dim));
  out["params"] = {{"lambda", lambda}, {"sigma", sigma}, {"dt", dt}, {"dim", dim}};
  if (mc_samples) {
    if (*mc_samples < cbo::kMinAsSamples)
      throw UsageError("--mc-samples must be >= " + std::to_string(cbo::kMinAsSamples));
    const auto est = cbo::em_as_rate_mc(lambda, p.effective_sigma(), dt, *mc_samples, seed);
    out["em_as_rate_mc"] = {{"estimate", est.estimate},
                            {"std_error", est.std_error},
                            {"min_abs_argument", est.min_abs_argument},
                            {"samples", est.samples},
                            {"seed", seed}};
  }
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

int cmd_verify_spectral(std::size_t n, std::size_t trials, double tol, std::uint64_t seed, bool inject_broken) {
  if (n < 1) throw UsageError("--n must be >= 1");
  cbo::Engine engine(cbo::derive_seed(seed, n));
  std::exponential_distribution<double> expo(1.0);
  const auto proj = cbo::make_projector(n);

  bool all_pass = true;
  double worst_spectrum = 0.0;
  double worst_identity = 0.0;
  double worst_row_sum = 0.0;
  std::size_t failures = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    cbo::Vector w(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = expo(engine);
    w /= w.sum();
    if (inject_broken) w[0] += 1e-3;
    const auto l = cbo::build_l_hat(cbo::WeightVector::unchecked(w));
    const auto report = cbo::verify_spectrum(l, tol);
    const double ident = cbo::projection_identity_residual(l, proj);
    const double rows = l.dense.rowwise().sum().cwiseAbs().maxCoeff();
    worst_spectrum = std::max(worst_spectrum, report.max_deviation);
    worst_identity = std::max(worst_identity, ident);
    worst_row_sum = std::max(worst_row_sum, rows);
    const bool ok = report.pass && ident <= tol && rows <= tol;
    if (!ok) ++failures;
    all_pass = all_pass && ok;
  }
  const json report{{"n", n},
                    {"trials", trials},
                    {"tol", tol},
                    {"seed", seed},
                    {"inject_broken", inject_broken},
                    {"max_spectrum_deviation", worst_spectrum},
                    {"max_projection_identity_residual", worst_identity},
                    {"max_row_sum", worst_row_sum},
                    {"failures", failures},
                    {"pass", all_pass}};
  std::cout << report.dump(2) << '\n';
  return all_pass ? kExitOk : kExitFailure;
}

int run(std::vector<std::string> args);

int cmd_replay(const std::string& manifest, const std::optional<std::string>& out) {
  std::ifstream in(manifest);
  if (!in) throw UsageError("cannot read " + manifest);
  const json m = json::parse(in);
  auto args = m.at("argv").get<std::vector<std::string>>();
  if (out) {
    for (std::size_t i = 0; i + 1 < args.size(); ++i)
      if (args[i] == "--out") args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
    args.insert(args.end(), {"--out", *out});
  }
  return run(std::move(args));
}

int run(std::vector<std::string> args) {
  CLI::App app{"Consensus-based optimization lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cbo::kVersion);

  RunOptions sim_opts;
  std::size_t stride = 0;
  auto* sim = app.add_subcommand("simulate", "Run one trajectory and write trajectory.csv");
  sim_opts.add_to(*sim);
  sim->add_option("--snapshot-stride", stride, "Write snapshots.csv every k steps (0 = off)")->capture_default_str();

  RunOptions mc_opts;
  McOptions mc_extra;
  auto* mc = app.add_subcommand("mc", "Monte-Carlo mean of V over replicates; writes mc_mean.csv");
  mc_opts.add_to(*mc);
  mc_extra.add_to(*mc);

  RunOptions sw_opts;
  McOptions sw_extra;
  std::string param;
  double from = 0, to = 0, step = 0;
  auto* sw = app.add_subcommand("sweep", "Run mc over a grid of alpha, n or dim; writes sweep.csv");
  sw_opts.add_to(*sw);
  sw_extra.add_to(*sw);
  sw->add_option("--param", param, "alpha | n | dim")->required()->check(CLI::IsMember({"alpha", "n", "dim"}));
  sw->add_option("--from", from, "First grid value")->required();
  sw->add_option("--to", to, "Last grid value (inclusive)")->required();
  sw->add_option("--step", step, "Grid spacing")->required();

  double r_lambda = 1.0, r_sigma = 1.0, r_dt = 0.05;
  std::optional<double> r_sigma_sq;
  std::size_t r_dim = 2;
  std::string r_mode = "anisotropic";
  std::optional<std::size_t> r_samples;
  std::uint64_t r_seed = 42;
  auto* rates = app.add_subcommand("rates", "Print the theoretical decay rates as JSON");
  rates->add_option("--lambda", r_lambda)->capture_default_str();
  auto* rs = rates->add_option("--sigma", r_sigma)->capture_default_str()->check(CLI::NonNegativeNumber);
  rates->add_option("--sigma-sq", r_sigma_sq)->excludes(rs)->check(CLI::NonNegativeNumber);
  rates->add_option("--dt", r_dt)->capture_default_str()->check(CLI::PositiveNumber);
  rates->add_option("--dim", r_dim)->capture_default_str()->check(CLI::PositiveNumber);
  rates->add_option("--mode", r_mode)->capture_default_str()->check(
      CLI::IsMember({"deterministic", "anisotropic", "isotropic"}));
  rates->add_option("--mc-samples", r_samples, "Add the Monte-Carlo almost-sure rate estimate");
  rates->add_option("--seed", r_seed)->capture_default_str();

  std::size_t v_n = 10, v_trials = 100;
  double v_tol = 1e-10;
  std::uint64_t v_seed = 42;
  bool v_broken = false;
  auto* vs = app.add_subcommand("verify-spectral", "Check the spectrum of L_hat and P L_hat = P on random weights");
  vs->add_option("--n", v_n)->capture_default_str();
  vs->add_option("--trials", v_trials)->capture_default_str();
  vs->add_option("--tol", v_tol)->capture_default_str()->check(CLI::PositiveNumber);
  vs->add_option("--seed", v_seed)->capture_default_str();
  vs->add_flag("--inject-broken", v_broken, "Self-test: push the weights off the simplex (must fail)");

  std::string manifest;
  std::optional<std::string> replay_out;
  auto* rp = app.add_subcommand("replay", "Re-run the command recorded in a manifest.json");
  rp->add_option("manifest", manifest)->required();
  rp->add_option("--out", replay_out, "Override the output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(sim_opts, stride);
    if (*mc) return cmd_mc(mc_opts, mc_extra);
    if (*sw) return cmd_sweep(sw_opts, sw_extra, param, from, to, step);
    if (*rates) return cmd_rates(r_lambda, r_sigma, r_sigma_sq, r_dt, r_dim, r_mode, r_samples, r_seed);
    if (*vs) return cmd_verify_spectral(v_n, v_trials, v_tol, v_seed, v_broken);
    if (*rp) return cmd_replay(manifest, replay_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {  // parameter, shape and config errors
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(std::move(args));
}
