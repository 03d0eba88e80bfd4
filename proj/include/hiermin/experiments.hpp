#pragma once

#include "hiermin/config.hpp"
#include "hiermin/core.hpp"
#include "hiermin/diagnostics.hpp"
#include "hiermin/integrator.hpp"
#include "hiermin/oracle.hpp"
#include "hiermin/potentials.hpp"
#include "hiermin/schedules.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace hiermin {

struct CheckResult {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  std::string relation;  // "<=" or ">="
  bool passed = false;
};

struct RunSummary {
  std::string name;
  std::string mode;
  std::optional<ConditionReport> conditions;
  std::optional<DiagnosticsReport> diagnostics;
  std::optional<LimitReport> limits;
  std::optional<HierarchicalSolution> oracle;
  std::optional<HierarchicalSolution> oracle_grid;
  std::vector<CheckResult> checks;
  std::vector<std::pair<std::string, std::string>> metrics;
  IntegratorStats stats;
  double runtime_s = 0.0;
  Trajectory trajectory;
  DiagnosticsSeries series;

  [[nodiscard]] bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
  }
  [[nodiscard]] const CheckResult* check(const std::string& n) const {
    for (const auto& c : checks) {
      if (c.name == n) return &c;
    }
    return nullptr;
  }
};

// ---- coupled Neumann waves ---------------------------------------------------

/// Samples sin(2 pi x) or cos(2 pi x) at the cell centres x_j = (j + 1/2) / n,
/// with the (roundoff-level) mean removed.
inline Vector wave_forcing(const std::string& profile, Eigen::Index n, double amplitude) {
  Vector h(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double x = (double(j) + 0.5) / double(n);
    if (profile == "sin") {
      h[j] = amplitude * std::sin(2.0 * std::numbers::pi * x);
    } else if (profile == "cos") {
      h[j] = amplitude * std::cos(2.0 * std::numbers::pi * x);
    } else {
      throw ConfigError("config key [waves] forcing: unknown profile '" + profile + "' (sin, cos)");
    }
  }
  h.array() -= h.mean();
  return h;
}

/// Phi(u1, u2) = sum_i 1/2 alpha_i u_i' L u_i - h_i' u_i (shifted to min 0) and
/// Psi = 1/2 |u1 - u2|^2 on R^{2n}, L the unit-spacing Neumann Laplacian.
inline ProblemSpec discretize_waves(Eigen::Index n, double alpha1, double alpha2, const Vector& h1, const Vector& h2,
                                    double gamma, const EpsilonSchedule& schedule) {
  require_dim(h1, n, "discretize_waves h1");
  require_dim(h2, n, "discretize_waves h2");
  for (const Vector* h : {&h1, &h2}) {
    if (std::abs(h->sum()) > 1e-10 * (1.0 + h->cwiseAbs().sum())) {
      throw DomainError("discretize_waves: forcing must have zero mean (compatibility)");
    }
  }
  if (!(alpha1 > 0.0) || !(alpha2 > 0.0)) throw DomainError("discretize_waves: alpha must be positive");
  const Matrix L = neumann_laplacian(n);
  Matrix A = Matrix::Zero(2 * n, 2 * n);
  A.topLeftCorner(n, n) = alpha1 * L;
  A.bottomRightCorner(n, n) = alpha2 * L;
  Vector b(2 * n);
  b << -h1, -h2;
  const Matrix I = Matrix::Identity(n, n);
  return ProblemSpec{Potential::quadratic(std::move(A), std::move(b)),
                     Potential::coupling(I, I, Block{0, n}, Block{n, n}, 2 * n),
                     gamma,
                     1.0,
                     schedule,
                     Vector::Zero(2 * n),
                     Vector::Zero(2 * n),
                     1.0,
                     {}};
}

/// Initial data mean_i +/- bump cos(pi x), constant velocities.
inline std::pair<Vector, Vector> wave_initial_state(const WavesSetup& w) {
  const Eigen::Index n = w.n;
  Vector x(2 * n), v(2 * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double c = w.bump * std::cos(std::numbers::pi * (double(j) + 0.5) / double(n));
    x[j] = w.mean1 + c;
    x[n + j] = w.mean2 - c;
    v[j] = w.vmean1;
    v[n + j] = w.vmean2;
  }
  return {x, v};
}

namespace detail {

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  const std::string p = std::string("stage '") + name + "': ";
  try {
    return f();
  } catch (const NumericalAbort& e) {
    throw NumericalAbort(p + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(p + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(p + e.what());
  } catch (const DomainError& e) {
    throw DomainError(p + e.what());
  }
}

class Checks {
 public:
  Checks(const std::vector<std::string>& enabled, std::vector<CheckResult>& out) : enabled_(enabled), out_(out) {}

  [[nodiscard]] bool wants(const std::string& n) const {
    return std::find(enabled_.begin(), enabled_.end(), n) != enabled_.end();
  }
  void at_most(const std::string& n, double value, double tol) { add(n, value, tol, "<=", value <= tol); }
  void at_least(const std::string& n, double value, double tol) { add(n, value, tol, ">=", value >= tol); }

 private:
  void add(const std::string& n, double value, double tol, const char* rel, bool ok) {
    if (!wants(n)) return;
    out_.push_back({n, value, tol, rel, ok && std::isfinite(value)});
  }
  const std::vector<std::string>& enabled_;
  std::vector<CheckResult>& out_;
};

inline std::string num(double d) { return config::fmt(d); }

inline void metric(RunSummary& s, const std::string& k, const std::string& v) { s.metrics.emplace_back(k, v); }
inline void metric(RunSummary& s, const std::string& k, double v) { metric(s, k, num(v)); }
inline void metric(RunSummary& s, const std::string& k, const Vector& v) { metric(s, k, config::fmt(v)); }

inline ProblemSpec build_spec(const ExperimentConfig& c) {
  if (!c.schedule) throw ConfigError("config: [schedule] is required");
  if (c.mode == "waves") {
    const WavesSetup& w = *c.waves;
    const Vector h1 = wave_forcing(w.forcing1, w.n, w.amplitude1);
    const Vector h2 = wave_forcing(w.forcing2, w.n, w.amplitude2);
    ProblemSpec s = discretize_waves(w.n, w.alpha1, w.alpha2, h1, h2, c.gamma, *c.schedule);
    std::tie(s.x0, s.v0) = wave_initial_state(w);
    s.horizon = c.horizon;
    s.step = c.step;
    s.mass = c.mass;
    return s;
  }
  return ProblemSpec{*c.phi, *c.psi, c.gamma, c.mass, *c.schedule, c.x0, c.v0, c.horizon, c.step};
}

inline bool is_zero_potential(const Potential& p) {
  const auto q = p.quadratic_model();
  return q && q->first.isZero(0.0) && q->second.isZero(0.0);
}

struct OracleStage {
  HierarchicalSolution sol;
  std::optional<HierarchicalSolution> grid;
  double certificate = 0.0;
  double grid_gap = std::numeric_limits<double>::quiet_NaN();
};

inline OracleStage run_oracle(const ProblemSpec& spec, const ExperimentConfig& c) {
  OracleOptions o;
  o.reference = spec.x0;
  o.certificate_samples = c.samples;
  o.seed = c.seed;
  OracleStage st;
  st.sol = solve_hierarchical(spec.phi, spec.psi, o);
  const auto& cert = st.sol.certificate;
  st.certificate = std::max({cert.feasibility, cert.stationarity, cert.normal_cone_residual});
  if (spec.dim() <= 3) {
    o.method = OracleMethod::GridBruteForce;
    st.grid = solve_hierarchical(spec.phi, spec.psi, o);
    if (st.sol.unique) {
      st.grid_gap = (st.grid->z_star - st.sol.z_star).norm();
    } else {
      st.grid_gap = std::max(std::abs(st.grid->psi_min - st.sol.psi_min), spec.phi.argmin_set().distance(st.grid->z_star));
    }
  }
  return st;
}

inline ConditionReport run_conditions(const ProblemSpec& spec, const Vector& z, const ExperimentConfig& c,
                                      bool analytic = true) {
  const auto rays = cone_rays(spec.phi, spec.psi, z, 1e-6, c.samples);
  ConditionOptions co;
  co.horizon = c.condition_horizon;
  co.analytic = analytic;
  return check_conditions(spec.schedule, spec.phi, rays, co);
}

inline void record_conditions(RunSummary& s, const ConditionReport& r, Checks& chk, const ExpectedConditions& e) {
  metric(s, "h1.holds", r.h1.holds ? "true" : "false");
  metric(s, "h1.evidence", r.h1.evidence);
  metric(s, "h1.tail_exponent", r.h1.tail_exponent);
  metric(s, "h1.analytic", r.h1.analytic ? "true" : "false");
  metric(s, "h2.holds", r.h2.holds ? "true" : "false");
  metric(s, "h2.trivial", r.h2.trivial ? "true" : "false");
  metric(s, "h2.analytic", r.h2.analytic ? "true" : "false");
  for (std::size_t i = 0; i < r.h2.per_ray.size(); ++i) {
    const auto& ray = r.h2.per_ray[i];
    metric(s, "h2.ray." + std::to_string(i) + ".direction", ray.ray.direction.size() <= 8
                                                                ? config::fmt(ray.ray.direction)
                                                                : "norm " + num(ray.ray.direction.norm()));
    metric(s, "h2.ray." + std::to_string(i) + ".integral",
           ray.integral.is_finite() ? num(ray.integral.value()) : std::string("inf"));
  }
  metric(s, "h3.holds", r.h3.holds ? "true" : "false");
  metric(s, "h3.k_estimate", r.h3.k_estimate);
  metric(s, "h3.onset_time", r.h3.onset_time);
  for (std::size_t i = 0; i < r.notes.size(); ++i) metric(s, "conditions.note." + std::to_string(i), r.notes[i]);
  const int mismatches = int(r.h1.holds != e.h1) + int(r.h2.holds != e.h2) + int(r.h3.holds != e.h3);
  chk.at_most("conditions", mismatches, 0.0);
}

inline void record_oracle(RunSummary& s, const OracleStage& o, Checks& chk, const Tolerances& tol) {
  metric(s, "oracle.method", to_string(o.sol.method));
  metric(s, "oracle.unique", o.sol.unique ? "true" : "false");
  metric(s, "oracle.psi_min", o.sol.psi_min);
  if (o.sol.z_star.size() <= 8) metric(s, "oracle.z_star", o.sol.z_star);
  metric(s, "oracle.certificate.feasibility", o.sol.certificate.feasibility);
  metric(s, "oracle.certificate.stationarity", o.sol.certificate.stationarity);
  metric(s, "oracle.certificate.normal_cone_residual", o.sol.certificate.normal_cone_residual);
  chk.at_most("oracle-kkt", o.certificate, tol.oracle_kkt);
  if (o.grid) {
    metric(s, "oracle.grid.z_star", o.grid->z_star);
    metric(s, "oracle.grid.gap", o.grid_gap);
    chk.at_most("oracle-grid", o.grid_gap, tol.oracle_grid);
  }
}

inline void record_diagnostics(RunSummary& s, const DiagnosticsReport& d, Checks& chk, const Tolerances& tol) {
  metric(s, "e1.max_violation", d.e1.max_violation);
  metric(s, "e1.worst_time", d.e1.worst_time);
  metric(s, "e2.max_rel_error", d.e2_max_rel_error);
  metric(s, "e2.worst_time", d.e2_worst_time);
  metric(s, "e2.checked", double(d.e2_checked));
  metric(s, "e2.final", d.e2_final);
  metric(s, "e2.bound_violation", d.e2_bound_violation);
  metric(s, "int_speed2", d.int_speed2);
  metric(s, "int_phi", d.int_phi);
  metric(s, "int_eps_psi_gap", d.int_eps_psi_gap);
  metric(s, "sup_speed", d.sup_speed);
  metric(s, "sup_norm_x", d.sup_norm_x);
  for (std::size_t j = 0; j < d.h_final.size(); ++j) {
    metric(s, "h_z." + std::to_string(j) + ".final", d.h_final[j]);
    metric(s, "h_z." + std::to_string(j) + ".tail_oscillation", d.h_tail_oscillation[j]);
    metric(s, "h_z." + std::to_string(j) + ".int_hdot_pos", d.int_hdot_pos[j]);
  }
  chk.at_most("e1-monotone", d.e1.max_violation, tol.monotone);
  chk.at_most("e2-identity", d.e2_checked > 0 ? d.e2_max_rel_error : std::numeric_limits<double>::infinity(),
              tol.e2_rel);
  if (!d.h_tail_oscillation.empty()) {
    chk.at_most("h-settles", *std::max_element(d.h_tail_oscillation.begin(), d.h_tail_oscillation.end()), tol.h_tail);
  }
}

// Integration with streaming diagnostics.
struct Pass {
  Trajectory traj;
  DiagnosticsReport rep;
  DiagnosticsSeries series;
};

inline Pass integrate_with_diagnostics(const ProblemSpec& spec, std::vector<Vector> anchors,
                                       std::optional<double> h3_k) {
  DiagnosticsOptions dopt;
  dopt.anchors = std::move(anchors);
  dopt.h3_k = h3_k;
  DiagnosticsObserver obs(spec, dopt);
  Pass p;
  p.traj = integrate(spec, {&obs});
  p.rep = obs.report();
  p.series = obs.series();
  return p;
}

inline std::vector<Vector> anchors_for(const ProblemSpec& spec, const HierarchicalSolution& sol, std::uint64_t seed) {
  std::vector<Vector> a{sol.z_star};
  if (is_zero_potential(spec.psi)) {
    // S = C: a few more points of C
    std::mt19937_64 rng(seed);
    for (int i = 0; i < 2; ++i) a.push_back(spec.phi.argmin_set().sample(rng, sol.z_star, 1.0));
  }
  return a;
}

inline void run_standard(const ExperimentConfig& c, RunSummary& s) {
  const ProblemSpec spec = stage("build", [&] { return build_spec(c); });
  stage("validate", [&] {
    spec.validate();
    return 0;
  });
  Checks chk(c.checks, s.checks);
  const Tolerances& tol = c.tol;

  const OracleStage orc = stage("oracle", [&] { return run_oracle(spec, c); });
  s.oracle = orc.sol;
  s.oracle_grid = orc.grid;
  record_oracle(s, orc, chk, tol);

  const ConditionReport cond = stage("conditions", [&] { return run_conditions(spec, orc.sol.z_star, c); });
  s.conditions = cond;
  record_conditions(s, cond, chk, c.expect);

  Pass pass = stage("integrate", [&] {
    return integrate_with_diagnostics(spec, anchors_for(spec, orc.sol, c.seed),
                                      cond.h3.holds ? std::optional<double>(cond.h3.k_estimate) : std::nullopt);
  });
  s.stats = pass.traj.stats;
  s.diagnostics = pass.rep;
  record_diagnostics(s, pass.rep, chk, tol);

  LimitTolerances lt{tol.speed, tol.grad_phi, tol.phi, tol.psi_gap, tol.int_phi_tail, tol.h_tail};
  const LimitReport lim = limit_checks(pass.rep, spec, orc.sol.z_star, lt);
  s.limits = lim;
  const Vector& xT = pass.rep.x_final;
  if (xT.size() <= 8) metric(s, "x_final", xT);
  metric(s, "t_final", pass.rep.t_final);
  metric(s, "speed_final", lim.speed);
  metric(s, "grad_phi_final", lim.grad_phi);
  metric(s, "phi_final", lim.phi);
  metric(s, "dist_to_c", lim.dist_to_c);
  metric(s, "int_phi_tail", lim.int_phi_tail);
  const double dist_z = (xT - orc.sol.z_star).norm();
  const double dist_z_l1 = (xT - orc.sol.z_star).lpNorm<1>();
  const double psi_gap = std::abs(spec.psi.value(xT) - orc.sol.psi_min);
  metric(s, "dist_to_z_star", dist_z);
  metric(s, "dist_to_z_star_l1", dist_z_l1);
  metric(s, "psi_gap", psi_gap);
  metric(s, "dist_tail_max_increase", pass.rep.dist_tail_max_increase);

  chk.at_most("speed", lim.speed, tol.speed);
  chk.at_most("grad-phi", lim.grad_phi, tol.grad_phi);
  chk.at_most("phi", lim.phi, tol.phi);
  chk.at_most("int-phi-tail", lim.int_phi_tail, tol.int_phi_tail);
  chk.at_most("dist-c", lim.dist_to_c, tol.dist_c);
  chk.at_most("dist-z", dist_z, tol.dist_z);
  chk.at_most("dist-z-l1", dist_z_l1, tol.dist_z);
  chk.at_most("psi-selection", psi_gap, tol.psi_gap);
  chk.at_least("psi-anti", psi_gap, tol.anti_psi_margin);
  chk.at_most("tail-monotone", pass.rep.dist_tail_max_increase, tol.tail_increase);

  if (c.second_x0 && c.second_v0) {
    ProblemSpec second = spec;
    second.x0 = *c.second_x0;
    second.v0 = *c.second_v0;
    const Trajectory tr2 = stage("integrate-second", [&] { return integrate(second); });
    const Vector& x2 = tr2.x.back();
    const double d2 = spec.phi.argmin_set().distance(x2);
    const double sep = (x2 - xT).norm();
    metric(s, "second.x_final", x2);
    metric(s, "second.dist_to_c", d2);
    metric(s, "second.speed_final", tr2.v.back().norm());
    metric(s, "limit_separation", sep);
    // distinct limits, both in C
    chk.at_least("distinct-limits", d2 <= tol.dist_c ? sep : 0.0, tol.distinct);
  }

  if (c.mode == "waves") {
    const WavesSetup& w = *c.waves;
    const Eigen::Index n = w.n;
    const Vector h1 = wave_forcing(w.forcing1, n, w.amplitude1);
    const Vector h2 = wave_forcing(w.forcing2, n, w.amplitude2);
    const Vector x0 = spec.x0, v0 = spec.v0;
    const NeumannReference ref = stage("waves-oracle", [&] {
      return neumann_reference(n, w.alpha1, w.alpha2, h1, h2,
                               MeanData{x0.head(n).mean(), x0.tail(n).mean(), v0.head(n).mean(), v0.tail(n).mean(),
                                        c.gamma});
    });
    const Vector u1 = xT.head(n), u2 = xT.tail(n);
    const double m1 = u1.mean(), m2 = u2.mean();
    const double dev1 = ((u1.array() - m1).matrix() - ref.u1_bar).norm();
    const double dev2 = ((u2.array() - m2).matrix() - ref.u2_bar).norm();
    metric(s, "waves.mean1", m1);
    metric(s, "waves.mean2", m2);
    metric(s, "waves.mean_gap", std::abs(m1 - m2));
    metric(s, "waves.predicted_mean", *ref.limit_mean);
    metric(s, "waves.profile_dev1", dev1);
    metric(s, "waves.profile_dev2", dev2);
    metric(s, "waves.ubar1_norm", ref.u1_bar.norm());
    metric(s, "waves.ubar2_norm", ref.u2_bar.norm());
    chk.at_most("mean-gap", std::abs(m1 - m2), tol.mean_gap);
    chk.at_most("profile", std::max(dev1, dev2), tol.profile);
    chk.at_most("limit-mean", std::max(std::abs(m1 - *ref.limit_mean), std::abs(m2 - *ref.limit_mean)), tol.mean_gap);
  }

  s.trajectory = std::move(pass.traj);
  s.series = std::move(pass.series);
}

// Sample times of the resampling grid s_j and of the E2 probe stencils.
struct DictionaryGrid {
  std::vector<double> s;       // uniform grid in the beta clock
  std::vector<double> t;       // t_eps(s)
  std::vector<double> outputs; // sorted union of t and the probe stencils
};

inline DictionaryGrid dictionary_grid(const EpsilonSchedule& sched, const DictionarySetup& d) {
  DictionaryGrid g;
  const auto n = std::size_t(std::llround((d.s_to - d.s_from) / d.ds));
  for (std::size_t j = 0; j <= n + 4; ++j) {
    const double s = d.s_from + (double(j) - 2.0) * d.ds;
    g.s.push_back(s);
    g.t.push_back(sched.cumulative_inverse(s));
  }
  g.outputs = g.t;
  // probe stencils between consecutive grid times, at log-spaced positions
  const std::size_t m = g.t.size();
  for (int k = 0; k < d.probes; ++k) {
    const double frac = double(k) / double(std::max(1, d.probes - 1));
    const auto j = std::min(m - 2, std::size_t(2 + std::llround(frac * double(m - 6))));
    const double tc = 0.5 * (g.t[j] + g.t[j + 1]);
    const double delta = d.probe_spacing * (1.0 + tc);
    for (int q = -2; q <= 2; ++q) g.outputs.push_back(tc + q * delta);
  }
  std::sort(g.outputs.begin(), g.outputs.end());
  g.outputs.erase(std::unique(g.outputs.begin(), g.outputs.end()), g.outputs.end());
  return g;
}

inline void run_dictionary(const ExperimentConfig& c, RunSummary& s) {
  ProblemSpec spec = stage("build", [&] { return build_spec(c); });
  Checks chk(c.checks, s.checks);
  const Tolerances& tol = c.tol;
  const DictionarySetup& d = *c.dictionary;

  const OracleStage orc = stage("oracle", [&] { return run_oracle(spec, c); });
  s.oracle = orc.sol;
  s.oracle_grid = orc.grid;
  record_oracle(s, orc, chk, tol);
  const ConditionReport cond = stage("conditions", [&] { return run_conditions(spec, orc.sol.z_star, c); });
  s.conditions = cond;
  record_conditions(s, cond, chk, c.expect);

  // clocks
  const TimeMaps maps = time_maps(spec.schedule);
  double rt = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double u = d.roundtrip_to * i / 1000.0;
    const double t = maps.t_eps(u);
    // closed form one way, quadrature the other way
    rt = std::max({rt, std::abs(maps.t_beta(t) - u), std::abs(spec.schedule.cumulative_quadrature(t) - u)});
  }
  metric(s, "roundtrip_error", rt);
  chk.at_most("roundtrip", rt, tol.roundtrip);

  // forward: integrate the original system, resample along t_eps
  const DictionaryGrid g = stage("grid", [&] { return dictionary_grid(spec.schedule, d); });
  spec.horizon = g.outputs.back();
  spec.step.output_times = g.outputs;
  spec.step.max_stored = g.outputs.size() + 1;
  stage("validate", [&] {
    spec.validate();
    return 0;
  });
  Pass pass = stage("integrate", [&] {
    return integrate_with_diagnostics(spec, {orc.sol.z_star},
                                      cond.h3.holds ? std::optional<double>(cond.h3.k_estimate) : std::nullopt);
  });
  s.stats = pass.traj.stats;
  s.diagnostics = pass.rep;
  record_diagnostics(s, pass.rep, chk, tol);
  metric(s, "horizon", spec.horizon);

  const BetaSchedule beta = beta_from_eps(spec.schedule);
  Trajectory w;
  for (std::size_t j = 0; j < g.s.size(); ++j) {
    const auto it = std::lower_bound(pass.traj.t.begin(), pass.traj.t.end(), g.t[j]);
    const auto k = std::size_t(it - pass.traj.t.begin());
    if (k == pass.traj.size() || pass.traj.t[k] != g.t[j]) throw NumericalAbort("dictionary: resample time missing");
    w.push(g.s[j], pass.traj.x[k], beta.beta(g.s[j]) * pass.traj.v[k]);
  }
  BetaProblemSpec bspec{spec.phi, spec.psi, spec.gamma, spec.mass, beta, w.x.front(), w.v.front(),
                        0.0,      1.0,      spec.step};
  double worst = 0.0, anti = std::numeric_limits<double>::infinity();
  Trajectory shifted = w;
  for (auto& x : shifted.x) x.array() += d.perturb;
  for (std::size_t j = 2; j + 2 < w.size(); ++j) {
    if (w.t[j] < d.s_from - 1e-9 || w.t[j] > d.s_to + 1e-9) continue;
    worst = std::max(worst, residual_beta(bspec, w, w.t[j]));
    anti = std::min(anti, residual_beta(bspec, shifted, w.t[j]));
  }
  metric(s, "beta_residual_max", worst);
  metric(s, "beta_residual_perturbed_min", anti);
  chk.at_most("beta-residual", worst, tol.residual);
  chk.at_least("beta-anti", anti, tol.anti_residual);

  // converse: integrate the beta form on a window and map back along t_beta
  const double s0 = d.s_from;
  const double t_start = maps.t_eps(s0), t_stop = maps.t_eps(d.converse_to);
  const auto K = std::size_t(std::floor((t_stop - t_start) / d.converse_dt));
  std::vector<double> tk, sk;
  for (std::size_t k = 0; k <= K; ++k) {
    tk.push_back(t_start + double(k) * d.converse_dt);
    sk.push_back(std::clamp(maps.t_beta(tk.back()), s0, d.converse_to));
  }
  const std::size_t j0 = 2;  // w.t[2] == s_from
  BetaProblemSpec conv = bspec;
  conv.w0 = w.x[j0];
  conv.dw0 = w.v[j0];
  conv.start = s0;
  conv.horizon = d.converse_to - s0;
  conv.step.output_times = sk;
  conv.step.max_stored = sk.size() + 1;
  const Trajectory wb = stage("integrate-beta", [&] { return integrate_beta(conv); });
  Trajectory back;
  for (std::size_t k = 0; k < wb.size(); ++k) back.push(tk[k], wb.x[k], wb.v[k] / beta.beta(wb.t[k]));
  ProblemSpec window = spec;
  const double conv_res = max_residual(window, back);
  metric(s, "converse_residual_max", conv_res);
  chk.at_most("beta-converse", conv_res, tol.residual);

  s.trajectory = std::move(pass.traj);
  s.series = std::move(pass.series);
}

inline void run_rescale(const ExperimentConfig& c, RunSummary& s) {
  const ProblemSpec spec = stage("build", [&] { return build_spec(c); });
  stage("validate", [&] {
    spec.validate();
    return 0;
  });
  Checks chk(c.checks, s.checks);
  const Tolerances& tol = c.tol;
  const double a = c.rescale_factor;

  const OracleStage orc = stage("oracle", [&] { return run_oracle(spec, c); });
  s.oracle = orc.sol;
  s.oracle_grid = orc.grid;
  record_oracle(s, orc, chk, tol);
  const ConditionReport cond = stage("conditions", [&] { return run_conditions(spec, orc.sol.z_star, c); });
  s.conditions = cond;
  record_conditions(s, cond, chk, c.expect);

  Pass pass = stage("integrate", [&] {
    return integrate_with_diagnostics(spec, {orc.sol.z_star},
                                      cond.h3.holds ? std::optional<double>(cond.h3.k_estimate) : std::nullopt);
  });
  s.stats = pass.traj.stats;
  s.diagnostics = pass.rep;
  record_diagnostics(s, pass.rep, chk, tol);

  const auto [y, yspec] = stage("rescale", [&] { return rescale_affine(pass.traj, spec, a); });
  const double res = max_residual(yspec, y);
  const double wrong = max_residual(spec, y);
  metric(s, "rescale.factor", a);
  metric(s, "rescale.residual_max", res);
  metric(s, "rescale.residual_unrescaled_max", wrong);
  chk.at_most("rescale-residual", res, tol.residual);
  chk.at_least("rescale-anti", wrong, tol.anti_residual);

  // verdicts before and after, closed-form and numeric
  const HierarchicalSolution ysol = stage("oracle-rescaled", [&] {
    OracleOptions o;
    o.reference = yspec.x0;
    o.certificate_samples = c.samples;
    o.seed = c.seed;
    return solve_hierarchical(yspec.phi, yspec.psi, o);
  });
  int mismatches = 0;
  for (bool analytic : {true, false}) {
    const ConditionReport before = stage("conditions", [&] { return run_conditions(spec, orc.sol.z_star, c, analytic); });
    const ConditionReport after = stage("conditions-rescaled", [&] { return run_conditions(yspec, ysol.z_star, c, analytic); });
    const std::string tag = analytic ? "analytic" : "numeric";
    metric(s, "rescale.verdicts." + tag + ".before", std::string(before.h1.holds ? "1" : "0") +
                                                           (before.h2.holds ? "1" : "0") + (before.h3.holds ? "1" : "0"));
    metric(s, "rescale.verdicts." + tag + ".after", std::string(after.h1.holds ? "1" : "0") +
                                                          (after.h2.holds ? "1" : "0") + (after.h3.holds ? "1" : "0"));
    mismatches += int(before.h1.holds != after.h1.holds) + int(before.h2.holds != after.h2.holds) +
                  int(before.h3.holds != after.h3.holds);
  }
  chk.at_most("rescale-verdicts", mismatches, 0.0);

  s.trajectory = std::move(pass.traj);
  s.series = std::move(pass.series);
}

}  // namespace detail

inline void write_summary(std::ostream& os, const RunSummary& s) {
  os << "experiment = " << s.name << '\n';
  os << "mode = " << s.mode << '\n';
  os << "passed = " << (s.passed() ? "true" : "false") << '\n';
  for (const auto& c : s.checks) {
    os << "check." << c.name << ".value = " << detail::num(c.value) << '\n';
    os << "check." << c.name << ".tolerance = " << c.relation << ' ' << detail::num(c.tolerance) << '\n';
    os << "check." << c.name << ".pass = " << (c.passed ? "true" : "false") << '\n';
  }
  for (const auto& [k, v] : s.metrics) os << k << " = " << v << '\n';
  os << "integrator.accepted = " << s.stats.accepted << '\n';
  os << "integrator.rejected = " << s.stats.rejected << '\n';
  os << "integrator.rhs_evals = " << s.stats.rhs_evals << '\n';
  os << "integrator.output_samples = " << s.stats.output_samples << '\n';
  os << "trajectory.digest = " << std::hex << s.trajectory.digest << std::dec << '\n';
  os << "runtime_s = " << detail::num(s.runtime_s) << '\n';
}

/// Runs one experiment; writes trajectory.csv, diagnostics.csv and
/// summary.txt under <out_dir>/<name>/ when out_dir is set.
inline RunSummary run(const ExperimentConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  RunSummary s;
  s.name = c.name;
  s.mode = c.mode;
  if (c.mode == "dictionary") {
    detail::run_dictionary(c, s);
  } else if (c.mode == "affine-rescale") {
    detail::run_rescale(c, s);
  } else {
    detail::run_standard(c, s);
  }
  s.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!c.out_dir.empty()) {
    detail::stage("output", [&] {
      const std::filesystem::path dir = std::filesystem::path(c.out_dir) / c.name;
      std::error_code ec;
      std::filesystem::create_directories(dir, ec);
      if (ec) throw DomainError("cannot create output directory " + dir.string() + ": " + ec.message());
      std::ofstream tr(dir / "trajectory.csv"), dg(dir / "diagnostics.csv"), sm(dir / "summary.txt");
      if (!tr || !dg || !sm) throw DomainError("cannot write into " + dir.string());
      write_csv(tr, s.trajectory);
      write_csv(dg, s.series);
      write_summary(sm, s);
      return 0;
    });
  }
  return s;
}

// ---- registry ----------------------------------------------------------------

namespace detail {

inline Matrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

inline Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

inline StepControl rk4(double h, std::size_t stored = 10000) {
  StepControl s;
  s.method = Method::RK4;
  s.h0 = h;
  s.output_dt = h;
  s.max_stored = stored;
  return s;
}

inline ExperimentConfig tikhonov_base(const std::string& name, double alpha, const Vector& x0, double horizon) {
  ExperimentConfig c;
  c.name = name;
  c.phi = Potential::quadratic(diag2(1.0, 0.0), Vector::Zero(2));
  c.psi = Potential::tikhonov(vec2(2.0, 3.0), 0.5);
  c.gamma = 1.0;
  c.schedule = EpsilonSchedule::power_law(alpha);
  c.x0 = x0;
  c.v0 = Vector::Zero(2);
  c.horizon = horizon;
  c.step = rk4(0.01);
  return c;
}

}  // namespace detail

/// The built-in experiments.
inline std::vector<ExperimentConfig> registry() {
  using namespace detail;
  std::vector<ExperimentConfig> r;

  {
    ExperimentConfig c;
    c.name = "hbf-reduction";
    c.description = "Psi = 0: heavy ball with friction, limit in argmin Phi depending on the data";
    c.phi = Potential::quadratic(diag2(1.0, 0.0), Vector::Zero(2));
    c.psi = Potential::zero(2);
    c.gamma = 1.0;
    c.schedule = EpsilonSchedule::power_law(1.0);
    c.x0 = vec2(1.0, 0.5);
    c.v0 = vec2(0.0, 0.2);
    c.second_x0 = vec2(-1.0, -1.0);
    c.second_v0 = vec2(0.5, 0.0);
    c.horizon = 200.0;
    c.step = rk4(0.01, 20001);
    c.tol.dist_c = 1e-6;
    c.tol.speed = 1e-6;
    c.tol.grad_phi = 1e-6;
    c.checks = {"conditions", "e2-identity", "e1-monotone", "dist-c",     "speed",     "grad-phi",
                "distinct-limits", "h-settles", "oracle-kkt", "oracle-grid"};
    r.push_back(c);
  }
  {
    ExperimentConfig c = tikhonov_base("tikhonov-selection", 0.75, vec2(1.0, 1.0), 1e4);
    c.description = "Psi = 1/2 |x - a|^2: strong convergence to the projection of a onto argmin Phi";
    c.checks = {"conditions", "e2-identity", "e1-monotone",  "dist-z",     "tail-monotone", "speed",
                "phi",        "psi-selection", "int-phi-tail", "h-settles", "oracle-kkt",    "oracle-grid"};
    r.push_back(c);
  }
  {
    ExperimentConfig c = tikhonov_base("fast-eps-anti", 2.0, vec2(5.0, 5.0), 1e4);
    c.description = "integrable eps: the limit lies in argmin Phi but does not minimize Psi there";
    c.expect = {false, true, false};
    c.checks = {"conditions", "e2-identity", "e1-monotone", "dist-c", "psi-anti", "speed", "oracle-kkt", "oracle-grid"};
    r.push_back(c);
  }
  {
    ExperimentConfig c;
    c.name = "coupled-oscillators";
    c.description = "two oscillators attracted to [0,1] and [2,3], weakly coupled by 1/2 (x1 - x2)^2";
    c.phi = Potential::separable_of({Potential::sq_dist(ArgminSet::box(Vector::Constant(1, 0.0), Vector::Constant(1, 1.0))),
                                     Potential::sq_dist(ArgminSet::box(Vector::Constant(1, 2.0), Vector::Constant(1, 3.0)))});
    c.psi = Potential::coupling(Matrix::Identity(1, 1), Matrix::Identity(1, 1), Block{0, 1}, Block{1, 1}, 2);
    c.gamma = 1.0;
    c.schedule = EpsilonSchedule::power_law(0.75);
    c.x0 = vec2(0.2, 2.9);
    c.v0 = Vector::Zero(2);
    c.horizon = 1e4;
    c.step = rk4(0.01);
    c.checks = {"conditions", "e2-identity", "e1-monotone", "dist-z-l1", "psi-selection", "speed",
                "oracle-kkt", "oracle-grid"};
    r.push_back(c);
  }
  {
    ExperimentConfig c;
    c.name = "neumann-waves-1d";
    c.mode = "waves";
    c.description = "two damped Neumann waves on (0,1), n = 64 cells, coupled by 1/2 |u1 - u2|^2";
    c.waves = WavesSetup{};
    c.gamma = 1.0;
    c.schedule = EpsilonSchedule::power_law(0.75);
    c.horizon = 1e4;
    c.step = rk4(0.01, 2000);
    c.checks = {"conditions", "e2-identity", "e1-monotone", "mean-gap", "profile", "limit-mean", "oracle-kkt"};
    r.push_back(c);
  }
  {
    ExperimentConfig c;
    c.name = "dictionary-roundtrip";
    c.mode = "dictionary";
    c.description = "reparametrize a solution along t_eps and check it solves the beta-form system, and back";
    c.phi = Potential::quadratic(diag2(1e-4, 0.0), Vector::Zero(2));
    c.psi = Potential::tikhonov(vec2(2.0, 3.0), 0.5);
    c.gamma = 0.02;
    c.schedule = EpsilonSchedule::power_law(1.0);
    c.x0 = vec2(1.0, 0.0);
    c.v0 = Vector::Zero(2);
    c.horizon = 1.0;  // replaced by t_eps(s_to)
    c.step.method = Method::RK45;
    c.step.h0 = 1e-3;
    c.step.rtol = 1e-11;
    c.step.atol = 1e-15;
    c.dictionary = DictionarySetup{};
    c.checks = {"conditions", "e2-identity", "e1-monotone", "roundtrip",  "beta-residual",
                "beta-anti",  "beta-converse", "oracle-kkt", "oracle-grid"};
    r.push_back(c);
  }
  {
    ExperimentConfig c = tikhonov_base("affine-rescale", 0.75, vec2(1.0, 1.0), 100.0);
    c.mode = "affine-rescale";
    c.description = "y(t) = x(2t) solves the rescaled system; condition verdicts are unchanged";
    c.step = rk4(0.01, 20001);
    c.rescale_factor = 2.0;
    c.tol.residual = 1e-4;
    c.checks = {"conditions", "e2-identity", "e1-monotone", "rescale-residual", "rescale-anti",
                "rescale-verdicts", "oracle-kkt", "oracle-grid"};
    r.push_back(c);
  }
  return r;
}

inline ExperimentConfig find_experiment(const std::string& name) {
  for (auto& c : registry()) {
    if (c.name == name) return c;
  }
  std::string known;
  for (const auto& c : registry()) known += (known.empty() ? "" : ", ") + c.name;
  throw ConfigError("unknown experiment '" + name + "' (known: " + known + ")");
}

}  // namespace hiermin
