#pragma once

#include "hiermin/core.hpp"
#include "hiermin/integrator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

namespace hiermin {

// ---- pointwise Lyapunov quantities ----------------------------------------

/// 1/2 |v|^2 + Phi(x) + eps(t) Psi(x).
inline double e1(const ProblemSpec& s, double t, const Vector& x, const Vector& v) {
  return 0.5 * s.mass * v.squaredNorm() + s.phi.value(x) + s.schedule.eps(t) * s.psi.value(x);
}

namespace detail {
inline double checked_eps(const ProblemSpec& s, double t) {
  const double e = s.schedule.eps(t);
  if (!(e > 1e3 * std::numeric_limits<double>::min())) {
    throw DomainError("E2: eps(t) underflows at t=" + std::to_string(t) + ", E2 is ill-conditioned");
  }
  return e;
}
}  // namespace detail

/// (1/2 |v|^2 + Phi(x)) / eps(t) + Psi(x).
inline double e2(const ProblemSpec& s, double t, const Vector& x, const Vector& v) {
  const double e = detail::checked_eps(s, t);
  return (0.5 * s.mass * v.squaredNorm() + s.phi.value(x)) / e + s.psi.value(x);
}

/// The two terms of dE2/dt: dissipation -gamma |v|^2 / eps and growth
/// -eps_dot / eps^2 (1/2 |v|^2 + Phi).
struct E2Rate {
  double dissipation = 0.0;
  double growth = 0.0;
  [[nodiscard]] double total() const { return dissipation + growth; }
  [[nodiscard]] double scale() const { return std::abs(dissipation) + std::abs(growth); }
};

inline E2Rate e2_rate(const ProblemSpec& s, double t, const Vector& x, const Vector& v) {
  const double e = detail::checked_eps(s, t);
  const double v2 = v.squaredNorm();
  return {-s.gamma * v2 / e, -s.schedule.eps_dot(t) / (e * e) * (0.5 * s.mass * v2 + s.phi.value(x))};
}

inline double e2_dot_closed_form(const ProblemSpec& s, double t, const Vector& x, const Vector& v) {
  return e2_rate(s, t, x, v).total();
}

// ---- series -----------------------------------------------------------------

struct HzSeries {
  std::vector<double> h;
  std::vector<double> hdot;
  std::vector<double> int_pos;  // running trapezoid integral of max(hdot, 0)
};

/// h_z = 1/2 |x - z|^2 and its exact derivative <x - z, v> along the samples.
inline HzSeries h_z_series(const Trajectory& tr, const Vector& z) {
  HzSeries out;
  for (std::size_t k = 0; k < tr.size(); ++k) {
    require_dim(z, tr.x[k].size(), "h_z_series z");
    const Vector d = tr.x[k] - z;
    out.h.push_back(0.5 * d.squaredNorm());
    out.hdot.push_back(d.dot(tr.v[k]));
    double acc = k == 0 ? 0.0 : out.int_pos.back();
    if (k > 0) {
      acc += 0.5 * (tr.t[k] - tr.t[k - 1]) * (std::max(out.hdot[k], 0.0) + std::max(out.hdot[k - 1], 0.0));
    }
    out.int_pos.push_back(acc);
  }
  return out;
}

struct DiagnosticsSeries {
  std::vector<double> t, E1, E1_shifted, E2, speed, grad_phi_norm, phi, psi;
  std::vector<std::vector<double>> h_z;  // one column per anchor
  std::vector<double> int_speed2, int_phi, int_eps_psi_gap;
  std::vector<std::vector<double>> int_hdot_pos;

  [[nodiscard]] std::size_t size() const { return t.size(); }
};

inline void write_csv(std::ostream& os, const DiagnosticsSeries& s) {
  os << "t,E1,E1_shifted,E2,speed,grad_phi_norm,phi,psi";
  for (std::size_t j = 0; j < s.h_z.size(); ++j) os << ",h_z_" << j;
  os << ",int_speed2,int_phi\n";
  char buf[32];
  auto put = [&](double d) {
    std::snprintf(buf, sizeof buf, "%.17g", d);
    os << buf;
  };
  for (std::size_t k = 0; k < s.size(); ++k) {
    put(s.t[k]);
    for (const auto* col : {&s.E1, &s.E1_shifted, &s.E2, &s.speed, &s.grad_phi_norm, &s.phi, &s.psi}) {
      os << ',';
      put((*col)[k]);
    }
    for (const auto& col : s.h_z) os << ',', put(col[k]);
    os << ',';
    put(s.int_speed2[k]);
    os << ',';
    put(s.int_phi[k]);
    os << '\n';
  }
}

struct MonotoneReport {
  double max_violation = 0.0;  // largest increase beyond the slack
  double worst_time = 0.0;
  std::size_t checked = 0;
};

/// E1 - c eps nonincreasing between consecutive rows, up to the per-step
/// error budget rtol |E1| + atol.
inline MonotoneReport check_e1_monotone(const DiagnosticsSeries& s, double rtol, double atol) {
  MonotoneReport r;
  for (std::size_t k = 1; k < s.size(); ++k) {
    const double slack = rtol * std::max(std::abs(s.E1[k]), std::abs(s.E1[k - 1])) + atol;
    const double inc = s.E1_shifted[k] - s.E1_shifted[k - 1] - slack;
    ++r.checked;
    if (inc > r.max_violation) {
      r.max_violation = inc;
      r.worst_time = s.t[k];
    }
  }
  return r;
}

// ---- streaming observer ------------------------------------------------------

struct DiagnosticsOptions {
  /// Anchors z for h_z; the first one is also the reference point for the
  /// Psi-gap integral.
  std::vector<Vector> anchors;
  /// E2 identity is compared on samples with t >= this.
  double e2_from = 1.0;
  /// Fraction of the horizon treated as the tail.
  double tail_fraction = 0.1;
  /// Rows kept in the exported series.
  std::size_t max_rows = 10000;
  /// Optional k of the bound -eps_dot <= k eps^2; enables the pointwise
  /// check dE2/dt <= k (1/2 |v|^2 + Phi).
  std::optional<double> h3_k;
};

/// Everything the checks need, accumulated over every output sample.
struct DiagnosticsReport {
  // E1
  MonotoneReport e1;
  double psi_inf = 0.0;
  // E2 identity
  double e2_max_rel_error = 0.0;
  double e2_worst_time = 0.0;
  std::size_t e2_checked = 0;
  double e2_bound_violation = 0.0;
  double e2_final = 0.0;
  // integrals and bounds
  double int_speed2 = 0.0;
  double int_phi = 0.0;
  double int_phi_tail = 0.0;  // contribution of the tail window
  double int_eps_psi_gap = 0.0;
  double sup_speed = 0.0;
  double sup_norm_x = 0.0;
  std::vector<double> int_hdot_pos;
  std::vector<double> h_tail_oscillation;
  std::vector<double> h_final;
  double dist_tail_max_increase = 0.0;  // |x - anchor0| over the tail
  // final state
  double t_final = 0.0;
  Vector x_final;
  Vector v_final;
};

class DiagnosticsObserver : public Observer {
 public:
  DiagnosticsObserver(const ProblemSpec& spec, DiagnosticsOptions opt)
      : spec_(spec), opt_(std::move(opt)), tail_start_((1.0 - opt_.tail_fraction) * spec.horizon) {
    for (const auto& z : opt_.anchors) require_dim(z, spec.dim(), "DiagnosticsObserver anchor");
    const std::size_t na = opt_.anchors.size();
    rep_.int_hdot_pos.assign(na, 0.0);
    rep_.h_tail_oscillation.assign(na, 0.0);
    rep_.h_final.assign(na, 0.0);
    tail_min_.assign(na, std::numeric_limits<double>::infinity());
    tail_max_.assign(na, -std::numeric_limits<double>::infinity());
    prev_hdot_pos_.assign(na, 0.0);
    series_.h_z.assign(na, {});
    series_.int_hdot_pos.assign(na, {});
    psi_ref_ = na > 0 ? spec.psi.value(opt_.anchors.front()) : 0.0;
    // inf Psi is 0 after normalization
    rep_.psi_inf = 0.0;
    const auto& st = spec.step;
    double n = 0.0;
    if (!st.output_times.empty()) {
      n = double(st.output_times.size());
    } else {
      double every = st.output_dt > 0.0 ? st.output_dt : std::max(std::min(0.01, spec.horizon), spec.horizon / 1e4);
      if (st.method == Method::RK4) every = std::max(every, st.h0);
      n = spec.horizon / every;
    }
    stride_ = std::max<std::size_t>(1, std::size_t(std::ceil(n / double(std::max<std::size_t>(1, opt_.max_rows)))));
  }

  void on_sample(double t, const Vector& x, const Vector& v) override {
    const double eps = detail::checked_eps(spec_, t);
    const double phi = spec_.phi.value(x);
    const double psi = spec_.psi.value(x);
    const double v2 = v.squaredNorm();
    const double e1v = 0.5 * spec_.mass * v2 + phi + eps * psi;
    const double e1s = e1v - rep_.psi_inf * eps;
    const double e2v = (0.5 * spec_.mass * v2 + phi) / eps + psi;
    const double eps_dot = spec_.schedule.eps_dot(t);
    const E2Rate rate{-spec_.gamma * v2 / eps, -eps_dot / (eps * eps) * (0.5 * spec_.mass * v2 + phi)};
    const double speed = std::sqrt(v2);
    const double gap = eps * (psi - psi_ref_);

    if (count_ > 0) {
      const double dt = t - prev_t_;
      rep_.int_speed2 += 0.5 * dt * (v2 + prev_v2_);
      const double dphi = 0.5 * dt * (phi + prev_phi_);
      rep_.int_phi += dphi;
      if (t > tail_start_) rep_.int_phi_tail += dphi;
      rep_.int_eps_psi_gap += 0.5 * dt * (gap + prev_gap_);
      const double slack = spec_.step.rtol * std::max(std::abs(e1v), std::abs(prev_e1_)) + spec_.step.atol;
      const double inc = e1s - prev_e1s_ - slack;
      ++rep_.e1.checked;
      if (inc > rep_.e1.max_violation) {
        rep_.e1.max_violation = inc;
        rep_.e1.worst_time = t;
      }
    }

    for (std::size_t j = 0; j < opt_.anchors.size(); ++j) {
      const Vector d = x - opt_.anchors[j];
      const double h = 0.5 * d.squaredNorm();
      const double hdp = std::max(d.dot(v), 0.0);
      if (count_ > 0) rep_.int_hdot_pos[j] += 0.5 * (t - prev_t_) * (hdp + prev_hdot_pos_[j]);
      prev_hdot_pos_[j] = hdp;
      if (t >= tail_start_) {
        tail_min_[j] = std::min(tail_min_[j], h);
        tail_max_[j] = std::max(tail_max_[j], h);
      }
      rep_.h_final[j] = h;
      if (j == 0 && t >= tail_start_) {
        const double dist = std::sqrt(2.0 * h);
        if (have_prev_dist_) {
          rep_.dist_tail_max_increase = std::max(rep_.dist_tail_max_increase, dist - prev_dist_);
        }
        prev_dist_ = dist;
        have_prev_dist_ = true;
      }
    }

    // E2 identity over 5-sample uniform windows
    win_[count_ % 5] = {t, e2v, rate.total(), rate.scale()};
    if (count_ >= 4) {
      std::array<WinEntry, 5> w;
      for (int k = 0; k < 5; ++k) w[std::size_t(k)] = win_[(count_ - 4 + std::size_t(k)) % 5];
      const double d = w[1].t - w[0].t;
      bool uniform = d > 0.0;
      for (int k = 1; k < 4 && uniform; ++k) {
        uniform = std::abs((w[std::size_t(k) + 1].t - w[std::size_t(k)].t) - d) <= 1e-9 * d;
      }
      if (uniform && w[2].t >= opt_.e2_from) {
        const double fd = (-w[4].e2 + 8.0 * w[3].e2 - 8.0 * w[1].e2 + w[0].e2) / (12.0 * d);
        if (w[2].scale > 0.0) {
          const double rel = std::abs(fd - w[2].cf) / w[2].scale;
          ++rep_.e2_checked;
          if (rel > rep_.e2_max_rel_error) {
            rep_.e2_max_rel_error = rel;
            rep_.e2_worst_time = w[2].t;
          }
        }
      }
    }
    if (opt_.h3_k) {
      const double bound = *opt_.h3_k * (0.5 * spec_.mass * v2 + phi);
      rep_.e2_bound_violation = std::max(rep_.e2_bound_violation, rate.total() - bound);
    }

    rep_.sup_speed = std::max(rep_.sup_speed, speed);
    rep_.sup_norm_x = std::max(rep_.sup_norm_x, x.norm());
    rep_.e2_final = e2v;
    rep_.t_final = t;
    rep_.x_final = x;
    rep_.v_final = v;

    const bool keep = (count_ % stride_ == 0) || t >= spec_.horizon;
    if (keep) {
      series_.t.push_back(t);
      series_.E1.push_back(e1v);
      series_.E1_shifted.push_back(e1s);
      series_.E2.push_back(e2v);
      series_.speed.push_back(speed);
      series_.grad_phi_norm.push_back(spec_.phi.gradient(x).norm());
      series_.phi.push_back(phi);
      series_.psi.push_back(psi);
      for (std::size_t j = 0; j < opt_.anchors.size(); ++j) {
        series_.h_z[j].push_back(0.5 * (x - opt_.anchors[j]).squaredNorm());
        series_.int_hdot_pos[j].push_back(rep_.int_hdot_pos[j]);
      }
      series_.int_speed2.push_back(rep_.int_speed2);
      series_.int_phi.push_back(rep_.int_phi);
      series_.int_eps_psi_gap.push_back(rep_.int_eps_psi_gap);
    }

    prev_t_ = t;
    prev_v2_ = v2;
    prev_phi_ = phi;
    prev_gap_ = gap;
    prev_e1_ = e1v;
    prev_e1s_ = e1s;
    ++count_;
  }

  [[nodiscard]] DiagnosticsReport report() const {
    DiagnosticsReport r = rep_;
    for (std::size_t j = 0; j < opt_.anchors.size(); ++j) {
      r.h_tail_oscillation[j] = std::isfinite(tail_min_[j]) ? tail_max_[j] - tail_min_[j] : 0.0;
    }
    return r;
  }
  [[nodiscard]] const DiagnosticsSeries& series() const { return series_; }

 private:
  struct WinEntry {
    double t = 0.0, e2 = 0.0, cf = 0.0, scale = 0.0;
  };

  const ProblemSpec& spec_;
  DiagnosticsOptions opt_;
  double tail_start_;
  DiagnosticsReport rep_;
  DiagnosticsSeries series_;
  std::array<WinEntry, 5> win_{};
  std::vector<double> tail_min_, tail_max_, prev_hdot_pos_;
  double psi_ref_ = 0.0;
  double prev_t_ = 0.0, prev_v2_ = 0.0, prev_phi_ = 0.0, prev_gap_ = 0.0, prev_e1_ = 0.0, prev_e1s_ = 0.0;
  double prev_dist_ = 0.0;
  bool have_prev_dist_ = false;
  std::size_t count_ = 0;
  std::size_t stride_ = 1;
};

/// Diagnostics of an already stored trajectory (no streaming).
inline std::pair<DiagnosticsReport, DiagnosticsSeries> compute_series(const ProblemSpec& spec, const Trajectory& tr,
                                                                      DiagnosticsOptions opt) {
  opt.max_rows = std::max(opt.max_rows, tr.size());
  DiagnosticsObserver obs(spec, std::move(opt));
  for (std::size_t k = 0; k < tr.size(); ++k) obs.on_sample(tr.t[k], tr.x[k], tr.v[k]);
  return {obs.report(), obs.series()};
}

// ---- limit checks ------------------------------------------------------------

struct LimitTolerances {
  double speed = 1e-3;
  double grad_phi = 1e-3;
  double phi = 1e-4;
  double psi_gap = 5e-2;
  double int_phi_tail = 1e-2;
  double h_tail_oscillation = 1e-2;
};

struct LimitReport {
  double speed = 0.0;
  double grad_phi = 0.0;
  double phi = 0.0;
  double dist_to_c = 0.0;
  std::optional<double> psi_gap;  // |Psi(x(T)) - Psi(z)|; empty when Psi is identically zero
  double int_phi_tail = 0.0;
  double sup_norm_x = 0.0;
  bool speed_ok = false, grad_phi_ok = false, phi_ok = false, psi_ok = false, int_phi_ok = false;
  [[nodiscard]] bool all_ok() const { return speed_ok && grad_phi_ok && phi_ok && psi_ok && int_phi_ok; }
};

/// Final-state surrogates of the asymptotic statements: vanishing velocity and
/// gradient, Phi(x(T)) -> 0, Psi(x(T)) -> Psi(z), Cauchy tail of the integral of Phi.
inline LimitReport limit_checks(const DiagnosticsReport& d, const ProblemSpec& spec, const Vector& z_star,
                                const LimitTolerances& tol = {}) {
  LimitReport r;
  const Vector& x = d.x_final;
  r.speed = d.v_final.norm();
  r.grad_phi = spec.phi.gradient(x).norm();
  r.phi = spec.phi.value(x);
  r.dist_to_c = spec.phi.argmin_set().distance(x);
  r.int_phi_tail = d.int_phi_tail;
  r.sup_norm_x = d.sup_norm_x;
  r.speed_ok = r.speed <= tol.speed;
  r.grad_phi_ok = r.grad_phi <= tol.grad_phi;
  r.phi_ok = r.phi <= tol.phi;
  r.int_phi_ok = r.int_phi_tail <= tol.int_phi_tail;
  const auto q = spec.psi.quadratic_model();
  const bool psi_zero = q && q->first.isZero(0.0) && q->second.isZero(0.0);
  if (psi_zero) {
    r.psi_ok = true;
  } else {
    r.psi_gap = std::abs(spec.psi.value(x) - spec.psi.value(z_star));
    r.psi_ok = *r.psi_gap <= tol.psi_gap;
  }
  return r;
}

}  // namespace hiermin
