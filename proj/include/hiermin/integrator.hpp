#pragma once

#include "hiermin/core.hpp"
#include "hiermin/potentials.hpp"
#include "hiermin/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace hiermin {

enum class Method { RK4, RK45 };

struct StepControl {
  Method method = Method::RK45;
  /// Initial step (RK45) or fixed step (RK4).
  double h0 = 1e-3;
  double rtol = 1e-8;
  double atol = 1e-10;
  double max_step = std::numeric_limits<double>::infinity();
  /// Output cadence; 0 means min(0.01, ...) chosen so that at most 1e4
  /// samples are produced.
  double output_dt = 0.0;
  /// Explicit output times (RK45 only). Overrides output_dt when non-empty.
  std::vector<double> output_times;
  /// Cap on samples kept in the returned Trajectory. Observers always see
  /// every output sample.
  std::size_t max_stored = 10000;
  std::size_t max_steps = 500000000;
};

/// One run of m x'' + gamma x' + grad Phi(x) + eps(t) grad Psi(x) = 0.
struct ProblemSpec {
  Potential phi;
  Potential psi;
  double gamma = 1.0;
  double mass = 1.0;
  EpsilonSchedule schedule;
  Vector x0;
  Vector v0;
  double horizon = 1.0;
  StepControl step;

  [[nodiscard]] Eigen::Index dim() const { return x0.size(); }

  void validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw DomainError("ProblemSpec: gamma must be positive");
    if (!(mass > 0.0) || !std::isfinite(mass)) {
      throw DomainError("ProblemSpec: mass must be positive (the first-order case m = 0 is not supported)");
    }
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw DomainError("ProblemSpec: horizon must be positive");
    require_dim(v0, x0.size(), "ProblemSpec v0");
    if (phi.dim() != x0.size() || psi.dim() != x0.size()) {
      throw DimensionError("ProblemSpec: potentials and initial state disagree on dimension");
    }
    require_finite(x0, "ProblemSpec x0");
    require_finite(v0, "ProblemSpec v0");
    validate_step(step);
  }

  static void validate_step(const StepControl& s) {
    if (!(s.h0 > 0.0)) throw DomainError("StepControl: h0 must be positive");
    if (!(s.rtol > 0.0) || !(s.atol >= 0.0)) throw DomainError("StepControl: tolerances must be positive");
    if (!(s.max_step > 0.0)) throw DomainError("StepControl: max_step must be positive");
    if (s.output_dt < 0.0) throw DomainError("StepControl: output_dt must be >= 0");
    if (s.method == Method::RK4 && !s.output_times.empty()) {
      throw DomainError("StepControl: explicit output times need the adaptive method");
    }
  }
};

struct IntegratorStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evals = 0;
  std::size_t output_samples = 0;
  double max_residual = std::numeric_limits<double>::quiet_NaN();
};

struct Trajectory {
  std::vector<double> t;
  std::vector<Vector> x;
  std::vector<Vector> v;
  std::uint64_t digest = 0;
  IntegratorStats stats;

  [[nodiscard]] std::size_t size() const { return t.size(); }

  void push(double time, const Vector& pos, const Vector& vel) {
    t.push_back(time);
    x.push_back(pos);
    v.push_back(vel);
  }
};

/// Receives the output samples of a run, in order, on the integrating thread.
class Observer {
 public:
  virtual ~Observer() = default;
  virtual void on_sample(double t, const Vector& x, const Vector& v) = 0;
  virtual void on_step(double /*t*/, const Vector& /*x*/, const Vector& /*v*/) {}
};

/// Writes `t,x_0..,v_0..` rows at 17 significant digits.
inline void write_csv(std::ostream& os, const Trajectory& tr) {
  const Eigen::Index n = tr.x.empty() ? 0 : tr.x.front().size();
  os << "t";
  for (Eigen::Index i = 0; i < n; ++i) os << ",x_" << i;
  for (Eigen::Index i = 0; i < n; ++i) os << ",v_" << i;
  os << '\n';
  char buf[32];
  auto put = [&](double d) {
    std::snprintf(buf, sizeof buf, "%.17g", d);
    os << buf;
  };
  for (std::size_t k = 0; k < tr.size(); ++k) {
    put(tr.t[k]);
    for (Eigen::Index i = 0; i < n; ++i) os << ',', put(tr.x[k][i]);
    for (Eigen::Index i = 0; i < n; ++i) os << ',', put(tr.v[k][i]);
    os << '\n';
  }
}

namespace detail {

class Fnv {
 public:
  void add(double d) {
    unsigned char b[sizeof d];
    std::memcpy(b, &d, sizeof d);
    for (unsigned char c : b) h_ = (h_ ^ c) * 1099511628211ull;
  }
  void add(const Vector& v) {
    add(double(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) add(v[i]);
  }
  [[nodiscard]] std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 1469598103934665603ull;
};

// Dormand-Prince 5(4) tableau.
struct DP {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                          a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                          d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                          d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
};

// Integrates x'' = accel(t, x, x') from t0 over [t0, t0 + T].
template <class Accel>
Trajectory integrate_second_order(const Accel& accel, const Vector& x0, const Vector& v0, double t0, double T,
                                  const StepControl& sc, const std::vector<Observer*>& observers) {
  const Eigen::Index n = x0.size();
  const Eigen::Index N2 = 2 * n;
  const double t_end = t0 + T;
  Trajectory tr;
  auto& st = tr.stats;

  auto f = [&](double t, const Vector& y, Vector& dy) {
    dy.head(n) = y.tail(n);
    accel(t, y.head(n), y.tail(n), dy.tail(n));
    ++st.rhs_evals;
  };

  // output schedule
  std::vector<double> outs = sc.output_times;
  double out_dt = sc.output_dt;
  std::size_t n_out_uniform = 0;
  if (outs.empty()) {
    if (out_dt <= 0.0) out_dt = std::max(std::min(0.01, T), T / 1e4);
    n_out_uniform = std::size_t(std::llround(std::ceil(T / out_dt - 1e-9)));
  } else {
    if (!std::is_sorted(outs.begin(), outs.end()) || outs.front() < t0 || outs.back() > t_end * (1 + 1e-15)) {
      throw DomainError("integrate: output times must be sorted and inside the horizon");
    }
  }
  const std::size_t n_out = outs.empty() ? n_out_uniform + 1 : outs.size();
  auto out_time = [&](std::size_t k) -> double {
    if (!outs.empty()) return outs[k];
    return (k == n_out_uniform) ? t_end : t0 + double(k) * out_dt;
  };
  const std::size_t stride = std::max<std::size_t>(1, (n_out + sc.max_stored - 1) / std::max<std::size_t>(1, sc.max_stored));

  std::size_t next_out = 0;
  Vector xs(n), vs(n);
  auto emit = [&](double t, const Eigen::Ref<const Vector>& y) {
    xs = y.head(n);
    vs = y.tail(n);
    if (!xs.allFinite() || !vs.allFinite()) {
      throw NumericalAbort("integrate: non-finite state at t=" + std::to_string(t));
    }
    for (auto* o : observers) o->on_sample(t, xs, vs);
    if (next_out % stride == 0 || next_out + 1 == n_out) tr.push(t, xs, vs);
    ++next_out;
    ++st.output_samples;
  };

  Vector y(N2);
  y << x0, v0;

  if (sc.method == Method::RK4) {
    const auto steps = std::size_t(std::llround(std::ceil(T / sc.h0 - 1e-9)));
    if (steps > sc.max_steps) throw NumericalAbort("integrate: step budget exceeded");
    const double h = T / double(steps);
    const auto every = std::max<std::size_t>(1, std::size_t(std::llround(out_dt / h)));
    // re-derive the uniform output grid from the step grid
    n_out_uniform = (steps + every - 1) / every;
    const std::size_t n_rk4_out = steps / every + 1 + (steps % every != 0 ? 1 : 0);
    const std::size_t rk4_stride =
        std::max<std::size_t>(1, (n_rk4_out + sc.max_stored - 1) / std::max<std::size_t>(1, sc.max_stored));
    Vector k1(N2), k2(N2), k3(N2), k4(N2), tmp(N2);
    std::size_t emitted = 0;
    auto emit_rk4 = [&](double t, bool last) {
      xs = y.head(n);
      vs = y.tail(n);
      if (!xs.allFinite() || !vs.allFinite()) {
        throw NumericalAbort("integrate: non-finite state at t=" + std::to_string(t));
      }
      for (auto* o : observers) o->on_sample(t, xs, vs);
      if (emitted % rk4_stride == 0 || last) tr.push(t, xs, vs);
      ++emitted;
      ++st.output_samples;
    };
    emit_rk4(t0, steps == 0);
    for (std::size_t i = 0; i < steps; ++i) {
      const double t = t0 + double(i) * h;
      f(t, y, k1);
      tmp = y + (0.5 * h) * k1;
      f(t + 0.5 * h, tmp, k2);
      tmp = y + (0.5 * h) * k2;
      f(t + 0.5 * h, tmp, k3);
      tmp = y + h * k3;
      f(t + h, tmp, k4);
      y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      ++st.accepted;
      const double tn = (i + 1 == steps) ? t_end : t0 + double(i + 1) * h;
      if (!observers.empty()) {
        xs = y.head(n);
        vs = y.tail(n);
        for (auto* o : observers) o->on_step(tn, xs, vs);
      }
      if ((i + 1) % every == 0 || i + 1 == steps) emit_rk4(tn, i + 1 == steps);
    }
    return tr;
  }

  // ---- adaptive Dormand-Prince with dense output ----
  using C = DP;
  Vector k1(N2), k2(N2), k3(N2), k4(N2), k5(N2), k6(N2), k7(N2), ytmp(N2), ynew(N2), err(N2);
  Vector r2(N2), r3(N2), r4(N2), r5(N2), yd(N2);
  double t = t0;
  double h = std::min({sc.h0, sc.max_step, T});
  f(t, y, k1);
  while (next_out < n_out && out_time(next_out) <= t0) emit(t0, y);

  while (t < t_end) {
    if (st.accepted + st.rejected >= sc.max_steps) throw NumericalAbort("integrate: step budget exceeded");
    bool last = false;
    if (t + h >= t_end || t + 1.01 * h >= t_end) {
      h = t_end - t;
      last = true;
    }
    if (h < 1e-14 * std::max(1.0, std::abs(t))) {
      throw NumericalAbort("integrate: step size underflow at t=" + std::to_string(t));
    }
    ytmp = y + h * C::a21 * k1;
    f(t + C::c2 * h, ytmp, k2);
    ytmp = y + h * (C::a31 * k1 + C::a32 * k2);
    f(t + C::c3 * h, ytmp, k3);
    ytmp = y + h * (C::a41 * k1 + C::a42 * k2 + C::a43 * k3);
    f(t + C::c4 * h, ytmp, k4);
    ytmp = y + h * (C::a51 * k1 + C::a52 * k2 + C::a53 * k3 + C::a54 * k4);
    f(t + C::c5 * h, ytmp, k5);
    ytmp = y + h * (C::a61 * k1 + C::a62 * k2 + C::a63 * k3 + C::a64 * k4 + C::a65 * k5);
    f(t + h, ytmp, k6);
    ynew = y + h * (C::a71 * k1 + C::a73 * k3 + C::a74 * k4 + C::a75 * k5 + C::a76 * k6);
    const double tnew = last ? t_end : t + h;
    f(tnew, ynew, k7);
    err = h * (C::e1 * k1 + C::e3 * k3 + C::e4 * k4 + C::e5 * k5 + C::e6 * k6 + C::e7 * k7);
    double en = 0.0;
    for (Eigen::Index i = 0; i < N2; ++i) {
      const double sc_i = sc.atol + sc.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      const double q = err[i] / sc_i;
      en += q * q;
    }
    en = std::sqrt(en / double(N2));
    if (!std::isfinite(en)) {
      if (!ynew.allFinite() && h < 1e-10 * std::max(1.0, std::abs(t))) {
        throw NumericalAbort("integrate: non-finite state at t=" + std::to_string(t));
      }
      h *= 0.2;
      ++st.rejected;
      continue;
    }
    if (en > 1.0) {
      h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
      ++st.rejected;
      continue;
    }
    ++st.accepted;
    // dense output between t and tnew
    if (next_out < n_out && out_time(next_out) <= tnew) {
      yd = ynew - y;
      r3 = h * k1 - yd;
      r4 = yd - h * k7 - r3;
      r5 = h * (C::d1 * k1 + C::d3 * k3 + C::d4 * k4 + C::d5 * k5 + C::d6 * k6 + C::d7 * k7);
      while (next_out < n_out && out_time(next_out) <= tnew) {
        const double to = out_time(next_out);
        if (to == tnew) {
          emit(to, ynew);
          continue;
        }
        const double th = (to - t) / h, th1 = 1.0 - th;
        ytmp = y + th * (yd + th1 * (r3 + th * (r4 + th1 * r5)));
        emit(to, ytmp);
      }
    }
    y = ynew;
    k1 = k7;
    t = tnew;
    if (!observers.empty()) {
      xs = y.head(n);
      vs = y.tail(n);
      for (auto* o : observers) o->on_step(t, xs, vs);
    }
    const double fac = (en == 0.0) ? 10.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 10.0);
    h = std::min(h * fac, sc.max_step);
  }
  while (next_out < n_out) emit(out_time(next_out), y);
  return tr;
}

inline std::uint64_t digest_of(const ProblemSpec& s) {
  Fnv h;
  h.add(s.gamma);
  h.add(s.mass);
  h.add(s.horizon);
  h.add(s.x0);
  h.add(s.v0);
  for (double t : {0.0, 1.0, 10.0, 1000.0}) {
    h.add(s.schedule.eps(t));
    h.add(s.schedule.eps_dot(t));
  }
  h.add(s.phi.value(s.x0));
  h.add(s.phi.gradient(s.x0));
  h.add(s.psi.value(s.x0));
  h.add(s.psi.gradient(s.x0));
  h.add(double(int(s.step.method)));
  h.add(s.step.h0);
  h.add(s.step.rtol);
  h.add(s.step.atol);
  h.add(s.step.output_dt);
  return h.value();
}

// Index of the sample at time t with two neighbours on each side on a uniform
// grid; throws when t is not such a sample.
inline std::pair<std::size_t, double> stencil_index(const std::vector<double>& ts, double t) {
  if (ts.size() < 5) throw DomainError("residual: need at least five samples");
  const auto it = std::lower_bound(ts.begin(), ts.end(), t);
  std::size_t i = std::size_t(it - ts.begin());
  if (i == ts.size() || (i > 0 && std::abs(ts[i - 1] - t) < std::abs(ts[i] - t))) --i;
  const double tol = 1e-9 * std::max(1.0, std::abs(t));
  if (std::abs(ts[i] - t) > tol) throw DomainError("residual: t is not a sample time");
  if (i < 2 || i + 2 >= ts.size()) throw DomainError("residual: t is at the boundary of the sampled range");
  const double d = ts[i + 1] - ts[i];
  for (std::size_t k = i - 2; k < i + 2; ++k) {
    if (std::abs((ts[k + 1] - ts[k]) - d) > 1e-6 * d) throw DomainError("residual: samples around t are not uniform");
  }
  return {i, d};
}

}  // namespace detail

/// Fourth-order central differences (x', x'') at sample i with spacing d.
inline std::pair<Vector, Vector> central_differences(const std::vector<Vector>& xs, std::size_t i, double d) {
  const Vector& m2 = xs[i - 2];
  const Vector& m1 = xs[i - 1];
  const Vector& p1 = xs[i + 1];
  const Vector& p2 = xs[i + 2];
  Vector dx = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * d);
  Vector ddx = (-p2 + 16.0 * p1 - 30.0 * xs[i] + 16.0 * m1 - m2) / (12.0 * d * d);
  return {std::move(dx), std::move(ddx)};
}

/// (x', x'') of the dynamic at (t, x, v).
inline std::pair<Vector, Vector> rhs(const ProblemSpec& spec, double t, const Vector& x, const Vector& v) {
  require_dim(x, spec.dim(), "rhs x");
  require_dim(v, spec.dim(), "rhs v");
  require_finite(x, "rhs x");
  require_finite(v, "rhs v");
  Vector a = -spec.gamma * v;
  spec.phi.add_gradient(x, -1.0, a);
  spec.psi.add_gradient(x, -spec.schedule.eps(t), a);
  a /= spec.mass;
  return {v, std::move(a)};
}

inline Trajectory integrate(const ProblemSpec& spec, const std::vector<Observer*>& observers = {}) {
  spec.validate();
  const double g = spec.gamma, m = spec.mass;
  const auto& phi = spec.phi;
  const auto& psi = spec.psi;
  const auto& sched = spec.schedule;
  auto accel = [&](double t, const auto& x, const auto& v, auto a) {
    a = -g * v;
    phi.add_gradient(x, -1.0, a);
    psi.add_gradient(x, -sched.eps(t), a);
    if (m != 1.0) a /= m;
  };
  Trajectory tr = detail::integrate_second_order(accel, spec.x0, spec.v0, 0.0, spec.horizon, spec.step, observers);
  tr.digest = detail::digest_of(spec);
  return tr;
}

/// |m x''_fd + gamma x'_fd + grad Phi(x) + eps(t) grad Psi(x)| at sample time t.
inline double residual(const ProblemSpec& spec, const Trajectory& tr, double t) {
  const auto [i, d] = detail::stencil_index(tr.t, t);
  auto [dx, ddx] = central_differences(tr.x, i, d);
  Vector r = spec.mass * ddx + spec.gamma * dx;
  spec.phi.add_gradient(tr.x[i], 1.0, r);
  spec.psi.add_gradient(tr.x[i], spec.schedule.eps(tr.t[i]), r);
  return r.norm();
}

/// Largest residual over all interior samples whose stencil is uniform.
inline double max_residual(const ProblemSpec& spec, const Trajectory& tr, double t_min = 0.0,
                           double t_max = std::numeric_limits<double>::infinity()) {
  double worst = 0.0;
  for (std::size_t i = 2; i + 2 < tr.size(); ++i) {
    if (tr.t[i] < t_min || tr.t[i] > t_max) continue;
    try {
      worst = std::max(worst, residual(spec, tr, tr.t[i]));
    } catch (const DomainError&) {
    }
  }
  return worst;
}

// ---- beta form -------------------------------------------------------------

/// (m / beta) w'' + (gamma - m beta' / beta^2) w' + beta grad Phi(w) + grad Psi(w) = 0.
struct BetaProblemSpec {
  Potential phi;
  Potential psi;
  double gamma = 1.0;
  double mass = 1.0;
  BetaSchedule beta;
  Vector w0;
  Vector dw0;
  double start = 0.0;
  double horizon = 1.0;
  StepControl step;

  void validate() const {
    if (!(gamma > 0.0) || !(mass > 0.0)) throw DomainError("BetaProblemSpec: gamma and mass must be positive");
    if (!(horizon > 0.0) || !(start >= 0.0)) throw DomainError("BetaProblemSpec: bad time window");
    require_dim(dw0, w0.size(), "BetaProblemSpec dw0");
    if (phi.dim() != w0.size() || psi.dim() != w0.size()) throw DimensionError("BetaProblemSpec: dimension mismatch");
    ProblemSpec::validate_step(step);
  }
};

inline Trajectory integrate_beta(const BetaProblemSpec& spec, const std::vector<Observer*>& observers = {}) {
  spec.validate();
  const double g = spec.gamma, m = spec.mass;
  auto accel = [&](double s, const auto& w, const auto& dw, auto a) {
    const auto [b, bd] = spec.beta.beta_and_dot(s);
    a = -(g - m * bd / (b * b)) * dw;
    spec.phi.add_gradient(w, -b, a);
    spec.psi.add_gradient(w, -1.0, a);
    a *= b / m;
  };
  return detail::integrate_second_order(accel, spec.w0, spec.dw0, spec.start, spec.horizon, spec.step, observers);
}

/// Residual of the beta-form equation at sample time s, from differences of w.
inline double residual_beta(const BetaProblemSpec& spec, const Trajectory& tr, double s) {
  const auto [i, d] = detail::stencil_index(tr.t, s);
  auto [dw, ddw] = central_differences(tr.x, i, d);
  const auto [b, bd] = spec.beta.beta_and_dot(tr.t[i]);
  Vector r = (spec.mass / b) * ddw + (spec.gamma - spec.mass * bd / (b * b)) * dw;
  spec.phi.add_gradient(tr.x[i], b, r);
  spec.psi.add_gradient(tr.x[i], 1.0, r);
  return r.norm();
}

// ---- affine rescaling --------------------------------------------------------

/// y(t) = x(a t): relabels the samples (t -> t / a, v -> a v) and returns the
/// problem y solves: Phi -> a^2 Phi, eps -> a^2 eps(a .), gamma -> a gamma.
inline std::pair<Trajectory, ProblemSpec> rescale_affine(const Trajectory& tr, const ProblemSpec& spec, double a) {
  if (!(a > 0.0) || !std::isfinite(a)) throw DomainError("rescale_affine: factor must be positive");
  if (a == 1.0) return {tr, spec};
  Trajectory out;
  out.stats = tr.stats;
  for (std::size_t k = 0; k < tr.size(); ++k) out.push(tr.t[k] / a, tr.x[k], a * tr.v[k]);
  ProblemSpec rs{spec.phi.scaled(a * a),
                 spec.psi,
                 a * spec.gamma,
                 spec.mass,
                 EpsilonSchedule::rescaled(spec.schedule, a),
                 spec.x0,
                 a * spec.v0,
                 spec.horizon / a,
                 spec.step};
  rs.step.h0 /= a;
  rs.step.output_dt /= a;
  rs.step.max_step /= a;
  for (double& t : rs.step.output_times) t /= a;
  out.digest = detail::digest_of(rs);
  return {std::move(out), std::move(rs)};
}

}  // namespace hiermin
