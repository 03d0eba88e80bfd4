#pragma once

#include "hiermin/core.hpp"
#include "hiermin/potentials.hpp"
#include "hiermin/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace hiermin {

/// The vanishing weight eps(t) > 0, nonincreasing, C^1 on [0, inf).
class EpsilonSchedule {
 public:
  /// scale / (1 + t)^alpha
  struct PowerLaw {
    double alpha = 1.0;
    double scale = 1.0;
  };
  /// exp(-rate t)
  struct Exponential {
    double rate = 1.0;
  };
  struct Constant {
    double c = 1.0;
  };
  /// Tabulated (t, eps) with monotone cubic (PCHIP) interpolation. The first
  /// knot must be t = 0. Beyond the last knot the schedule continues as a
  /// power law matching value and slope there.
  struct Custom {
    std::vector<double> t;
    std::vector<double> eps;
  };
  /// a^2 base(a t): the schedule seen by y(t) = x(a t).
  struct Rescaled {
    std::shared_ptr<const EpsilonSchedule> base;
    double a = 1.0;
  };
  using Kind = std::variant<PowerLaw, Exponential, Constant, Custom, Rescaled>;

  static EpsilonSchedule power_law(double alpha, double scale = 1.0) {
    positive(alpha, "PowerLaw alpha");
    positive(scale, "PowerLaw scale");
    return EpsilonSchedule(PowerLaw{alpha, scale});
  }
  static EpsilonSchedule exponential(double rate) {
    positive(rate, "Exponential rate");
    return EpsilonSchedule(Exponential{rate});
  }
  static EpsilonSchedule constant(double c) {
    positive(c, "Constant c");
    return EpsilonSchedule(Constant{c});
  }
  static EpsilonSchedule custom(std::vector<double> t, std::vector<double> eps) {
    if (t.size() != eps.size() || t.size() < 2) {
      throw DomainError("Custom schedule: need at least two (t, eps) knots of equal count");
    }
    if (t.front() != 0.0) throw DomainError("Custom schedule: first knot must be t = 0");
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!std::isfinite(t[i]) || !std::isfinite(eps[i]) || !(eps[i] > 0.0)) {
        throw DomainError("Custom schedule: knots must be finite with eps > 0");
      }
      if (i > 0 && !(t[i] > t[i - 1])) throw DomainError("Custom schedule: t must be strictly increasing");
      if (i > 0 && eps[i] > eps[i - 1]) throw DomainError("Custom schedule: eps must be nonincreasing");
    }
    return EpsilonSchedule(Custom{std::move(t), std::move(eps)});
  }
  static EpsilonSchedule rescaled(const EpsilonSchedule& base, double a) {
    positive(a, "Rescaled factor");
    return EpsilonSchedule(Rescaled{std::make_shared<const EpsilonSchedule>(base), a});
  }

  [[nodiscard]] const Kind& kind() const { return kind_; }

  [[nodiscard]] double eps(double t) const {
    check_time(t);
    return eval(t);
  }

  [[nodiscard]] double eps_dot(double t) const {
    check_time(t);
    return eval_dot(t);
  }

  /// Cumulative integral of eps over [0, u] (the clock t_beta). Closed form
  /// for the parametric kinds, tabulated quadrature for Custom.
  [[nodiscard]] double cumulative(double u) const {
    check_time(u);
    return std::visit(
        [&](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, PowerLaw>) {
            const double q = 1.0 - k.alpha, L = std::log1p(u);
            return q == 0.0 ? k.scale * L : k.scale * std::expm1(q * L) / q;
          }
          if constexpr (std::is_same_v<K, Exponential>) return -std::expm1(-k.rate * u) / k.rate;
          if constexpr (std::is_same_v<K, Constant>) return k.c * u;
          if constexpr (std::is_same_v<K, Custom>) return cumulative_quadrature(u);
          if constexpr (std::is_same_v<K, Rescaled>) return k.a * k.base->cumulative(k.a * u);
        },
        kind_);
  }

  /// Inverse of cumulative (the clock t_eps). Throws DomainError when s is
  /// beyond the total integral of eps, i.e. when that integral is finite and
  /// the reparametrization does not exist.
  [[nodiscard]] double cumulative_inverse(double s) const {
    if (!std::isfinite(s) || s < 0.0) throw DomainError("t_eps: argument must be finite and >= 0");
    auto finite = [s](double u) {
      if (!std::isfinite(u)) throw DomainError("t_eps(" + std::to_string(s) + ") overflows");
      return u;
    };
    return std::visit(
        [&](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, PowerLaw>) {
            const double q = 1.0 - k.alpha, r = s / k.scale;
            if (q == 0.0) return finite(std::expm1(r));
            if (q * r <= -1.0) throw beyond_total(s, -1.0 / q * k.scale);
            return finite(std::expm1(std::log1p(q * r) / q));
          }
          if constexpr (std::is_same_v<K, Exponential>) {
            if (k.rate * s >= 1.0) throw beyond_total(s, 1.0 / k.rate);
            return finite(-std::log1p(-k.rate * s) / k.rate);
          }
          if constexpr (std::is_same_v<K, Constant>) return finite(s / k.c);
          if constexpr (std::is_same_v<K, Custom>) return cumulative_inverse_quadrature(s);
          if constexpr (std::is_same_v<K, Rescaled>) return k.base->cumulative_inverse(s / k.a) / k.a;
        },
        kind_);
  }

  /// cumulative by composite Gauss-Legendre quadrature, for every kind.
  [[nodiscard]] double cumulative_quadrature(double u) const {
    check_time(u);
    const auto& b = table_->breaks;
    if (u >= b.back()) return table_->cum.back() + quad::graded(eval_fn(), b.back(), u, 64);
    const auto k = std::size_t(std::upper_bound(b.begin(), b.end(), u) - b.begin()) - 1;
    return table_->cum[k] + quad::gauss16(eval_fn(), b[k], u);
  }

  /// cumulative_inverse by safeguarded Newton on cumulative_quadrature.
  [[nodiscard]] double cumulative_inverse_quadrature(double s) const {
    if (!std::isfinite(s) || s < 0.0) throw DomainError("t_eps: argument must be finite and >= 0");
    const auto& b = table_->breaks;
    const auto& cum = table_->cum;
    if (s >= cum.back()) {
      throw DomainError("t_eps undefined: integral of eps stays below " + std::to_string(cum.back()) +
                        " up to t = " + std::to_string(b.back()) + ", requested " + std::to_string(s));
    }
    const auto k = std::size_t(std::upper_bound(cum.begin(), cum.end(), s) - cum.begin()) - 1;
    double lo = b[k], hi = b[k + 1];
    const double base = cum[k];
    const auto f_eps = eval_fn();
    auto resid = [&](double u) { return base + quad::gauss16(f_eps, b[k], u) - s; };
    double u = lo + (hi - lo) * (s - cum[k]) / (cum[k + 1] - cum[k]);
    for (int it = 0; it < 200; ++it) {
      const double f = resid(u);
      if (f == 0.0) return u;
      (f > 0.0 ? hi : lo) = u;
      double next = u - f / eval(u);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - u) <= 1e-15 * (1.0 + u)) return next;
      u = next;
    }
    return u;
  }

  friend bool operator==(const EpsilonSchedule& a, const EpsilonSchedule& b) {
    if (a.kind_.index() != b.kind_.index()) return false;
    return std::visit(
        [&](const auto& ka) -> bool {
          using K = std::decay_t<decltype(ka)>;
          const auto& kb = std::get<K>(b.kind_);
          if constexpr (std::is_same_v<K, PowerLaw>) return ka.alpha == kb.alpha && ka.scale == kb.scale;
          if constexpr (std::is_same_v<K, Exponential>) return ka.rate == kb.rate;
          if constexpr (std::is_same_v<K, Constant>) return ka.c == kb.c;
          if constexpr (std::is_same_v<K, Custom>) return ka.t == kb.t && ka.eps == kb.eps;
          if constexpr (std::is_same_v<K, Rescaled>) return ka.a == kb.a && *ka.base == *kb.base;
        },
        a.kind_);
  }

  /// Exponent of the power-law continuation beyond the last Custom knot.
  [[nodiscard]] double custom_tail_exponent() const { return tail_p_; }

 private:
  struct Table {
    std::vector<double> breaks;
    std::vector<double> cum;
  };

  explicit EpsilonSchedule(Kind k) : kind_(std::move(k)) {
    if (auto* c = std::get_if<Custom>(&kind_)) build_pchip(*c);
    build_table();
  }

  static void positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string(what) + " must be positive and finite");
  }
  static DomainError beyond_total(double s, double total) {
    return DomainError("t_eps undefined: integral of eps is finite (" + std::to_string(total) + "), requested " +
                       std::to_string(s));
  }
  static void check_time(double t) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("schedule: time must be finite and >= 0");
  }

  std::function<double(double)> eval_fn() const {
    return [this](double t) { return eval(t); };
  }

  // Fritsch-Carlson slopes with the one-sided three-point end rule.
  void build_pchip(const Custom& c) {
    const std::size_t n = c.t.size();
    std::vector<double> h(n - 1), del(n - 1);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      h[k] = c.t[k + 1] - c.t[k];
      del[k] = (c.eps[k + 1] - c.eps[k]) / h[k];
    }
    d_.assign(n, 0.0);
    if (n == 2) {
      d_[0] = d_[1] = del[0];
    } else {
      for (std::size_t k = 1; k + 1 < n; ++k) {
        if (del[k - 1] * del[k] <= 0.0) continue;
        const double w1 = 2.0 * h[k] + h[k - 1], w2 = h[k] + 2.0 * h[k - 1];
        d_[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
      }
      auto end_slope = [](double h0, double h1, double d0, double d1) {
        double d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if (d * d0 <= 0.0) return 0.0;
        if (d0 * d1 <= 0.0 && std::abs(d) > 3.0 * std::abs(d0)) return 3.0 * d0;
        return d;
      };
      d_[0] = end_slope(h[0], h[1], del[0], del[1]);
      d_[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    }
    tail_p_ = -d_.back() * (1.0 + c.t.back()) / c.eps.back();
  }

  void build_table() {
    auto tab = std::make_shared<Table>();
    auto& b = tab->breaks;
    for (int i = 0; i <= 16; ++i) b.push_back(i / 16.0);
    double start = 1.0;
    if (const auto* c = std::get_if<Custom>(&kind_)) {
      b.insert(b.end(), c->t.begin(), c->t.end());
      start = std::max(1.0, c->t.back());
    }
    for (double x = start; x < 1e15; x = 1.25 * (1.0 + x) - 1.0) b.push_back(x);
    b.push_back(1e15);
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    tab->cum.assign(b.size(), 0.0);
    for (std::size_t k = 1; k < b.size(); ++k) {
      tab->cum[k] = tab->cum[k - 1] + quad::gauss16(eval_fn(), b[k - 1], b[k]);
    }
    table_ = std::move(tab);
  }

  [[nodiscard]] double eval(double t) const {
    return std::visit(
        [&](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, PowerLaw>) return k.scale * std::pow(1.0 + t, -k.alpha);
          if constexpr (std::is_same_v<K, Exponential>) return std::exp(-k.rate * t);
          if constexpr (std::is_same_v<K, Constant>) return k.c;
          if constexpr (std::is_same_v<K, Custom>) return custom_eval(k, t, false);
          if constexpr (std::is_same_v<K, Rescaled>) return k.a * k.a * k.base->eval(k.a * t);
        },
        kind_);
  }

  [[nodiscard]] double eval_dot(double t) const {
    return std::visit(
        [&](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, PowerLaw>) return -k.alpha * k.scale * std::pow(1.0 + t, -k.alpha - 1.0);
          if constexpr (std::is_same_v<K, Exponential>) return -k.rate * std::exp(-k.rate * t);
          if constexpr (std::is_same_v<K, Constant>) return 0.0;
          if constexpr (std::is_same_v<K, Custom>) return custom_eval(k, t, true);
          if constexpr (std::is_same_v<K, Rescaled>) return k.a * k.a * k.a * k.base->eval_dot(k.a * t);
        },
        kind_);
  }

  [[nodiscard]] double custom_eval(const Custom& c, double t, bool derivative) const {
    const double tn = c.t.back();
    if (t >= tn) {
      const double ratio = (1.0 + t) / (1.0 + tn);
      const double v = c.eps.back() * std::pow(ratio, -tail_p_);
      return derivative ? -tail_p_ * v / (1.0 + t) : v;
    }
    const auto k = std::size_t(std::upper_bound(c.t.begin(), c.t.end(), t) - c.t.begin()) - 1;
    const double h = c.t[k + 1] - c.t[k];
    const double s = (t - c.t[k]) / h;
    const double y0 = c.eps[k], y1 = c.eps[k + 1], m0 = d_[k] * h, m1 = d_[k + 1] * h;
    if (!derivative) {
      const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
      const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
      return h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1;
    }
    const double d00 = 6 * s * s - 6 * s, d10 = 3 * s * s - 4 * s + 1;
    const double d01 = -6 * s * s + 6 * s, d11 = 3 * s * s - 2 * s;
    return (d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1) / h;
  }

  Kind kind_;
  std::vector<double> d_;
  double tail_p_ = 0.0;
  std::shared_ptr<const Table> table_;
};

inline double eps(const EpsilonSchedule& s, double t) { return s.eps(t); }
inline double eps_dot(const EpsilonSchedule& s, double t) { return s.eps_dot(t); }

/// The two clocks relating a schedule to its beta-form: t_beta(u) is the
/// integral of eps over [0, u] and t_eps is its inverse.
struct TimeMaps {
  std::function<double(double)> t_beta;
  std::function<double(double)> t_eps;
};

inline TimeMaps time_maps(const EpsilonSchedule& s) {
  auto sp = std::make_shared<const EpsilonSchedule>(s);
  return {[sp](double u) { return sp->cumulative(u); }, [sp](double v) { return sp->cumulative_inverse(v); }};
}

/// Weight beta(s) of the reparametrized system, either derived from an eps
/// schedule (beta(s) = 1 / eps(t_eps(s))) or constant.
class BetaSchedule {
 public:
  static BetaSchedule from_eps(const EpsilonSchedule& s) {
    BetaSchedule b;
    b.eps_ = std::make_shared<const EpsilonSchedule>(s);
    return b;
  }
  static BetaSchedule constant(double value) {
    if (!(value > 0.0) || !std::isfinite(value)) throw DomainError("BetaSchedule: constant must be positive");
    BetaSchedule b;
    b.const_ = value;
    return b;
  }

  [[nodiscard]] double beta(double s) const {
    if (!eps_) return const_;
    return 1.0 / eps_->eps(eps_->cumulative_inverse(s));
  }

  /// d beta / ds = -eps_dot / eps^3 at t = t_eps(s).
  [[nodiscard]] double beta_dot(double s) const {
    if (!eps_) return 0.0;
    const double t = eps_->cumulative_inverse(s);
    const double e = eps_->eps(t);
    return -eps_->eps_dot(t) / (e * e * e);
  }

  /// beta and beta_dot with a single clock inversion.
  [[nodiscard]] std::pair<double, double> beta_and_dot(double s) const {
    if (!eps_) return {const_, 0.0};
    const double t = eps_->cumulative_inverse(s);
    const double e = eps_->eps(t);
    return {1.0 / e, -eps_->eps_dot(t) / (e * e * e)};
  }

  [[nodiscard]] const EpsilonSchedule* source() const { return eps_.get(); }

 private:
  BetaSchedule() = default;
  std::shared_ptr<const EpsilonSchedule> eps_;
  double const_ = 1.0;
};

inline BetaSchedule beta_from_eps(const EpsilonSchedule& s) { return BetaSchedule::from_eps(s); }

// ---- condition checkers ---------------------------------------------------

struct ConditionOptions {
  double horizon = 1e8;
  /// Use closed-form verdicts for the kinds that have them; otherwise (or when
  /// false) decide from numeric tail rates.
  bool analytic = true;
  /// A tail integrand decaying like t^-q is judged integrable iff q > 1 + margin.
  double exponent_margin = 0.05;
  /// Allowed relative growth of the windowed sup of -eps_dot/eps^2 when the
  /// horizon doubles.
  double h3_growth = 0.01;
  /// Search box for the brute-force conjugate when Phi has no closed form.
  std::optional<SearchBox> conjugate_box;
};

struct H1Report {
  bool holds = false;
  double evidence = 0.0;        // integral of eps over [0, horizon]
  double tail_exponent = 0.0;   // fitted q in eps ~ t^-q
  bool analytic = false;
};

struct RayEstimate {
  ConeRay ray;
  ExtendedReal integral = 0.0;  // integral over [0, inf) incl. extrapolated tail
  double tail_exponent = std::numeric_limits<double>::infinity();
};

struct H2Report {
  bool holds = false;
  std::vector<RayEstimate> per_ray;
  bool analytic = false;
  bool trivial = false;  // every ray is zero
};

struct H3Report {
  bool holds = false;
  double k_estimate = 0.0;
  double onset_time = 0.0;
  bool analytic = false;
};

struct ConditionReport {
  H1Report h1;
  H2Report h2;
  H3Report h3;
  std::vector<std::string> notes;
  [[nodiscard]] bool all_hold() const { return h1.holds && h2.holds && h3.holds; }
};

namespace detail {

// q such that the integrals over [T/4, T/2] and [T/2, T] scale like t^(1-q).
inline double doubling_exponent(double lower, double upper) {
  if (!(lower > 0.0) || !(upper > 0.0)) return std::numeric_limits<double>::infinity();
  return 1.0 - std::log2(upper / lower);
}

// Closed-form verdict/values where the kind allows it.
inline std::optional<bool> analytic_h1(const EpsilonSchedule& s) {
  return std::visit(
      [](const auto& k) -> std::optional<bool> {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, EpsilonSchedule::PowerLaw>) return k.alpha <= 1.0;
        if constexpr (std::is_same_v<K, EpsilonSchedule::Exponential>) return false;
        if constexpr (std::is_same_v<K, EpsilonSchedule::Constant>) return true;
        if constexpr (std::is_same_v<K, EpsilonSchedule::Custom>) return std::nullopt;
        if constexpr (std::is_same_v<K, EpsilonSchedule::Rescaled>) return analytic_h1(*k.base);
      },
      s.kind());
}

// Integral of eps^2 over [0, inf), +inf when divergent.
inline std::optional<ExtendedReal> analytic_sq_integral(const EpsilonSchedule& s) {
  return std::visit(
      [](const auto& k) -> std::optional<ExtendedReal> {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, EpsilonSchedule::PowerLaw>) {
          if (k.alpha <= 0.5) return ExtendedReal::infinity();
          return k.scale * k.scale / (2.0 * k.alpha - 1.0);
        }
        if constexpr (std::is_same_v<K, EpsilonSchedule::Exponential>) return 1.0 / (2.0 * k.rate);
        if constexpr (std::is_same_v<K, EpsilonSchedule::Constant>) return ExtendedReal::infinity();
        if constexpr (std::is_same_v<K, EpsilonSchedule::Custom>) return std::nullopt;
        if constexpr (std::is_same_v<K, EpsilonSchedule::Rescaled>) {
          // integral of a^4 eps(a t)^2 dt = a^3 * integral of eps^2
          auto base = analytic_sq_integral(*k.base);
          if (!base || base->is_infinite()) return base;
          return k.a * k.a * k.a * base->value();
        }
      },
      s.kind());
}

// (k over [0, T], holds) for -eps_dot / eps^2.
inline std::optional<std::pair<double, bool>> analytic_h3(const EpsilonSchedule& s, double T) {
  return std::visit(
      [T](const auto& k) -> std::optional<std::pair<double, bool>> {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, EpsilonSchedule::PowerLaw>) {
          // ratio (alpha/scale) (1+t)^(alpha-1)
          const double at0 = k.alpha / k.scale;
          if (k.alpha <= 1.0) return std::pair{at0, true};
          return std::pair{at0 * std::pow(1.0 + T, k.alpha - 1.0), false};
        }
        if constexpr (std::is_same_v<K, EpsilonSchedule::Exponential>) {
          return std::pair{k.rate * std::exp(k.rate * T), false};
        }
        if constexpr (std::is_same_v<K, EpsilonSchedule::Constant>) return std::pair{0.0, true};
        if constexpr (std::is_same_v<K, EpsilonSchedule::Custom>) return std::nullopt;
        if constexpr (std::is_same_v<K, EpsilonSchedule::Rescaled>) {
          // ratio of the rescaled schedule at t is (1/a) * base ratio at a t
          auto base = analytic_h3(*k.base, k.a * T);
          if (!base) return base;
          return std::pair{base->first / k.a, base->second};
        }
      },
      s.kind());
}

inline double h3_ratio(const EpsilonSchedule& s, double t) {
  const double e = s.eps(t);
  const double d = s.eps_dot(t);
  if (!(e > 0.0)) return std::numeric_limits<double>::infinity();
  return -d / (e * e);
}

inline double grid_sup(const EpsilonSchedule& s, double a, double b, int per_decade) {
  double sup = -std::numeric_limits<double>::infinity();
  if (a <= 0.0) {
    sup = h3_ratio(s, 0.0);
    a = 1e-3;
  }
  const int n = std::max(2, int(std::ceil(per_decade * std::log10(b / a))) + 1);
  for (int i = 0; i < n; ++i) {
    const double t = a * std::pow(b / a, double(i) / (n - 1));
    const double r = h3_ratio(s, t);
    if (std::isnan(r)) return std::numeric_limits<double>::infinity();
    sup = std::max(sup, r);
  }
  return sup;
}

}  // namespace detail

inline H1Report check_h1(const EpsilonSchedule& s, const ConditionOptions& opt = {}) {
  if (!(opt.horizon > 0.0)) throw DomainError("check_h1: horizon must be positive");
  const double T = opt.horizon;
  H1Report r;
  r.evidence = s.cumulative(T);
  auto f = [&](double t) { return s.eps(t); };
  const double lower = quad::graded(f, T / 4, T / 2, 8);
  const double upper = quad::graded(f, T / 2, T, 8);
  r.tail_exponent = detail::doubling_exponent(lower, upper);
  if (opt.analytic) {
    if (auto v = detail::analytic_h1(s)) {
      r.holds = *v;
      r.analytic = true;
      return r;
    }
  }
  r.holds = r.tail_exponent <= 1.0 + opt.exponent_margin;
  return r;
}

inline H1Report check_h1(const EpsilonSchedule& s, double horizon) {
  ConditionOptions o;
  o.horizon = horizon;
  return check_h1(s, o);
}

/// Condition on the conjugate gap Phi*(eps p) - sigma_C(eps p) along the rays.
inline H2Report check_h2(const EpsilonSchedule& s, const Potential& phi, const std::vector<ConeRay>& rays,
                         const ConditionOptions& opt = {}) {
  if (!(opt.horizon > 0.0)) throw DomainError("check_h2: horizon must be positive");
  H2Report rep;
  rep.trivial = std::all_of(rays.begin(), rays.end(), [](const ConeRay& r) { return r.direction.isZero(0.0); });
  if (rep.trivial) {
    rep.holds = true;
    for (const auto& ray : rays) rep.per_ray.push_back({ray, 0.0, std::numeric_limits<double>::infinity()});
    return rep;
  }

  if (opt.analytic && phi.is_half_sq_dist()) {
    if (auto sq = detail::analytic_sq_integral(s)) {
      rep.analytic = true;
      rep.holds = sq->is_finite();
      for (const auto& ray : rays) {
        const double half_norm2 = 0.5 * ray.direction.squaredNorm();
        ExtendedReal val = sq->is_finite() ? ExtendedReal(half_norm2 * sq->value()) : ExtendedReal::infinity();
        if (half_norm2 == 0.0) val = 0.0;
        rep.per_ray.push_back({ray, val, std::numeric_limits<double>::infinity()});
      }
      return rep;
    }
  }

  const ArgminSet& C = phi.argmin_set();
  rep.holds = true;
  for (const auto& ray : rays) {
    RayEstimate est{ray, 0.0, std::numeric_limits<double>::infinity()};
    if (ray.direction.isZero(0.0)) {
      rep.per_ray.push_back(est);
      continue;
    }
    bool infinite = false;
    auto gap = [&](double t) -> double {
      const Vector y = s.eps(t) * ray.direction;
      const ExtendedReal sigma = C.support(y);
      if (sigma.is_infinite()) throw DomainError("check_h2: ray is not in the normal cone (sigma_C infinite)");
      double conj = 0.0;
      try {
        const ExtendedReal c = phi.conjugate(y);
        if (c.is_infinite()) {
          infinite = true;
          return 0.0;
        }
        conj = c.value();
      } catch (const UnsupportedConjugate&) {
        if (!opt.conjugate_box) {
          throw DomainError("check_h2: Phi has no closed-form conjugate and no search box was given");
        }
        conj = conjugate_numeric(phi, y, *opt.conjugate_box, 20000);
      }
      return std::max(0.0, conj - sigma.value());
    };
    const double T = opt.horizon;
    const double body = quad::graded(gap, 0.0, T / 4, 40);
    const double lower = quad::graded(gap, T / 4, T / 2, 8);
    const double upper = quad::graded(gap, T / 2, T, 8);
    if (infinite) {
      est.integral = ExtendedReal::infinity();
      est.tail_exponent = 0.0;
      rep.holds = false;
      rep.per_ray.push_back(est);
      continue;
    }
    const double total = body + lower + upper;
    if (upper <= 1e-300 || upper <= 1e-15 * total) {
      est.integral = total;  // integrand has died out
    } else {
      est.tail_exponent = detail::doubling_exponent(lower, upper);
      const double ratio = upper / lower;
      if (est.tail_exponent > 1.0 + opt.exponent_margin && ratio < 1.0) {
        est.integral = total + upper * ratio / (1.0 - ratio);
      } else {
        est.integral = ExtendedReal::infinity();
        rep.holds = false;
      }
    }
    rep.per_ray.push_back(est);
  }
  return rep;
}

inline H3Report check_h3(const EpsilonSchedule& s, const ConditionOptions& opt = {}) {
  if (!(opt.horizon > 0.0)) throw DomainError("check_h3: horizon must be positive");
  const double T = opt.horizon;
  H3Report r;
  r.onset_time = 0.0;
  if (opt.analytic) {
    if (auto v = detail::analytic_h3(s, T)) {
      r.k_estimate = v->first;
      r.holds = v->second;
      r.analytic = true;
      return r;
    }
  }
  constexpr int kPerDecade = 200;
  r.k_estimate = detail::grid_sup(s, 0.0, T, kPerDecade);
  const double window = detail::grid_sup(s, T / 2, T, kPerDecade);
  const double doubled = detail::grid_sup(s, T, 2 * T, kPerDecade);
  bool sign_ok = true;
  for (double t : {0.0, 1.0, T / 2, T}) sign_ok = sign_ok && s.eps_dot(t) <= 0.0;
  r.holds = sign_ok && std::isfinite(r.k_estimate) && std::isfinite(doubled) &&
            doubled <= (1.0 + opt.h3_growth) * std::max(window, 0.0) + 1e-300;
  if (window == 0.0 && doubled == 0.0) r.holds = sign_ok;
  return r;
}

inline H3Report check_h3(const EpsilonSchedule& s, double horizon) {
  ConditionOptions o;
  o.horizon = horizon;
  return check_h3(s, o);
}

inline ConditionReport check_conditions(const EpsilonSchedule& s, const Potential& phi,
                                        const std::vector<ConeRay>& rays, const ConditionOptions& opt = {}) {
  ConditionReport rep{check_h1(s, opt), check_h2(s, phi, rays, opt), check_h3(s, opt), {}};
  if (const auto* c = std::get_if<EpsilonSchedule::Custom>(&s.kind())) {
    const double tn = c->t.back();
    const double edge = detail::h3_ratio(s, tn);
    rep.notes.push_back("custom table ends at t=" + std::to_string(tn) + " with eps_dot=" +
                        std::to_string(s.eps_dot(tn)) + " and -eps_dot/eps^2=" + std::to_string(edge) +
                        "; continued as power law with exponent " + std::to_string(s.custom_tail_exponent()));
  }
  return rep;
}

}  // namespace hiermin
