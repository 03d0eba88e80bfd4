#include "support.hpp"

#include <gtest/gtest.h>

using namespace hiermin;
using hiermin::testing::Gen;
using hiermin::testing::v2;

namespace {

Matrix axis_e2() {
  Matrix b(2, 1);
  b << 0.0, 1.0;
  return b;
}

// Phi = 1/2 dist^2 to the x2-axis, Psi = 1/2 |x - (2,3)|^2, rays from z = (0,3)
struct ModelCase {
  Potential phi = Potential::sq_dist(ArgminSet::affine(Vector::Zero(2), axis_e2()), 0.5);
  Potential psi = Potential::tikhonov(v2(2.0, 3.0), 0.5);
  std::vector<ConeRay> rays = cone_rays(phi, psi, v2(0.0, 3.0));
};

ConditionOptions numeric_only() {
  ConditionOptions o;
  o.analytic = false;
  return o;
}

EpsilonSchedule random_schedule(Gen& g) {
  switch (g.integer(0, 4)) {
    case 0: return EpsilonSchedule::power_law(g.uniform(0.3, 2.5), g.uniform(0.2, 3.0));
    case 1: return EpsilonSchedule::exponential(g.uniform(0.05, 2.0));
    case 2: return EpsilonSchedule::constant(g.uniform(0.1, 3.0));
    case 3: {
      std::vector<double> t{0.0}, e{g.uniform(0.5, 2.0)};
      const int n = g.integer(2, 8);
      for (int k = 0; k < n; ++k) {
        t.push_back(t.back() + g.uniform(0.2, 3.0));
        e.push_back(e.back() * g.uniform(0.3, 1.0));
      }
      return EpsilonSchedule::custom(t, e);
    }
    default: return EpsilonSchedule::rescaled(EpsilonSchedule::power_law(g.uniform(0.5, 1.0)), g.uniform(0.5, 3.0));
  }
}

}  // namespace

// ---- values and derivatives ---------------------------------------------------

TEST(Eps, PowerLawAtOrigin) { EXPECT_DOUBLE_EQ(EpsilonSchedule::power_law(0.75).eps(0.0), 1.0); }

TEST(Eps, HarmonicAtNine) { EXPECT_DOUBLE_EQ(EpsilonSchedule::power_law(1.0).eps(9.0), 0.1); }

TEST(Eps, ConstantEverywhere) {
  const auto s = EpsilonSchedule::constant(0.37);
  for (double t : {0.0, 1.0, 1e6}) EXPECT_DOUBLE_EQ(s.eps(t), 0.37);
}

TEST(Eps, RejectsNegativeTime) {
  EXPECT_THROW((void)EpsilonSchedule::power_law(1.0).eps(-1.0), DomainError);
  EXPECT_THROW((void)EpsilonSchedule::power_law(1.0).eps_dot(-1e-9), DomainError);
}

TEST(EpsDot, PowerLawFormula) {
  for (double alpha : {0.5, 0.75, 1.0, 2.0}) {
    const auto s = EpsilonSchedule::power_law(alpha, 2.0);
    for (double t : {0.0, 0.5, 10.0, 1e3}) {
      EXPECT_NEAR(s.eps_dot(t), -alpha * 2.0 * std::pow(1.0 + t, -alpha - 1.0), 1e-15);
    }
  }
}

TEST(EpsDot, ConstantIsZero) { EXPECT_EQ(EpsilonSchedule::constant(3.0).eps_dot(5.0), 0.0); }

TEST(EpsDot, HarmonicAtOrigin) { EXPECT_DOUBLE_EQ(EpsilonSchedule::power_law(1.0).eps_dot(0.0), -1.0); }

TEST(Schedule, RejectsBadParameters) {
  EXPECT_THROW(EpsilonSchedule::power_law(0.0), DomainError);
  EXPECT_THROW(EpsilonSchedule::exponential(-1.0), DomainError);
  EXPECT_THROW(EpsilonSchedule::constant(0.0), DomainError);
  EXPECT_THROW(EpsilonSchedule::custom({1.0, 2.0}, {1.0, 0.5}), DomainError);  // first knot not 0
  EXPECT_THROW(EpsilonSchedule::custom({0.0, 1.0}, {1.0, 2.0}), DomainError);  // increasing
  EXPECT_THROW(EpsilonSchedule::custom({0.0, 0.0}, {1.0, 0.5}), DomainError);
  EXPECT_THROW(EpsilonSchedule::rescaled(EpsilonSchedule::constant(1.0), 0.0), DomainError);
}

TEST(Schedule, RescaledDefinition) {
  const auto base = EpsilonSchedule::power_law(0.75);
  const auto r = EpsilonSchedule::rescaled(base, 2.0);
  for (double t : {0.0, 0.3, 7.0}) {
    EXPECT_NEAR(r.eps(t), 4.0 * base.eps(2.0 * t), 1e-15);
    EXPECT_NEAR(r.eps_dot(t), 8.0 * base.eps_dot(2.0 * t), 1e-15);
  }
}

TEST(Schedule, CustomInterpolatesKnots) {
  const std::vector<double> t{0.0, 1.0, 3.0, 4.0}, e{1.0, 0.6, 0.6, 0.2};
  const auto s = EpsilonSchedule::custom(t, e);
  for (std::size_t k = 0; k < t.size(); ++k) EXPECT_NEAR(s.eps(t[k]), e[k], 1e-15);
  // flat segment stays flat (monotone interpolation does not overshoot)
  for (double u = 1.0; u <= 3.0; u += 0.1) EXPECT_NEAR(s.eps(u), 0.6, 1e-15);
}

class ScheduleProperties : public ::testing::TestWithParam<int> {};

TEST_P(ScheduleProperties, PositiveNonincreasingAndDerivativeConsistent) {
  Gen g(1000 + GetParam());
  for (int inst = 0; inst < 20; ++inst) {
    const auto s = random_schedule(g);
    for (int k = 0; k < 100; ++k) {
      const double t = std::exp(g.uniform(std::log(1e-2), std::log(300.0))) - 1e-2;
      const double d = g.uniform(1e-3, 10.0);
      EXPECT_GT(s.eps(t), 0.0);
      EXPECT_LE(s.eps(t + d), s.eps(t) * (1.0 + 1e-14));
      EXPECT_LE(s.eps_dot(t), 1e-15);
      const double h = 1e-5 * (1.0 + t);
      if (t > h) {
        const double fd = (s.eps(t + h) - s.eps(t - h)) / (2.0 * h);
        // PCHIP is C1: differences across a knot carry an O(h) error
        const bool custom = std::holds_alternative<EpsilonSchedule::Custom>(s.kind());
        const double tol = 1e-6 * std::abs(s.eps_dot(t)) + (custom ? 1e-6 * s.eps(t) : 1e-13);
        EXPECT_NEAR(fd, s.eps_dot(t), tol);
      }
    }
  }
}

TEST_P(ScheduleProperties, VanishesAtLongHorizons) {
  Gen g(1100 + GetParam());
  for (int inst = 0; inst < 20; ++inst) {
    const auto s = random_schedule(g);
    if (std::holds_alternative<EpsilonSchedule::Constant>(s.kind())) continue;
    // a table whose end slope clamps to zero continues flat
    if (std::holds_alternative<EpsilonSchedule::Custom>(s.kind()) && s.custom_tail_exponent() == 0.0) {
      EXPECT_EQ(s.eps(1e300), s.eps(1e4));
      continue;
    }
    EXPECT_LE(s.eps(1e8), s.eps(1e4));
    EXPECT_LT(s.eps(1e300), 1e-2 * s.eps(0.0));
    EXPECT_LT(std::abs(s.eps_dot(1e8)), 1e-6);
  }
}

TEST_P(ScheduleProperties, CumulativeClosedFormMatchesQuadrature) {
  Gen g(1200 + GetParam());
  for (int inst = 0; inst < 20; ++inst) {
    const auto s = random_schedule(g);
    double prev = 0.0;
    for (double u : {0.0, 0.1, 1.0, 5.5, 40.0, 1e3, 1e6}) {
      const double closed = s.cumulative(u), quad = s.cumulative_quadrature(u);
      EXPECT_NEAR(closed, quad, 1e-11 * (1.0 + std::abs(quad)));
      EXPECT_GE(closed, prev);
      prev = closed;
    }
  }
}

TEST_P(ScheduleProperties, ClocksRoundTrip) {
  Gen g(1300 + GetParam());
  for (int inst = 0; inst < 20; ++inst) {
    const auto s = random_schedule(g);
    const auto maps = time_maps(s);
    const double total = s.cumulative(1e12);
    for (int k = 0; k < 50; ++k) {
      const double u = g.uniform(0.0, std::min(200.0, 0.9 * total));
      EXPECT_NEAR(maps.t_beta(maps.t_eps(u)), u, 1e-9 * (1.0 + u));
    }
    // t_eps strictly increasing where defined
    double prev = -1.0;
    for (double f = 0.05; f < 0.9; f += 0.05) {
      const double t = maps.t_eps(f * total);
      EXPECT_GT(t, prev);
      prev = t;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, ScheduleProperties, ::testing::Range(0, 3));

// ---- clocks and beta ------------------------------------------------------------

TEST(TimeMaps, HarmonicClosedForm) {
  const auto s = EpsilonSchedule::power_law(1.0);
  const auto maps = time_maps(s);
  const auto beta = beta_from_eps(s);
  for (double t : {0.0, 0.5, 1.0, 5.0, 20.0}) {
    EXPECT_NEAR(maps.t_eps(t), std::expm1(t), 1e-12 * std::exp(t));
    EXPECT_NEAR(s.cumulative_inverse_quadrature(t), std::expm1(t), 1e-6 * std::exp(t));
    EXPECT_NEAR(beta.beta(t), std::exp(t), 1e-12 * std::exp(t));
  }
}

TEST(TimeMaps, ConstantOneIsIdentity) {
  const auto s = EpsilonSchedule::constant(1.0);
  const auto maps = time_maps(s);
  for (double t : {0.0, 0.7, 123.0}) {
    EXPECT_DOUBLE_EQ(maps.t_eps(t), t);
    EXPECT_DOUBLE_EQ(beta_from_eps(s).beta(t), 1.0);
    EXPECT_DOUBLE_EQ(beta_from_eps(s).beta_dot(t), 0.0);
  }
}

TEST(TimeMaps, RoundTripOnHundred) {
  const auto maps = time_maps(EpsilonSchedule::power_law(1.0));
  const auto s = EpsilonSchedule::power_law(1.0);
  double worst = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double u = 0.1 * i;
    const double t = maps.t_eps(u);
    worst = std::max({worst, std::abs(maps.t_beta(t) - u), std::abs(s.cumulative_quadrature(t) - u)});
  }
  EXPECT_LE(worst, 1e-8);
}

TEST(TimeMaps, UndefinedBeyondFiniteIntegral) {
  const auto s = EpsilonSchedule::power_law(2.0);  // integral of eps is 1
  EXPECT_NEAR(time_maps(s).t_eps(0.5), 1.0, 1e-12);
  EXPECT_THROW((void)time_maps(s).t_eps(1.0), DomainError);
  EXPECT_THROW((void)EpsilonSchedule::exponential(1.0).cumulative_inverse(2.0), DomainError);
  const auto c = EpsilonSchedule::custom({0.0, 1.0}, {1.0, 0.5});  // tail exponent 2 > 1
  EXPECT_THROW((void)c.cumulative_inverse(100.0), DomainError);
}

TEST(TimeMaps, ProductIsOne) {
  Gen g(17);
  for (int inst = 0; inst < 10; ++inst) {
    const auto s = random_schedule(g);
    const auto maps = time_maps(s);
    const auto beta = beta_from_eps(s);
    for (double t : {0.0, 0.5, 3.0, 30.0}) {
      // t_eps loses accuracy where the cumulative integral flattens out
      const double cond = s.cumulative(t) * std::abs(s.eps_dot(t)) / (s.eps(t) * s.eps(t));
      EXPECT_NEAR(s.eps(t) * beta.beta(maps.t_beta(t)), 1.0, 1e-9 + 1e-14 * cond);
    }
  }
}

TEST(BetaSchedule, DerivativeMatchesDifferences) {
  const auto beta = beta_from_eps(EpsilonSchedule::power_law(0.75, 1.5));
  for (double s : {0.5, 2.0, 10.0}) {
    const double h = 1e-5;
    EXPECT_NEAR((beta.beta(s + h) - beta.beta(s - h)) / (2 * h), beta.beta_dot(s), 1e-6 * (1.0 + beta.beta_dot(s)));
    const auto [b, bd] = beta.beta_and_dot(s);
    EXPECT_DOUBLE_EQ(b, beta.beta(s));
    EXPECT_DOUBLE_EQ(bd, beta.beta_dot(s));
  }
}

// beta -> inf iff (H1); beta'/beta bounded iff (H3)
TEST(BetaSchedule, ConditionsInBetaForm) {
  ModelCase mc;
  for (double alpha : {0.5, 0.75, 1.0, 1.5, 2.0}) {
    const auto s = EpsilonSchedule::power_law(alpha);
    const auto beta = beta_from_eps(s);
    const bool h1 = check_h1(s).holds, h3 = check_h3(s).holds;
    const double total = s.cumulative(1e300);
    if (h1) {
      EXPECT_GT(beta.beta(300.0), 10.0 * beta.beta(10.0)) << alpha;
    } else {
      EXPECT_TRUE(std::isfinite(total));
      EXPECT_THROW((void)beta.beta(total * 1.01), DomainError);
    }
    double sup = 0.0, last = 0.0;
    for (double f : {0.1, 0.5, 0.9, 0.99, 0.999}) {
      const double sv = h1 ? 30.0 * f : f * total;
      const auto [b, bd] = beta.beta_and_dot(sv);
      last = bd / b;
      sup = std::max(sup, last);
    }
    if (h3) {
      EXPECT_LE(sup, check_h3(s).k_estimate + 1e-12) << alpha;
    } else {
      EXPECT_GT(last, 10.0 * alpha) << alpha;
    }
  }
}

// ---- condition checkers -----------------------------------------------------------

TEST(CheckH1, Examples) {
  EXPECT_TRUE(check_h1(EpsilonSchedule::power_law(0.75), 1e8).holds);
  EXPECT_FALSE(check_h1(EpsilonSchedule::power_law(2.0), 1e8).holds);
  EXPECT_FALSE(check_h1(EpsilonSchedule::exponential(1.0), 1e8).holds);
}

TEST(CheckH1, NumericRouteAgrees) {
  for (double alpha : {0.3, 0.5, 0.75, 1.0, 1.3, 2.0}) {
    const auto s = EpsilonSchedule::power_law(alpha);
    const auto a = check_h1(s), n = check_h1(s, numeric_only());
    EXPECT_TRUE(a.analytic);
    EXPECT_FALSE(n.analytic);
    EXPECT_EQ(a.holds, n.holds) << alpha;
    EXPECT_NEAR(n.tail_exponent, alpha, 1e-3);
  }
  EXPECT_FALSE(check_h1(EpsilonSchedule::exponential(0.5), numeric_only()).holds);
  EXPECT_TRUE(check_h1(EpsilonSchedule::constant(0.5), numeric_only()).holds);
}

TEST(CheckH2, ModelCaseExamples) {
  ModelCase mc;
  const auto r = check_h2(EpsilonSchedule::power_law(0.75), mc.phi, mc.rays);
  EXPECT_TRUE(r.holds);
  EXPECT_TRUE(r.analytic);
  // integral of 1/2 eps^2 |p|^2 = 1/2 * 4 * 1/(2 alpha - 1)
  EXPECT_NEAR(r.per_ray[0].integral.value(), 4.0, 1e-12);
  EXPECT_FALSE(check_h2(EpsilonSchedule::power_law(0.5), mc.phi, mc.rays).holds);
}

TEST(CheckH2, ZeroRaysHoldTrivially) {
  ModelCase mc;
  const auto rays = cone_rays(mc.phi, Potential::zero(2), v2(0.0, 1.0));
  const auto r = check_h2(EpsilonSchedule::power_law(0.5), mc.phi, rays);
  EXPECT_TRUE(r.holds);
  EXPECT_TRUE(r.trivial);
}

TEST(CheckH2, NumericIntegralMatchesModelCase) {
  ModelCase mc;
  for (double alpha : {0.75, 1.0, 1.5}) {
    const auto r = check_h2(EpsilonSchedule::power_law(alpha), mc.phi, mc.rays, numeric_only());
    ASSERT_TRUE(r.holds) << alpha;
    EXPECT_FALSE(r.analytic);
    for (const auto& est : r.per_ray) {
      const double exact = 0.5 * est.ray.direction.squaredNorm() / (2.0 * alpha - 1.0);
      EXPECT_NEAR(est.integral.value(), exact, 1e-3 * exact) << alpha;
    }
  }
  EXPECT_FALSE(check_h2(EpsilonSchedule::power_law(0.5), mc.phi, mc.rays, numeric_only()).holds);
}

TEST(CheckH2, QuadraticFormEqualsModelCase) {
  // 1/2 x1^2 is 1/2 dist^2 to the x2-axis, written as a quadratic form
  const auto phi = Potential::quadratic(hiermin::testing::diag({1.0, 0.0}), Vector::Zero(2));
  ModelCase mc;
  const auto rays = cone_rays(phi, mc.psi, v2(0.0, 3.0));
  const auto q = check_h2(EpsilonSchedule::power_law(0.75), phi, rays);
  const auto m = check_h2(EpsilonSchedule::power_law(0.75), mc.phi, mc.rays);
  EXPECT_TRUE(q.holds);
  EXPECT_NEAR(q.per_ray[1].integral.value(), m.per_ray[1].integral.value(), 1e-3 * m.per_ray[1].integral.value());
}

TEST(CheckH2, CouplingNeedsSearchBox) {
  const auto phi = Potential::coupling(Matrix::Identity(1, 1), Matrix::Identity(1, 1), Block{0, 1}, Block{1, 1}, 2);
  const auto psi = Potential::tikhonov(v2(1.0, 0.0));
  const auto rays = cone_rays(phi, psi, v2(0.5, 0.5));
  ConditionOptions o;
  o.horizon = 1e4;
  EXPECT_THROW(check_h2(EpsilonSchedule::power_law(0.75), phi, rays, o), DomainError);
  o.conjugate_box = SearchBox{Vector::Constant(2, -3.0), Vector::Constant(2, 3.0)};
  const auto r = check_h2(EpsilonSchedule::power_law(0.75), phi, rays, o);
  EXPECT_TRUE(r.holds);
  // the normal cone of the diagonal is spanned by (1,-1); conjugate gap 1/4 |y|^2 along it
  const double exact_ray0 = 0.25 * rays[0].direction.squaredNorm() * 2.0;
  EXPECT_NEAR(r.per_ray[0].integral.value(), exact_ray0, 2e-2 * exact_ray0);
}

TEST(CheckH3, Examples) {
  const auto h = check_h3(EpsilonSchedule::power_law(1.0), 1e8);
  EXPECT_TRUE(h.holds);
  EXPECT_NEAR(h.k_estimate, 1.0, 1e-12);
  const auto q = check_h3(EpsilonSchedule::power_law(0.75), 1e8);
  EXPECT_TRUE(q.holds);
  EXPECT_NEAR(q.k_estimate, 0.75, 1e-12);
  EXPECT_FALSE(check_h3(EpsilonSchedule::power_law(1.5), 1e8).holds);
}

TEST(CheckH3, NumericRouteAgrees) {
  for (double alpha : {0.5, 0.75, 1.0, 1.5, 2.0}) {
    for (double scale : {0.5, 1.0, 3.0}) {
      const auto s = EpsilonSchedule::power_law(alpha, scale);
      const auto a = check_h3(s), n = check_h3(s, numeric_only());
      EXPECT_EQ(a.holds, n.holds) << alpha << ' ' << scale;
      if (a.holds) {
        EXPECT_NEAR(n.k_estimate, a.k_estimate, 1e-9);
      }
    }
  }
  EXPECT_FALSE(check_h3(EpsilonSchedule::exponential(1.0), numeric_only()).holds);
  EXPECT_TRUE(check_h3(EpsilonSchedule::constant(2.0), numeric_only()).holds);
}

TEST(CheckH3, EstimateDominatesSampledRatio) {
  Gen g(23);
  for (int inst = 0; inst < 20; ++inst) {
    const auto s = random_schedule(g);
    for (bool analytic : {true, false}) {
      ConditionOptions o;
      o.analytic = analytic;
      o.horizon = 1e4;
      const auto r = check_h3(s, o);
      if (!r.holds) continue;
      for (int k = 0; k < 200; ++k) {
        const double t = r.onset_time + g.uniform(0.0, o.horizon);
        EXPECT_LE(-s.eps_dot(t) / (s.eps(t) * s.eps(t)), r.k_estimate * (1.0 + 1e-3) + 1e-12);
      }
    }
  }
}

// verdict table for 1/2 dist^2, both routes
TEST(Conditions, PowerLawClassification) {
  ModelCase mc;
  for (bool analytic : {true, false}) {
    ConditionOptions o;
    o.analytic = analytic;
    auto verdict = [&](double alpha) { return check_conditions(EpsilonSchedule::power_law(alpha), mc.phi, mc.rays, o); };
    const auto a05 = verdict(0.5), a075 = verdict(0.75), a1 = verdict(1.0), a15 = verdict(1.5), a2 = verdict(2.0);
    EXPECT_TRUE(a05.h1.holds);
    EXPECT_FALSE(a05.h2.holds);
    EXPECT_TRUE(a075.all_hold());
    EXPECT_TRUE(a1.all_hold());
    EXPECT_TRUE(!a15.h1.holds || !a15.h3.holds);
    EXPECT_FALSE(a2.h1.holds);
  }
}

TEST(Conditions, AdmissibleFamily) {
  ModelCase mc;
  for (double alpha = 0.52; alpha <= 1.0; alpha += 0.06) {
    for (double scale : {0.3, 1.0, 4.0}) {
      const auto s = EpsilonSchedule::power_law(alpha, scale);
      EXPECT_TRUE(check_conditions(s, mc.phi, mc.rays).all_hold()) << alpha;
    }
  }
}

TEST(Conditions, RescalingKeepsVerdicts) {
  ModelCase mc;
  for (double alpha : {0.5, 0.75, 1.0, 1.5}) {
    const auto s = EpsilonSchedule::power_law(alpha);
    const auto r = EpsilonSchedule::rescaled(s, 2.0);
    const auto phi2 = mc.phi.scaled(4.0);
    const auto rays2 = cone_rays(phi2, mc.psi, v2(0.0, 3.0));
    for (bool analytic : {true, false}) {
      ConditionOptions o;
      o.analytic = analytic;
      const auto a = check_conditions(s, mc.phi, mc.rays, o), b = check_conditions(r, phi2, rays2, o);
      EXPECT_EQ(a.h1.holds, b.h1.holds) << alpha;
      EXPECT_EQ(a.h2.holds, b.h2.holds) << alpha;
      EXPECT_EQ(a.h3.holds, b.h3.holds) << alpha;
    }
  }
}

TEST(Conditions, CustomScheduleReportsTableEdge) {
  ModelCase mc;
  std::vector<double> t, e;
  for (int k = 0; k <= 40; ++k) {
    t.push_back(0.5 * k);
    e.push_back(std::pow(1.0 + 0.5 * k, -0.75));
  }
  const auto s = EpsilonSchedule::custom(t, e);
  EXPECT_NEAR(s.custom_tail_exponent(), 0.75, 5e-3);
  const auto r = check_conditions(s, mc.phi, mc.rays);
  EXPECT_TRUE(r.all_hold());
  EXPECT_FALSE(r.h1.analytic);
  ASSERT_EQ(r.notes.size(), 1u);
  EXPECT_NE(r.notes[0].find("custom table ends"), std::string::npos);
}
