#include "support.hpp"

#include <gtest/gtest.h>

using namespace hiermin;
using hiermin::testing::Gen;
using hiermin::testing::oscillators_phi;
using hiermin::testing::unit_coupling;
using hiermin::testing::v1;
using hiermin::testing::v2;

namespace {

Matrix axis_e2() {
  Matrix b(2, 1);
  b << 0.0, 1.0;
  return b;
}

// z in C and <grad Psi(z), s - z> >= 0 for s sampled from C by projection
double worst_vi(const ArgminSet& c, const Potential& psi, const Vector& z, Gen& g, int samples = 2000) {
  const Vector grad = psi.gradient(z);
  double worst = 0.0;
  for (int k = 0; k < samples; ++k) {
    const Vector s = c.project(g.vec(z.size(), -6.0, 6.0));
    worst = std::min(worst, grad.dot(s - z));
  }
  return -worst;
}

// brute force over a box-shaped C on a uniform grid
std::pair<Vector, double> grid_min_2d(const Potential& psi, const Vector& lo, const Vector& hi, double h) {
  Vector best = lo;
  double fbest = psi.value(lo);
  for (double a = lo[0]; a <= hi[0] + 1e-12; a += h) {
    for (double b = lo[1]; b <= hi[1] + 1e-12; b += h) {
      const double f = psi.value(v2(a, b));
      if (f < fbest) {
        fbest = f;
        best = v2(a, b);
      }
    }
  }
  return {best, fbest};
}

}  // namespace

// ---- worked instances ------------------------------------------------------------------

TEST(Oracle, TikhonovOnAxis) {
  const Vector a = v2(2.0, 3.0);
  const auto psi = Potential::tikhonov(a);
  for (const auto& phi : {Potential::sq_dist(ArgminSet::affine(Vector::Zero(2), axis_e2())),
                          Potential::quadratic(hiermin::testing::diag({1.0, 0.0}), Vector::Zero(2))}) {
    const auto sol = solve_hierarchical(phi, psi);
    // projection of a onto {x1 = 0}
    const Vector want = v2(0.0, a[1]);
    EXPECT_LE((sol.z_star - want).norm(), 1e-12);
    EXPECT_NEAR(sol.psi_min, 2.0, 1e-12);
    EXPECT_EQ(sol.method, OracleMethod::ClosedFormProjection);
    EXPECT_TRUE(sol.unique);
    EXPECT_LE(sol.certificate.feasibility, 1e-8);
    EXPECT_LE(sol.certificate.stationarity, 1e-8);
    EXPECT_LE(sol.certificate.normal_cone_residual, 1e-8);
  }
}

TEST(Oracle, CoupledOscillators) {
  const auto phi = oscillators_phi();
  const auto psi = unit_coupling();
  const auto sol = solve_hierarchical(phi, psi);
  EXPECT_LE((sol.z_star - v2(1.0, 2.0)).norm(), 1e-8);
  EXPECT_NEAR(sol.psi_min, 0.5, 1e-8);
  EXPECT_LE(std::max({sol.certificate.feasibility, sol.certificate.stationarity, sol.certificate.normal_cone_residual}),
            1e-8);

  const auto [best, fbest] = grid_min_2d(psi, v2(0.0, 2.0), v2(1.0, 3.0), 1e-3);
  EXPECT_LE((sol.z_star - best).norm(), 2e-3);
  EXPECT_NEAR(sol.psi_min, fbest, 1e-6);

  OracleOptions o;
  o.method = OracleMethod::GridBruteForce;
  const auto grid = solve_hierarchical(phi, psi, o);
  EXPECT_EQ(grid.method, OracleMethod::GridBruteForce);
  EXPECT_LE((grid.z_star - sol.z_star).norm(), 2e-3);
}

TEST(Oracle, ZeroPsiReturnsProjectionOfReference) {
  const ArgminSet c = ArgminSet::box(v2(-1.0, 0.0), v2(1.0, 2.0));
  OracleOptions o;
  o.reference = v2(3.0, -4.0);
  const auto sol = solve_hierarchical(Potential::sq_dist(c), Potential::zero(2), o);
  EXPECT_LE((sol.z_star - v2(1.0, 0.0)).norm(), 1e-10);
  EXPECT_EQ(sol.psi_min, 0.0);
  EXPECT_FALSE(sol.unique);

  const auto line = solve_hierarchical(Potential::sq_dist(ArgminSet::affine(Vector::Zero(2), axis_e2())),
                                       Potential::zero(2), o);
  EXPECT_LE((line.z_star - v2(0.0, -4.0)).norm(), 1e-10);
  EXPECT_FALSE(line.unique);

  // a flat objective keeps the brute-force search at the reference
  o.method = OracleMethod::GridBruteForce;
  const auto grid = solve_hierarchical(Potential::sq_dist(ArgminSet::affine(Vector::Zero(2), axis_e2())),
                                       Potential::zero(2), o);
  EXPECT_LE((grid.z_star - v2(0.0, -4.0)).norm(), 1e-10);
}

TEST(Oracle, FlatPsiDirectionIsNotUnique) {
  // Psi depends on x1 only and vanishes on C, so every point of C is optimal
  const auto psi = Potential::quadratic(hiermin::testing::diag({1.0, 0.0}), Vector::Zero(2));
  const auto phi = Potential::sq_dist(ArgminSet::affine(Vector::Zero(2), axis_e2()));
  OracleOptions o;
  o.reference = v2(5.0, 7.0);
  const auto sol = solve_hierarchical(phi, psi, o);
  EXPECT_FALSE(sol.unique);
  EXPECT_LE((sol.z_star - v2(0.0, 7.0)).norm(), 1e-10);
}

TEST(Oracle, BallWithExteriorTarget) {
  const ArgminSet c = ArgminSet::ball(v2(0.0, 0.0), 1.0);
  const auto sol = solve_hierarchical(Potential::sq_dist(c), Potential::tikhonov(v2(3.0, 4.0)));
  EXPECT_EQ(sol.method, OracleMethod::ProjectedGradient);
  EXPECT_LE((sol.z_star - v2(0.6, 0.8)).norm(), 1e-8);
  EXPECT_NEAR(sol.psi_min, 0.5 * 16.0, 1e-8);
}

TEST(Oracle, Errors) {
  EXPECT_THROW(solve_hierarchical(Potential::zero(2), Potential::zero(3)), DimensionError);
  OracleOptions o;
  o.method = OracleMethod::KktLinearSolve;
  EXPECT_THROW(solve_hierarchical(oscillators_phi(), unit_coupling(), o), DomainError);
  o.method = OracleMethod::GridBruteForce;
  EXPECT_THROW(solve_hierarchical(Potential::zero(4), Potential::zero(4), o), DomainError);
  // Psi without a quadratic model in dimension 4
  const auto psi4 = Potential::sq_dist(ArgminSet::ball(Vector::Zero(4), 1.0));
  EXPECT_THROW(solve_hierarchical(Potential::sq_dist(ArgminSet::box(Vector::Zero(4), Vector::Ones(4))), psi4),
               DomainError);
  o.method.reset();
  o.reference = Vector::Zero(3);
  EXPECT_THROW(solve_hierarchical(Potential::zero(2), Potential::zero(2), o), DimensionError);
}

TEST(Oracle, PowerIteration) {
  EXPECT_NEAR(detail::power_iteration(hiermin::testing::diag({1.0, 5.0, 2.0})), 5.0, 1e-9);
  Gen g(3);
  const Matrix a = g.psd(4, 4);
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  EXPECT_NEAR(detail::power_iteration(a), es.eigenvalues().maxCoeff(), 1e-8);
}

// ---- properties --------------------------------------------------------------------------

class OracleProperties : public ::testing::TestWithParam<int> {};

TEST_P(OracleProperties, CertificateAndVariationalInequality) {
  Gen g(900 + GetParam());
  for (int inst = 0; inst < 15; ++inst) {
    const Eigen::Index n = g.integer(2, 5);
    const ArgminSet c = g.set(n);
    const auto psi = g.coin() ? Potential::tikhonov(g.vec(n, -4, 4), g.uniform(0.2, 2.0))
                              : Potential::quadratic(g.psd(n, n), g.vec(n));
    const auto sol = solve_hierarchical(Potential::sq_dist(c), psi);
    EXPECT_LE(sol.certificate.feasibility, 1e-8);
    EXPECT_LE(sol.certificate.stationarity, 1e-8);
    EXPECT_LE(sol.certificate.normal_cone_residual, 1e-8);
    EXPECT_LE(c.distance(sol.z_star), 1e-8);
    EXPECT_LE(worst_vi(c, psi, sol.z_star, g), 1e-7);
    EXPECT_NEAR(sol.psi_min, psi.value(sol.z_star), 1e-12 * (1.0 + std::abs(sol.psi_min)));
  }
}

TEST_P(OracleProperties, AgreesWithGridInLowDimension) {
  Gen g(950 + GetParam());
  for (int inst = 0; inst < 6; ++inst) {
    const Eigen::Index n = g.integer(1, 3);
    const ArgminSet c = n == 1 ? g.box(1) : g.set(n);
    const auto psi = Potential::tikhonov(g.vec(n, -3, 3), g.uniform(0.3, 2.0));
    const auto sol = solve_hierarchical(Potential::sq_dist(c), psi);
    OracleOptions o;
    o.method = OracleMethod::GridBruteForce;
    const auto grid = solve_hierarchical(Potential::sq_dist(c), psi, o);
    EXPECT_LE((sol.z_star - grid.z_star).norm(), 2e-3) << n;
    EXPECT_GE(grid.psi_min, sol.psi_min - 1e-9);
  }
}

TEST_P(OracleProperties, PsiMinIsAMinimumOverSamples) {
  Gen g(990 + GetParam());
  for (int inst = 0; inst < 10; ++inst) {
    const Eigen::Index n = g.integer(2, 4);
    const ArgminSet c = g.set(n);
    const auto psi = Potential::quadratic(g.psd(n, g.integer(1, int(n))), Vector::Zero(n));
    const auto sol = solve_hierarchical(Potential::sq_dist(c), psi);
    for (int k = 0; k < 500; ++k) {
      EXPECT_GE(psi.value(c.project(g.vec(n, -6, 6))), sol.psi_min - 1e-8);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, OracleProperties, ::testing::Range(0, 3));

// ---- Neumann reference ----------------------------------------------------------------

TEST(NeumannLaplacian, SmallCases) {
  Matrix want(2, 2);
  want << 1, -1, -1, 1;
  EXPECT_EQ(neumann_laplacian(2), want);
  const Matrix l = neumann_laplacian(7);
  EXPECT_LE((l * Vector::Ones(7)).norm(), 0.0);
  EXPECT_EQ(l(3, 3), 2.0);
  EXPECT_EQ(l(0, 0), 1.0);
  EXPECT_THROW(neumann_laplacian(1), DomainError);
}

TEST(NeumannReference, SymmetricDataGivesEqualProfiles) {
  const Eigen::Index n = 32;
  const Vector h = wave_forcing("sin", n, 1.0);
  const auto r = neumann_reference(n, 1.5, 1.5, h, h);
  EXPECT_LE((r.u1_bar - r.u2_bar).norm(), 1e-12);
  EXPECT_LE(r.coupling_min, 1e-24);
  EXPECT_NEAR(r.u1_bar.mean(), 0.0, 1e-14);
  EXPECT_NEAR(r.u2_bar.mean(), 0.0, 1e-14);
  EXPECT_FALSE(r.limit_mean.has_value());
}

TEST(NeumannReference, SolvesTheDiscreteProblem) {
  const Eigen::Index n = 64;
  const Vector h1 = wave_forcing("sin", n, 1e-3), h2 = wave_forcing("cos", n, 1e-3);
  const auto r = neumann_reference(n, 1.0, 2.0, h1, h2);
  const Matrix L = neumann_laplacian(n);
  EXPECT_LE((L * r.u1_bar - h1).norm(), 1e-12);
  EXPECT_LE((2.0 * L * r.u2_bar - h2).norm(), 1e-12);
  EXPECT_NEAR(r.u1_bar.mean(), 0.0, 1e-15);
  EXPECT_NEAR(r.u2_bar.mean(), 0.0, 1e-15);
  EXPECT_NEAR(r.coupling_min, 0.5 * (r.u1_bar - r.u2_bar).squaredNorm(), 1e-18);
}

TEST(NeumannReference, LimitMeanFromCauchyData) {
  const Vector h = Vector::Zero(4);
  MeanData m{1.0, 3.0, 0.5, -1.5, 2.0};
  // s = m1 + m2 solves s'' + 2 s' = 0 from s = 4, s' = -1
  const auto r = neumann_reference(4, 1.0, 1.0, h, h, m);
  ASSERT_TRUE(r.limit_mean.has_value());
  EXPECT_DOUBLE_EQ(*r.limit_mean, 0.5 * (4.0 - 0.5));
}

TEST(NeumannReference, Errors) {
  Vector h = Vector::Zero(8);
  h[0] = 1.0;  // nonzero sum
  EXPECT_THROW(neumann_reference(8, 1.0, 1.0, h, Vector::Zero(8)), DomainError);
  EXPECT_THROW(neumann_reference(8, 0.0, 1.0, Vector::Zero(8), Vector::Zero(8)), DomainError);
  EXPECT_THROW(neumann_reference(8, 1.0, 1.0, Vector::Zero(7), Vector::Zero(8)), DimensionError);
}

TEST(NeumannReference, WaveArgminHasFlatConstantDirection) {
  const Eigen::Index n = 16;
  const Vector h1 = wave_forcing("sin", n, 1.0), h2 = wave_forcing("cos", n, 1.0);
  const auto spec = discretize_waves(n, 1.0, 2.0, h1, h2, 1.0, EpsilonSchedule::power_law(0.75));
  const auto r = neumann_reference(n, 1.0, 2.0, h1, h2);
  Vector u(2 * n);
  u << r.u1_bar, r.u2_bar;
  EXPECT_LE(spec.phi.gradient(u).norm(), 1e-10);
  // shifting both components by constants stays in argmin Phi
  Vector shifted = u;
  shifted.head(n).array() += 0.7;
  shifted.tail(n).array() -= 1.3;
  EXPECT_LE(spec.phi.gradient(shifted).norm(), 1e-10);
  EXPECT_NEAR(spec.phi.value(shifted), spec.phi.value(u), 1e-10);
  // and the coupling picks equal shifts
  const auto sol = solve_hierarchical(spec.phi, spec.psi);
  EXPECT_NEAR(sol.z_star.head(n).mean(), sol.z_star.tail(n).mean(), 1e-8);
  EXPECT_NEAR(sol.psi_min, r.coupling_min, 1e-8);
}
