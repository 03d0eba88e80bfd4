#pragma once

#include "hiermin/hiermin.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace hiermin::testing {

/// Seeded random instances for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
  int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng_); }
  bool coin() { return integer(0, 1) == 1; }

  Vector vec(Eigen::Index n, double a = -3.0, double b = 3.0) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(a, b);
    return v;
  }

  Vector unit(Eigen::Index n) {
    std::normal_distribution<double> g;
    Vector v(n);
    do {
      for (Eigen::Index i = 0; i < n; ++i) v[i] = g(rng_);
    } while (v.norm() < 1e-3);
    return v.normalized();
  }

  /// n x k matrix with orthonormal columns.
  Matrix orthonormal(Eigen::Index n, Eigen::Index k) {
    Matrix m(n, n);
    std::normal_distribution<double> g;
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng_);
    Eigen::HouseholderQR<Matrix> qr(m);
    return Matrix(qr.householderQ()).leftCols(k);
  }

  /// Symmetric PSD matrix of the given rank with eigenvalues in [0.5, 3].
  Matrix psd(Eigen::Index n, Eigen::Index rank) {
    const Matrix q = orthonormal(n, n);
    Vector lam = Vector::Zero(n);
    for (Eigen::Index i = 0; i < rank; ++i) lam[i] = uniform(0.5, 3.0);
    Matrix a = q * lam.asDiagonal() * q.transpose();
    return 0.5 * (a + a.transpose());
  }

  ArgminSet box(Eigen::Index n) {
    Vector lo = vec(n, -2.0, 1.0);
    Vector hi = lo + vec(n, 0.2, 2.0);
    return ArgminSet::box(lo, hi);
  }

  ArgminSet ball(Eigen::Index n) { return ArgminSet::ball(vec(n, -1.0, 1.0), uniform(0.3, 2.0)); }

  ArgminSet affine(Eigen::Index n) {
    const Eigen::Index k = integer(0, int(n) - 1);
    return ArgminSet::affine(vec(n, -1.0, 1.0), orthonormal(n, k));
  }

  /// Box, ball, affine, or a product of two of them.
  ArgminSet set(Eigen::Index n) {
    const int kind = integer(0, n >= 2 ? 3 : 2);
    if (kind == 0) return box(n);
    if (kind == 1) return ball(n);
    if (kind == 2) return affine(n);
    const Eigen::Index n1 = integer(1, int(n) - 1);
    return ArgminSet::product_of({simple(n1), simple(n - n1)});
  }

  ArgminSet simple(Eigen::Index n) {
    const int kind = integer(0, 2);
    if (kind == 0) return box(n);
    if (kind == 1) return ball(n);
    return affine(n);
  }

  /// One of the potential kinds in dimension n (n >= 2 for the coupling).
  Potential potential(Eigen::Index n, int kind) {
    switch (kind) {
      case 0: {
        const Eigen::Index rank = integer(1, int(n));
        const Matrix a = psd(n, rank);
        // b in range(A) keeps the form bounded below
        return Potential::quadratic(a, a * vec(n));
      }
      case 1: return Potential::sq_dist(set(n), uniform(0.2, 2.0));
      case 2: return Potential::tikhonov(vec(n), uniform(0.2, 2.0));
      case 3: {
        const Eigen::Index n1 = integer(1, int(n) - 1);
        return Potential::separable_of({Potential::sq_dist(simple(n1), 0.5), Potential::tikhonov(vec(n - n1), 0.5)});
      }
      default: {
        const Eigen::Index n1 = integer(1, int(n) - 1);
        const Eigen::Index m = integer(1, 3);
        Matrix l1(m, n1), l2(m, n - n1);
        for (Eigen::Index i = 0; i < l1.size(); ++i) l1.data()[i] = uniform(-1.0, 1.0);
        for (Eigen::Index i = 0; i < l2.size(); ++i) l2.data()[i] = uniform(-1.0, 1.0);
        return Potential::coupling(l1, l2, Block{0, n1}, Block{n1, n - n1}, n);
      }
    }
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline constexpr int kPotentialKinds = 5;

inline ProblemSpec spec_of(Potential phi, Potential psi, EpsilonSchedule sched, Vector x0, Vector v0, double gamma,
                           double horizon, StepControl step = {}) {
  return ProblemSpec{std::move(phi), std::move(psi), gamma, 1.0, std::move(sched), std::move(x0), std::move(v0),
                     horizon, std::move(step)};
}

inline Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

inline Vector v1(double a) { return Vector::Constant(1, a); }

inline Matrix diag(std::initializer_list<double> d) {
  Vector v(Eigen::Index(d.size()));
  Eigen::Index i = 0;
  for (double x : d) v[i++] = x;
  return v.asDiagonal();
}

/// 1/2 dist^2 to [0,1] x [2,3], one coordinate per block.
inline Potential oscillators_phi() {
  return Potential::separable_of({Potential::sq_dist(ArgminSet::box(v1(0.0), v1(1.0))),
                                  Potential::sq_dist(ArgminSet::box(v1(2.0), v1(3.0)))});
}

/// 1/2 (x1 - x2)^2 on R^2.
inline Potential unit_coupling() {
  return Potential::coupling(Matrix::Identity(1, 1), Matrix::Identity(1, 1), Block{0, 1}, Block{1, 1}, 2);
}

inline StepControl rk4(double h, double out_dt = 0.0, std::size_t stored = 1000000) {
  StepControl s;
  s.method = Method::RK4;
  s.h0 = h;
  s.output_dt = out_dt > 0.0 ? out_dt : h;
  s.max_stored = stored;
  return s;
}

}  // namespace hiermin::testing
