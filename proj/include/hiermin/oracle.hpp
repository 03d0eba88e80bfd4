#pragma once

#include "hiermin/core.hpp"
#include "hiermin/potentials.hpp"
#include "hiermin/sets.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace hiermin {

enum class OracleMethod { ClosedFormProjection, KktLinearSolve, ProjectedGradient, GridBruteForce };

inline const char* to_string(OracleMethod m) {
  switch (m) {
    case OracleMethod::ClosedFormProjection: return "closed-form-projection";
    case OracleMethod::KktLinearSolve: return "kkt-linear-solve";
    case OracleMethod::ProjectedGradient: return "projected-gradient";
    case OracleMethod::GridBruteForce: return "grid-brute-force";
  }
  return "?";
}

struct Certificate {
  double feasibility = 0.0;          // dist(z, C)
  double stationarity = 0.0;         // |z - P_C(z - grad Psi(z))|
  double normal_cone_residual = 0.0; // sampled max <-grad Psi(z), s - z>
};

/// A point of argmin{Psi over argmin Phi} with its optimality certificate.
struct HierarchicalSolution {
  Vector z_star;
  double psi_min = 0.0;
  OracleMethod method = OracleMethod::KktLinearSolve;
  Certificate certificate;
  bool unique = true;
  std::size_t iterations = 0;
};

struct OracleOptions {
  /// Reference point: among several minimizers the one nearest to it (or,
  /// for iterative methods, the one reached from its projection) is returned.
  std::optional<Vector> reference;
  /// Force a method instead of dispatching on the structure of C and Psi.
  std::optional<OracleMethod> method;
  double gradient_mapping_tol = 1e-10;
  std::size_t max_iterations = 1000000;
  double grid_resolution = 1e-3;
  std::size_t certificate_samples = 10000;
  std::uint64_t seed = 12345;
};

namespace detail {

/// Largest eigenvalue of a PSD matrix by power iteration.
inline double power_iteration(const Matrix& H, double tol = 1e-10, int max_iter = 100000) {
  const Eigen::Index n = H.rows();
  if (n == 0 || H.isZero(0.0)) return 0.0;
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = 1.0 + 0.1 * double(i) / double(n);
  v.normalize();
  double lam = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector w = H * v;
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    const double next = v.dot(w);
    v = w / nw;
    if (std::abs(next - lam) <= tol * std::max(1.0, std::abs(next))) return next;
    lam = next;
  }
  return lam;
}

inline Certificate certify(const ArgminSet& c, const Potential& psi, const Vector& z, const OracleOptions& o) {
  Certificate cert;
  cert.feasibility = c.distance(z);
  const Vector g = psi.gradient(z);
  cert.stationarity = (z - c.project(z - g)).norm();
  const Vector zc = c.project(z);
  cert.normal_cone_residual = std::max(0.0, normal_cone_residual(c, zc, -psi.gradient(zc), o.certificate_samples, o.seed));
  return cert;
}

inline HierarchicalSolution solve_affine(const ArgminSet& c, const Potential& psi, const Matrix& H, const Vector& g,
                                         const Vector& ref) {
  const auto aff = c.as_affine();
  const Matrix& B = aff.basis;
  const Vector& p = aff.point;
  HierarchicalSolution sol;
  if (B.cols() == 0) {
    sol.z_star = p;
  } else {
    // minimize Psi(p + B w): (B'HB) w = -B'(Hp + g)
    const Matrix M = B.transpose() * H * B;
    const Vector r = B.transpose() * (H * p + g);
    Eigen::SelfAdjointEigenSolver<Matrix> es(M);
    const Vector& lam = es.eigenvalues();
    const double thr = 1e-10 * std::max(1.0, lam.cwiseAbs().maxCoeff());
    Vector w = Vector::Zero(B.cols());
    std::vector<Eigen::Index> null_idx;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
      const Vector u = es.eigenvectors().col(i);
      if (std::abs(lam[i]) <= thr) {
        if (std::abs(u.dot(r)) > 1e-9 * std::max(1.0, r.norm())) {
          throw DomainError("oracle: Psi is unbounded below on argmin Phi");
        }
        null_idx.push_back(i);
      } else {
        w -= (u.dot(r) / lam[i]) * u;
      }
    }
    // among the minimizers w + N c, the one nearest to the reference
    const Vector target = B.transpose() * (ref - p);
    for (Eigen::Index i : null_idx) {
      const Vector u = es.eigenvectors().col(i);
      w += u.dot(target - w) * u;
    }
    sol.unique = null_idx.empty();
    sol.z_star = p + B * w;
  }
  const bool isotropic = std::holds_alternative<Potential::Tikhonov>(psi.kind());
  sol.method = isotropic ? OracleMethod::ClosedFormProjection : OracleMethod::KktLinearSolve;
  if (isotropic) {
    const auto& t = std::get<Potential::Tikhonov>(psi.kind());
    sol.z_star = c.project(t.center);
  }
  return sol;
}

inline HierarchicalSolution solve_projected_gradient(const ArgminSet& c, const Potential& psi, const Matrix& H,
                                                     const Vector& ref, const OracleOptions& o) {
  HierarchicalSolution sol;
  sol.method = OracleMethod::ProjectedGradient;
  const double L = power_iteration(H);
  Vector z = c.project(ref);
  if (L == 0.0) {
    sol.z_star = z;
    sol.unique = false;
    if (const auto* a = std::get_if<ArgminSet::Affine>(&c.kind())) sol.unique = a->basis.cols() == 0;
    return sol;
  }
  std::size_t it = 0;
  for (;; ++it) {
    if (it >= o.max_iterations) throw NumericalAbort("oracle: projected gradient did not converge");
    const Vector next = c.project(z - psi.gradient(z) / L);
    const double gm = L * (z - next).norm();
    z = next;
    if (gm <= o.gradient_mapping_tol) break;
  }
  sol.z_star = z;
  sol.iterations = it + 1;
  // non-uniqueness: a feasible move along null(H) that keeps the objective
  Eigen::SelfAdjointEigenSolver<Matrix> es(H);
  const double thr = 1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  const Vector grad = psi.gradient(z);
  const double tau = 1e-6 * (1.0 + z.norm());
  sol.unique = true;
  for (Eigen::Index i = 0; i < H.rows() && sol.unique; ++i) {
    if (std::abs(es.eigenvalues()[i]) > thr) continue;
    const Vector d = es.eigenvectors().col(i);
    if (std::abs(grad.dot(d)) > 1e-8 * std::max(1.0, grad.norm())) continue;
    if (c.contains(z + tau * d, 1e-12) || c.contains(z - tau * d, 1e-12)) sol.unique = false;
  }
  return sol;
}

// Coordinates of the brute-force search: each factor of C is either bounded
// (search its bounding box, map through the projection) or affine (search
// coefficients in an expanding window).
struct Param {
  struct Factor {
    ArgminSet set;
    Block block;
    bool affine = false;
    Vector point;
    Matrix basis;
    Eigen::Index offset = 0;  // into u
    Eigen::Index size = 0;
  };
  std::vector<Factor> factors;
  Eigen::Index dim_u = 0;
  Eigen::Index dim_x = 0;

  static void flatten(const ArgminSet& s, Eigen::Index off, std::vector<std::pair<ArgminSet, Block>>& out) {
    if (const auto* p = std::get_if<ArgminSet::Product>(&s.kind())) {
      for (const auto& part : p->parts) flatten(*part.set, off + part.block.offset, out);
    } else {
      out.emplace_back(s, Block{off, s.dim()});
    }
  }

  explicit Param(const ArgminSet& c) : dim_x(c.dim()) {
    std::vector<std::pair<ArgminSet, Block>> flat;
    flatten(c, 0, flat);
    for (auto& [s, b] : flat) {
      Factor f{s, b, false, {}, {}, 0, 0};
      if (const auto* a = std::get_if<ArgminSet::Affine>(&s.kind())) {
        f.affine = true;
        f.point = a->point;
        f.basis = a->basis;
        f.size = a->basis.cols();
      } else {
        f.size = b.size;
      }
      f.offset = dim_u;
      dim_u += f.size;
      factors.push_back(std::move(f));
    }
  }

  [[nodiscard]] Vector map(const Vector& u) const {
    Vector x(dim_x);
    for (const auto& f : factors) {
      if (f.affine) {
        x.segment(f.block.offset, f.block.size) = f.point + f.basis * u.segment(f.offset, f.size);
      } else {
        x.segment(f.block.offset, f.block.size) = f.set.project(u.segment(f.offset, f.size));
      }
    }
    return x;
  }

  // (lo, hi, fixed) search window per coordinate of u
  void window(const Vector& ref, Vector& lo, Vector& hi, std::vector<bool>& expandable) const {
    lo.resize(dim_u);
    hi.resize(dim_u);
    expandable.assign(std::size_t(dim_u), false);
    for (const auto& f : factors) {
      const Vector r = ref.segment(f.block.offset, f.block.size);
      if (f.affine) {
        const Vector c = f.basis.transpose() * (r - f.point);
        const double w = 1.0 + (r - f.point).norm();
        lo.segment(f.offset, f.size) = c.array() - w;
        hi.segment(f.offset, f.size) = c.array() + w;
        for (Eigen::Index i = 0; i < f.size; ++i) expandable[std::size_t(f.offset + i)] = true;
      } else if (const auto* b = std::get_if<ArgminSet::Box>(&f.set.kind())) {
        lo.segment(f.offset, f.size) = b->lo;
        hi.segment(f.offset, f.size) = b->hi;
      } else if (const auto* ball = std::get_if<ArgminSet::Ball>(&f.set.kind())) {
        lo.segment(f.offset, f.size) = ball->center.array() - ball->radius;
        hi.segment(f.offset, f.size) = ball->center.array() + ball->radius;
      }
    }
  }
};

inline HierarchicalSolution solve_grid(const ArgminSet& c, const Potential& psi, const Vector& ref,
                                       const OracleOptions& o) {
  if (c.dim() > 3) throw DomainError("oracle: grid brute force needs dimension <= 3");
  const Param par(c);
  HierarchicalSolution sol;
  sol.method = OracleMethod::GridBruteForce;
  if (par.dim_u == 0) {
    sol.z_star = par.map(Vector(0));
    return sol;
  }
  Vector lo, hi;
  std::vector<bool> expandable;
  par.window(ref, lo, hi, expandable);
  auto obj = [&](const Vector& u) { return psi.value(par.map(u)); };

  constexpr int kPts = 41;
  const Eigen::Index D = par.dim_u;
  const Vector centre = 0.5 * (lo + hi);
  Vector best_u = centre;
  double best = obj(best_u);
  // ties go to the point nearest the reference, so flat objectives stay put
  auto better = [&](double f, const Vector& u) {
    return f < best || (f == best && (u - centre).squaredNorm() < (best_u - centre).squaredNorm());
  };
  auto scan = [&](const Vector& a, const Vector& b) {
    std::vector<int> idx(std::size_t(D), 0);
    Vector u(D);
    for (;;) {
      for (Eigen::Index i = 0; i < D; ++i) u[i] = a[i] + (b[i] - a[i]) * idx[std::size_t(i)] / double(kPts - 1);
      const double f = obj(u);
      if (better(f, u)) {
        best = f;
        best_u = u;
      }
      Eigen::Index d = 0;
      while (d < D && ++idx[std::size_t(d)] == kPts) idx[std::size_t(d++)] = 0;
      if (d == D) break;
    }
  };

  // expand affine windows until the minimizer is interior
  for (int round = 0; round < 40; ++round) {
    best = std::numeric_limits<double>::infinity();
    scan(lo, hi);
    bool moved = false;
    for (Eigen::Index i = 0; i < D; ++i) {
      if (!expandable[std::size_t(i)]) continue;
      const double w = hi[i] - lo[i];
      if (best_u[i] <= lo[i] + 1e-12 * w || best_u[i] >= hi[i] - 1e-12 * w) {
        lo[i] = best_u[i] - w;
        hi[i] = best_u[i] + w;
        moved = true;
      }
    }
    if (!moved) break;
  }
  // refine: shrink around the incumbent until the spacing reaches the resolution
  for (;;) {
    const double spacing = ((hi - lo) / double(kPts - 1)).maxCoeff();
    if (spacing <= o.grid_resolution) break;
    const Vector half = (hi - lo) / 8.0;
    lo = best_u - half;
    hi = best_u + half;
    scan(lo, hi);
    ++sol.iterations;
  }
  // compass search polish
  double step = o.grid_resolution;
  while (step > 1e-13) {
    bool improved = false;
    for (Eigen::Index i = 0; i < D; ++i) {
      for (double sgn : {1.0, -1.0}) {
        Vector u = best_u;
        u[i] += sgn * step;
        const double f = obj(u);
        if (f < best) {
          best = f;
          best_u = u;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
    ++sol.iterations;
  }
  sol.z_star = par.map(best_u);
  sol.unique = true;  // not decided by brute force
  return sol;
}

}  // namespace detail

/// argmin{Psi(x) : x in argmin Phi}, dispatched on the structure of C and Psi.
inline HierarchicalSolution solve_hierarchical(const Potential& phi, const Potential& psi, const OracleOptions& o = {}) {
  if (phi.dim() != psi.dim()) throw DimensionError("solve_hierarchical: Phi/Psi dimension mismatch");
  const ArgminSet& c = phi.argmin_set();
  const Vector ref = o.reference ? *o.reference : Vector::Zero(phi.dim());
  require_dim(ref, phi.dim(), "solve_hierarchical reference");
  const auto q = psi.quadratic_model();

  OracleMethod m;
  if (o.method) {
    m = *o.method;
  } else if (q && c.is_affine()) {
    m = OracleMethod::KktLinearSolve;
  } else if (q) {
    m = OracleMethod::ProjectedGradient;
  } else if (c.dim() <= 3) {
    m = OracleMethod::GridBruteForce;
  } else {
    throw DomainError("solve_hierarchical: Psi is not quadratic and the dimension exceeds 3");
  }

  HierarchicalSolution sol;
  switch (m) {
    case OracleMethod::ClosedFormProjection:
    case OracleMethod::KktLinearSolve:
      if (!q || !c.is_affine()) throw DomainError("solve_hierarchical: linear solve needs affine C and quadratic Psi");
      sol = detail::solve_affine(c, psi, q->first, q->second, ref);
      break;
    case OracleMethod::ProjectedGradient:
      if (!q) throw DomainError("solve_hierarchical: projected gradient needs quadratic Psi");
      sol = detail::solve_projected_gradient(c, psi, q->first, ref, o);
      break;
    case OracleMethod::GridBruteForce:
      sol = detail::solve_grid(c, psi, ref, o);
      break;
  }
  sol.psi_min = psi.value(sol.z_star);
  sol.certificate = detail::certify(c, psi, sol.z_star, o);
  return sol;
}

// ---- discrete Neumann problems ---------------------------------------------

/// Second-difference Neumann Laplacian on n cells with unit spacing.
inline Matrix neumann_laplacian(Eigen::Index n) {
  if (n < 2) throw DomainError("neumann_laplacian: need n >= 2");
  Matrix L = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    L(i, i) += 1.0;
    L(i + 1, i + 1) += 1.0;
    L(i, i + 1) -= 1.0;
    L(i + 1, i) -= 1.0;
  }
  return L;
}

/// Means and mean velocities of the Cauchy data, used to locate the common
/// limit mean.
struct MeanData {
  double u1 = 0.0, u2 = 0.0, v1 = 0.0, v2 = 0.0;
  double gamma = 1.0;
};

struct NeumannReference {
  Vector u1_bar;  // mean-zero solution of alpha_1 L u = h_1
  Vector u2_bar;
  std::optional<double> limit_mean;  // common mean of the selected pair
  double coupling_min = 0.0;         // 1/2 |u1_bar - u2_bar|^2 at equal means
};

/// Mean-zero solutions of alpha_i L u = h_i by a direct solve of the
/// regularized system (alpha L + 11'/n) u = h.
inline NeumannReference neumann_reference(Eigen::Index n, double alpha1, double alpha2, const Vector& h1,
                                          const Vector& h2, std::optional<MeanData> means = std::nullopt) {
  require_dim(h1, n, "neumann_reference h1");
  require_dim(h2, n, "neumann_reference h2");
  if (!(alpha1 > 0.0) || !(alpha2 > 0.0)) throw DomainError("neumann_reference: alpha must be positive");
  for (const Vector* h : {&h1, &h2}) {
    if (std::abs(h->sum()) > 1e-10 * (1.0 + h->cwiseAbs().sum())) {
      throw DomainError("neumann_reference: forcing must have zero sum (compatibility)");
    }
  }
  const Matrix L = neumann_laplacian(n);
  const Matrix J = Matrix::Constant(n, n, 1.0 / double(n));
  auto solve = [&](double a, const Vector& h) -> Vector {
    Eigen::LDLT<Matrix> ldlt(a * L + J);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) throw NumericalAbort("neumann_reference: singular solve");
    Vector u = ldlt.solve(h);
    u.array() -= u.mean();
    return u;
  };
  NeumannReference r;
  r.u1_bar = solve(alpha1, h1);
  r.u2_bar = solve(alpha2, h2);
  r.coupling_min = 0.5 * (r.u1_bar - r.u2_bar).squaredNorm();
  if (means) {
    // the sum of the two means obeys s'' + gamma s' = 0
    const double s_inf = means->u1 + means->u2 + (means->v1 + means->v2) / means->gamma;
    r.limit_mean = 0.5 * s_inf;
  }
  return r;
}

}  // namespace hiermin
