#pragma once

#include "hiermin/core.hpp"
#include "hiermin/sets.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include <algorithm>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

namespace hiermin {

/// Raised by Potential::conjugate for kinds without a closed-form conjugate;
/// callers fall back to conjugate_numeric.
struct UnsupportedConjugate : Error {
  using Error::Error;
};

/// Axis-aligned search region for brute-force conjugate evaluation.
struct SearchBox {
  Vector lo;
  Vector hi;
};

/// A smooth convex potential. Values are normalized so that the minimum over
/// the whole space is 0 (the constant removed is kept in raw_minimum()).
class Potential {
 public:
  /// 1/2 x'Ax + b'x + c, A symmetric positive semidefinite.
  struct QuadraticForm {
    Matrix A;
    Vector b;
    double c = 0.0;
  };
  /// weight * dist(x, C)^2.
  struct SqDistToSet {
    ArgminSet set;
    double weight = 0.5;
  };
  /// weight * |x - center|^2.
  struct Tikhonov {
    Vector center;
    double weight = 0.5;
  };
  struct Part {
    std::shared_ptr<const Potential> potential;
    Block block;
  };
  /// Sum of potentials acting on consecutive blocks that tile the space.
  struct SeparableSum {
    std::vector<Part> parts;
  };
  /// 1/2 |L1 x1 - L2 x2|^2 with x1, x2 the given blocks of x in R^dim.
  struct QuadraticCoupling {
    Matrix L1;
    Matrix L2;
    Block block1;
    Block block2;
    Eigen::Index dim = 0;
  };
  using Kind = std::variant<QuadraticForm, SqDistToSet, Tikhonov, SeparableSum, QuadraticCoupling>;

  // ---- construction -------------------------------------------------------

  static Potential quadratic(Matrix A, Vector b, double c = 0.0) {
    if (A.rows() != A.cols() || A.rows() != b.size()) {
      throw DimensionError("Potential::quadratic: A must be square and match b");
    }
    if (!A.allFinite() || !b.allFinite() || !std::isfinite(c)) {
      throw DomainError("Potential::quadratic: non-finite data");
    }
    const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw DomainError("Potential::quadratic: A is not symmetric");
    }
    return Potential(QuadraticForm{std::move(A), std::move(b), c});
  }

  static Potential zero(Eigen::Index n) {
    return quadratic(Matrix::Zero(n, n), Vector::Zero(n), 0.0);
  }

  static Potential sq_dist(ArgminSet set, double weight = 0.5) {
    if (!(weight > 0.0) || !std::isfinite(weight)) {
      throw DomainError("Potential::sq_dist: weight must be positive");
    }
    return Potential(SqDistToSet{std::move(set), weight});
  }

  static Potential tikhonov(Vector center, double weight = 0.5) {
    require_finite(center, "Potential::tikhonov center");
    if (!(weight > 0.0) || !std::isfinite(weight)) {
      throw DomainError("Potential::tikhonov: weight must be positive");
    }
    return Potential(Tikhonov{std::move(center), weight});
  }

  static Potential separable(std::vector<Part> parts) {
    if (parts.empty()) throw DomainError("Potential::separable: no parts");
    Eigen::Index next = 0;
    for (const auto& part : parts) {
      if (!part.potential) throw DomainError("Potential::separable: null part");
      if (part.block.offset != next || part.block.size != part.potential->dim()) {
        throw DimensionError("Potential::separable: blocks must tile the space in order");
      }
      next += part.block.size;
    }
    return Potential(SeparableSum{std::move(parts)});
  }

  static Potential separable_of(const std::vector<Potential>& ps) {
    std::vector<Part> parts;
    Eigen::Index off = 0;
    for (const auto& p : ps) {
      parts.push_back({std::make_shared<const Potential>(p), Block{off, p.dim()}});
      off += p.dim();
    }
    return separable(std::move(parts));
  }

  static Potential coupling(Matrix L1, Matrix L2, Block b1, Block b2, Eigen::Index dim) {
    if (L1.rows() != L2.rows() || L1.cols() != b1.size || L2.cols() != b2.size) {
      throw DimensionError("Potential::coupling: operator shapes do not match blocks");
    }
    auto inside = [dim](Block b) { return b.offset >= 0 && b.size > 0 && b.offset + b.size <= dim; };
    if (!inside(b1) || !inside(b2)) throw DimensionError("Potential::coupling: block out of range");
    if (b1.offset < b2.offset + b2.size && b2.offset < b1.offset + b1.size) {
      throw DimensionError("Potential::coupling: blocks overlap");
    }
    return Potential(QuadraticCoupling{std::move(L1), std::move(L2), b1, b2, dim});
  }

  // ---- queries ------------------------------------------------------------

  [[nodiscard]] const Kind& kind() const { return kind_; }
  [[nodiscard]] Eigen::Index dim() const { return dim_; }

  /// inf of the (normalized) potential.
  [[nodiscard]] double lower_bound() const { return 0.0; }

  /// Minimum of the potential as originally specified, before normalization.
  [[nodiscard]] double raw_minimum() const { return raw_min_; }

  /// mu such that <grad P(x) - grad P(y), x - y> >= mu |x - y|^2, when the
  /// potential is strongly convex (modulus family theta(r) = mu r^2).
  [[nodiscard]] std::optional<double> uniform_convexity_modulus() const {
    if (const auto* t = std::get_if<Tikhonov>(&kind_)) return 2.0 * t->weight;
    if (const auto q = quadratic_model()) {
      const double lmin = Eigen::SelfAdjointEigenSolver<Matrix>(q->first).eigenvalues().minCoeff();
      if (lmin > 1e-10) return lmin;
    }
    return std::nullopt;
  }

  [[nodiscard]] double value(const Vector& x) const {
    check_input(x, "Potential::value");
    return raw_value(x);
  }

  [[nodiscard]] Vector gradient(const Vector& x) const {
    check_input(x, "Potential::gradient");
    Vector g = Vector::Zero(dim_);
    add_gradient(x, 1.0, g);
    return g;
  }

  /// out += scale * grad P(x). No input validation; hot path of the integrator.
  void add_gradient(const Eigen::Ref<const Vector>& x, double scale, Eigen::Ref<Vector> out) const {
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, QuadraticForm>) {
            if (an_->sparse_A) {
              out.noalias() += scale * (*an_->sparse_A * x);
            } else {
              out.noalias() += scale * (k.A * x);
            }
            out += scale * k.b;
          } else if constexpr (std::is_same_v<K, SqDistToSet>) {
            out += (2.0 * k.weight * scale) * (x - k.set.project(x));
          } else if constexpr (std::is_same_v<K, Tikhonov>) {
            out += (2.0 * k.weight * scale) * (x - k.center);
          } else if constexpr (std::is_same_v<K, SeparableSum>) {
            for (const auto& part : k.parts) {
              part.potential->add_gradient(x.segment(part.block.offset, part.block.size), scale,
                                           out.segment(part.block.offset, part.block.size));
            }
          } else if constexpr (std::is_same_v<K, QuadraticCoupling>) {
            if (an_->identity_coupling) {
              const Eigen::Index m = k.block1.size;
              for (Eigen::Index i = 0; i < m; ++i) {
                const double r = scale * (x[k.block1.offset + i] - x[k.block2.offset + i]);
                out[k.block1.offset + i] += r;
                out[k.block2.offset + i] -= r;
              }
              return;
            }
            const Vector r = apply(k.L1, an_->sparse_L1, x.segment(k.block1.offset, k.block1.size)) -
                             apply(k.L2, an_->sparse_L2, x.segment(k.block2.offset, k.block2.size));
            out.segment(k.block1.offset, k.block1.size) += scale * apply_t(k.L1, an_->sparse_L1, r);
            out.segment(k.block2.offset, k.block2.size) -= scale * apply_t(k.L2, an_->sparse_L2, r);
          }
        },
        kind_);
  }

  /// Fenchel conjugate P*(y) = sup_x <y,x> - P(x) of the normalized
  /// potential, in closed form. Throws UnsupportedConjugate for kinds
  /// without one.
  [[nodiscard]] ExtendedReal conjugate(const Vector& y) const {
    check_input(y, "Potential::conjugate");
    return std::visit(
        [&](const auto& k) -> ExtendedReal {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, QuadraticForm>) {
            const auto& an = *an_;
            if (an.null_basis.cols() > 0 &&
                (an.null_basis.transpose() * y).norm() >
                    ArgminSet::kOrthTol * std::max(1.0, y.norm())) {
              return ExtendedReal::infinity();
            }
            return y.dot(an.minimizer) + 0.5 * y.dot(an.pinv * y);
          } else if constexpr (std::is_same_v<K, SqDistToSet>) {
            return ExtendedReal(y.squaredNorm() / (4.0 * k.weight)) + k.set.support(y);
          } else if constexpr (std::is_same_v<K, Tikhonov>) {
            return y.squaredNorm() / (4.0 * k.weight) + y.dot(k.center);
          } else if constexpr (std::is_same_v<K, SeparableSum>) {
            ExtendedReal acc = 0.0;
            for (const auto& part : k.parts) {
              acc = acc + part.potential->conjugate(y.segment(part.block.offset, part.block.size));
            }
            return acc;
          } else {
            throw UnsupportedConjugate("Potential::conjugate: no closed form for QuadraticCoupling");
          }
        },
        kind_);
  }

  /// C = argmin P, read off the potential's structure.
  [[nodiscard]] const ArgminSet& argmin_set() const { return *an_->argmin; }

  /// (H, g) with P(x) = 1/2 x'Hx + g'x + const, when P is quadratic.
  [[nodiscard]] std::optional<std::pair<Matrix, Vector>> quadratic_model() const {
    return std::visit(
        [&](const auto& k) -> std::optional<std::pair<Matrix, Vector>> {
          using K = std::decay_t<decltype(k)>;
          const Eigen::Index n = dim_;
          if constexpr (std::is_same_v<K, QuadraticForm>) {
            return std::pair{k.A, k.b};
          } else if constexpr (std::is_same_v<K, Tikhonov>) {
            return std::pair<Matrix, Vector>{2.0 * k.weight * Matrix::Identity(n, n),
                                             -2.0 * k.weight * k.center};
          } else if constexpr (std::is_same_v<K, SqDistToSet>) {
            if (!k.set.is_affine()) return std::nullopt;
            const auto aff = k.set.as_affine();
            Matrix P = Matrix::Identity(n, n) - aff.basis * aff.basis.transpose();
            Matrix H = 2.0 * k.weight * P;
            Vector g = -H * aff.point;
            return std::pair{std::move(H), std::move(g)};
          } else if constexpr (std::is_same_v<K, SeparableSum>) {
            Matrix H = Matrix::Zero(n, n);
            Vector g = Vector::Zero(n);
            for (const auto& part : k.parts) {
              auto sub = part.potential->quadratic_model();
              if (!sub) return std::nullopt;
              H.block(part.block.offset, part.block.offset, part.block.size, part.block.size) =
                  sub->first;
              g.segment(part.block.offset, part.block.size) = sub->second;
            }
            return std::pair{std::move(H), std::move(g)};
          } else if constexpr (std::is_same_v<K, QuadraticCoupling>) {
            Matrix M = coupling_matrix(k);
            return std::pair<Matrix, Vector>{M.transpose() * M, Vector::Zero(n)};
          }
        },
        kind_);
  }

  /// a * P, as a potential of the same kind.
  [[nodiscard]] Potential scaled(double a) const {
    if (!(a > 0.0) || !std::isfinite(a)) throw DomainError("Potential::scaled: factor must be positive");
    return std::visit(
        [&](const auto& k) -> Potential {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, QuadraticForm>) {
            return quadratic(a * k.A, a * k.b, a * k.c);
          } else if constexpr (std::is_same_v<K, SqDistToSet>) {
            return sq_dist(k.set, a * k.weight);
          } else if constexpr (std::is_same_v<K, Tikhonov>) {
            return tikhonov(k.center, a * k.weight);
          } else if constexpr (std::is_same_v<K, SeparableSum>) {
            std::vector<Part> parts;
            for (const auto& part : k.parts) {
              parts.push_back({std::make_shared<const Potential>(part.potential->scaled(a)), part.block});
            }
            return separable(std::move(parts));
          } else if constexpr (std::is_same_v<K, QuadraticCoupling>) {
            const double s = std::sqrt(a);
            return coupling(s * k.L1, s * k.L2, k.block1, k.block2, k.dim);
          }
        },
        kind_);
  }

  /// True for weight-1/2 squared distance to a set (possibly as a separable
  /// sum of such terms): the case where P* - sigma_C = |.|^2 / 2 exactly.
  [[nodiscard]] bool is_half_sq_dist() const {
    if (const auto* s = std::get_if<SqDistToSet>(&kind_)) return s->weight == 0.5;
    if (const auto* s = std::get_if<SeparableSum>(&kind_)) {
      return std::all_of(s->parts.begin(), s->parts.end(),
                         [](const Part& p) { return p.potential->is_half_sq_dist(); });
    }
    return false;
  }

  friend bool operator==(const Potential& a, const Potential& b) {
    if (a.kind_.index() != b.kind_.index()) return false;
    return std::visit(
        [&](const auto& ka) -> bool {
          using K = std::decay_t<decltype(ka)>;
          const auto& kb = std::get<K>(b.kind_);
          if constexpr (std::is_same_v<K, QuadraticForm>) {
            return ka.A == kb.A && ka.b == kb.b && ka.c == kb.c;
          } else if constexpr (std::is_same_v<K, SqDistToSet>) {
            return ka.set == kb.set && ka.weight == kb.weight;
          } else if constexpr (std::is_same_v<K, Tikhonov>) {
            return ka.center == kb.center && ka.weight == kb.weight;
          } else if constexpr (std::is_same_v<K, SeparableSum>) {
            if (ka.parts.size() != kb.parts.size()) return false;
            for (std::size_t i = 0; i < ka.parts.size(); ++i) {
              if (!(ka.parts[i].block == kb.parts[i].block) ||
                  !(*ka.parts[i].potential == *kb.parts[i].potential)) {
                return false;
              }
            }
            return true;
          } else if constexpr (std::is_same_v<K, QuadraticCoupling>) {
            return ka.L1 == kb.L1 && ka.L2 == kb.L2 && ka.block1 == kb.block1 &&
                   ka.block2 == kb.block2 && ka.dim == kb.dim;
          }
        },
        a.kind_);
  }

 private:
  using Sparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

  struct Analysis {
    std::shared_ptr<const ArgminSet> argmin;
    // quadratic-form data
    Vector minimizer;
    Matrix pinv;
    Matrix null_basis;
    std::optional<Sparse> sparse_A;
    std::optional<Sparse> sparse_L1;
    std::optional<Sparse> sparse_L2;
    bool identity_coupling = false;  // L1 = L2 = I
  };

  explicit Potential(Kind k) : kind_(std::move(k)) { analyze(); }

  static std::optional<Sparse> maybe_sparse(const Matrix& M) {
    if (M.size() < 256) return std::nullopt;
    const auto nnz = (M.array() != 0.0).count();
    if (double(nnz) > 0.25 * double(M.size())) return std::nullopt;
    return Sparse(M.sparseView());
  }

  static Vector apply(const Matrix& M, const std::optional<Sparse>& S,
                      const Eigen::Ref<const Vector>& x) {
    if (S) return *S * x;
    return M * x;
  }

  static Vector apply_t(const Matrix& M, const std::optional<Sparse>& S, const Vector& r) {
    if (S) return S->transpose() * r;
    return M.transpose() * r;
  }

  static Matrix coupling_matrix(const QuadraticCoupling& k) {
    Matrix M = Matrix::Zero(k.L1.rows(), k.dim);
    M.block(0, k.block1.offset, k.L1.rows(), k.block1.size) = k.L1;
    M.block(0, k.block2.offset, k.L2.rows(), k.block2.size) -= k.L2;
    return M;
  }

  // Eigen-split of a PSD matrix: pseudo-inverse and null-space basis.
  static void spectral_split(const Matrix& A, Matrix& pinv, Matrix& null_basis) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(A);
    if (es.info() != Eigen::Success) throw NumericalAbort("Potential: eigendecomposition failed");
    const Vector& lam = es.eigenvalues();
    const double lmax = lam.cwiseAbs().maxCoeff();
    const double thr = 1e-10 * std::max(1.0, lmax);
    if (lam.minCoeff() < -thr) throw DomainError("Potential: quadratic form is not positive semidefinite");
    const Eigen::Index n = A.rows();
    pinv = Matrix::Zero(n, n);
    std::vector<Eigen::Index> null_idx;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector u = es.eigenvectors().col(i);
      if (std::abs(lam[i]) <= thr) {
        null_idx.push_back(i);
      } else {
        pinv.noalias() += (u * u.transpose()) / lam[i];
      }
    }
    null_basis.resize(n, Eigen::Index(null_idx.size()));
    for (std::size_t j = 0; j < null_idx.size(); ++j) {
      null_basis.col(Eigen::Index(j)) = es.eigenvectors().col(null_idx[j]);
    }
  }

  void analyze() {
    auto an = std::make_shared<Analysis>();
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, QuadraticForm>) {
            dim_ = k.A.rows();
            spectral_split(k.A, an->pinv, an->null_basis);
            if (an->null_basis.cols() > 0 &&
                (an->null_basis.transpose() * k.b).norm() > 1e-9 * std::max(1.0, k.b.norm())) {
              throw DomainError("Potential::quadratic: linear term outside range(A), unbounded below");
            }
            an->minimizer = -(an->pinv * k.b);
            raw_min_ = k.c + 0.5 * k.b.dot(an->minimizer);
            an->argmin = std::make_shared<const ArgminSet>(ArgminSet::affine(an->minimizer, an->null_basis));
            an->sparse_A = maybe_sparse(k.A);
          } else if constexpr (std::is_same_v<K, SqDistToSet>) {
            dim_ = k.set.dim();
            an->argmin = std::make_shared<const ArgminSet>(k.set);
          } else if constexpr (std::is_same_v<K, Tikhonov>) {
            dim_ = k.center.size();
            an->argmin = std::make_shared<const ArgminSet>(ArgminSet::point(k.center));
          } else if constexpr (std::is_same_v<K, SeparableSum>) {
            dim_ = k.parts.back().block.offset + k.parts.back().block.size;
            std::vector<ArgminSet::Part> parts;
            raw_min_ = 0.0;
            for (const auto& part : k.parts) {
              parts.push_back({std::make_shared<const ArgminSet>(part.potential->argmin_set()), part.block});
              raw_min_ += part.potential->raw_minimum();
            }
            an->argmin = std::make_shared<const ArgminSet>(ArgminSet::product(std::move(parts)));
          } else if constexpr (std::is_same_v<K, QuadraticCoupling>) {
            dim_ = k.dim;
            const Matrix M = coupling_matrix(k);
            spectral_split(M.transpose() * M, an->pinv, an->null_basis);
            an->minimizer = Vector::Zero(k.dim);
            an->argmin = std::make_shared<const ArgminSet>(ArgminSet::affine(Vector::Zero(k.dim), an->null_basis));
            an->sparse_L1 = maybe_sparse(k.L1);
            an->sparse_L2 = maybe_sparse(k.L2);
            an->identity_coupling = k.L1.rows() == k.L1.cols() && k.L1.isIdentity(0.0) && k.L2.isIdentity(0.0);
          }
        },
        kind_);
    an_ = std::move(an);
  }

  void check_input(const Vector& x, const char* what) const {
    require_dim(x, dim_, what);
    require_finite(x, what);
  }

  [[nodiscard]] double raw_value(const Eigen::Ref<const Vector>& x) const {
    return std::visit(
        [&](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, QuadraticForm>) {
            // 1/2 (x - x*)' A (x - x*): already shifted to minimum 0 and free of
            // the cancellation in 1/2 x'Ax + b'x - min.
            const Vector d = x - an_->minimizer;
            const Vector Ad = an_->sparse_A ? Vector(*an_->sparse_A * d) : Vector(k.A * d);
            return std::max(0.0, 0.5 * d.dot(Ad));
          } else if constexpr (std::is_same_v<K, SqDistToSet>) {
            return k.weight * (x - k.set.project(x)).squaredNorm();
          } else if constexpr (std::is_same_v<K, Tikhonov>) {
            return k.weight * (x - k.center).squaredNorm();
          } else if constexpr (std::is_same_v<K, SeparableSum>) {
            double acc = 0.0;
            for (const auto& part : k.parts) {
              acc += part.potential->raw_value(x.segment(part.block.offset, part.block.size));
            }
            return acc;
          } else if constexpr (std::is_same_v<K, QuadraticCoupling>) {
            const Vector r = apply(k.L1, an_->sparse_L1, x.segment(k.block1.offset, k.block1.size)) -
                             apply(k.L2, an_->sparse_L2, x.segment(k.block2.offset, k.block2.size));
            return 0.5 * r.squaredNorm();
          }
        },
        kind_);
  }

  Kind kind_;
  Eigen::Index dim_ = 0;
  double raw_min_ = 0.0;
  std::shared_ptr<const Analysis> an_;
};

inline double value(const Potential& p, const Vector& x) { return p.value(x); }
inline Vector gradient(const Potential& p, const Vector& x) { return p.gradient(x); }
inline ExtendedReal conjugate(const Potential& p, const Vector& y) { return p.conjugate(y); }

/// Brute-force lower bound on P*(y): maximum of <y,x> - P(x) over a dense
/// grid of the box, polished by projected gradient ascent inside the box.
inline double conjugate_numeric(const Potential& p, const Vector& y, const SearchBox& box,
                                std::size_t grid_budget = 200000) {
  require_dim(y, p.dim(), "conjugate_numeric y");
  const Eigen::Index n = p.dim();
  if (box.lo.size() != n || box.hi.size() != n) throw DimensionError("conjugate_numeric: box dimension");
  if (!box.lo.allFinite() || !box.hi.allFinite()) throw DomainError("conjugate_numeric: unbounded box");
  if ((box.hi - box.lo).minCoeff() < 0.0) throw DomainError("conjugate_numeric: empty box");

  auto objective = [&](const Vector& x) { return y.dot(x) - p.value(x); };
  const auto per_dim = std::max<Eigen::Index>(
      3, Eigen::Index(std::floor(std::pow(double(grid_budget), 1.0 / double(n)))));

  Vector best_x = box.lo;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<Eigen::Index> idx(std::size_t(n), 0);
  Vector x(n);
  for (;;) {
    for (Eigen::Index i = 0; i < n; ++i) {
      x[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * double(idx[std::size_t(i)]) / double(per_dim - 1);
    }
    const double f = objective(x);
    if (f > best) {
      best = f;
      best_x = x;
    }
    Eigen::Index d = 0;
    while (d < n && ++idx[std::size_t(d)] == per_dim) idx[std::size_t(d++)] = 0;
    if (d == n) break;
  }

  // concave objective: projected gradient ascent with backtracking
  double step = 1.0;
  for (int it = 0; it < 2000 && step > 1e-14; ++it) {
    const Vector g = y - p.gradient(best_x);
    const Vector cand = (best_x + step * g).cwiseMax(box.lo).cwiseMin(box.hi);
    const double f = objective(cand);
    if (f > best) {
      best = f;
      best_x = cand;
      step *= 1.5;
    } else {
      step *= 0.5;
    }
  }
  return best;
}

/// A direction of the cone {lambda p : p = -grad Psi(z), z in S} with its
/// witness z.
struct ConeRay {
  Vector direction;
  Vector witness;
};

/// Rays p = -grad Psi(z) and 2p for a hierarchical solution z, after
/// checking z in C and p in N_C(z).
inline std::vector<ConeRay> cone_rays(const Potential& phi, const Potential& psi, const Vector& z,
                                      double tol = 1e-6, std::size_t samples = 10000) {
  require_dim(z, phi.dim(), "cone_rays z");
  if (psi.dim() != phi.dim()) throw DimensionError("cone_rays: Phi/Psi dimension mismatch");
  const ArgminSet& c = phi.argmin_set();
  if (!c.contains(z, tol)) {
    throw DomainError("cone_rays: witness is not in argmin Phi (distance " +
                      std::to_string(c.distance(z)) + ")");
  }
  const Vector zc = c.project(z);
  const Vector p = -psi.gradient(zc);
  const double res = normal_cone_residual(c, zc, p, samples);
  if (res > tol * std::max(1.0, p.norm())) {
    throw DomainError("cone_rays: -grad Psi(z) is not in the normal cone (residual " +
                      std::to_string(res) + ")");
  }
  return {ConeRay{p, zc}, ConeRay{2.0 * p, zc}};
}

}  // namespace hiermin
