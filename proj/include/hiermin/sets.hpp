#pragma once

#include "hiermin/core.hpp"

#include <algorithm>
#include <cstdint>
#include <memory>
#include <random>
#include <variant>
#include <vector>

namespace hiermin {

/// Closed convex set C = argmin Phi, restricted to the shapes for which
/// projection and support function have closed forms.
class ArgminSet {
 public:
  /// point + span(basis); basis columns are orthonormal (basis may have zero
  /// columns, which makes the set a single point).
  struct Affine {
    Vector point;
    Matrix basis;
  };
  struct Box {
    Vector lo;
    Vector hi;
  };
  struct Ball {
    Vector center;
    double radius = 1.0;
  };
  struct Part {
    std::shared_ptr<const ArgminSet> set;
    Block block;
  };
  /// Cartesian product over blocks that tile [0, dim).
  struct Product {
    std::vector<Part> parts;
  };
  using Kind = std::variant<Affine, Box, Ball, Product>;

  static ArgminSet affine(Vector point, Matrix basis) {
    require_finite(point, "ArgminSet::affine point");
    if (basis.rows() != point.size() && basis.cols() > 0) {
      throw DimensionError("ArgminSet::affine: basis rows must match point dimension");
    }
    if (basis.cols() == 0) basis.resize(point.size(), 0);
    const Matrix gram = basis.transpose() * basis;
    if (basis.cols() > 0 &&
        (gram - Matrix::Identity(basis.cols(), basis.cols())).cwiseAbs().maxCoeff() > 1e-10) {
      throw DomainError("ArgminSet::affine: basis is not orthonormal");
    }
    return ArgminSet(Affine{std::move(point), std::move(basis)});
  }

  /// Affine set through `point` spanned by arbitrary (possibly dependent) columns.
  static ArgminSet affine_span(Vector point, const Matrix& spanning) {
    if (spanning.cols() == 0) return affine(std::move(point), Matrix(point.size(), 0));
    Eigen::ColPivHouseholderQR<Matrix> qr(spanning);
    qr.setThreshold(1e-12);
    const Eigen::Index rank = qr.rank();
    Matrix q = qr.householderQ() * Matrix::Identity(spanning.rows(), rank);
    return affine(std::move(point), std::move(q));
  }

  static ArgminSet point(Vector p) {
    const auto n = p.size();
    return affine(std::move(p), Matrix(n, 0));
  }

  static ArgminSet box(Vector lo, Vector hi) {
    if (lo.size() != hi.size()) throw DimensionError("ArgminSet::box: lo/hi size mismatch");
    require_finite(lo, "ArgminSet::box lo");
    require_finite(hi, "ArgminSet::box hi");
    if ((hi - lo).minCoeff() < 0.0) throw DomainError("ArgminSet::box: lo > hi");
    return ArgminSet(Box{std::move(lo), std::move(hi)});
  }

  static ArgminSet ball(Vector center, double radius) {
    require_finite(center, "ArgminSet::ball center");
    if (!(radius > 0.0) || !std::isfinite(radius)) {
      throw DomainError("ArgminSet::ball: radius must be positive");
    }
    return ArgminSet(Ball{std::move(center), radius});
  }

  static ArgminSet product(std::vector<Part> parts) {
    Eigen::Index next = 0;
    for (const auto& part : parts) {
      if (!part.set) throw DomainError("ArgminSet::product: null part");
      if (part.block.offset != next || part.block.size != part.set->dim()) {
        throw DimensionError("ArgminSet::product: blocks must tile the space in order");
      }
      next += part.block.size;
    }
    if (parts.empty()) throw DomainError("ArgminSet::product: no parts");
    return ArgminSet(Product{std::move(parts)});
  }

  /// Product of sets laid out consecutively.
  static ArgminSet product_of(const std::vector<ArgminSet>& sets) {
    std::vector<Part> parts;
    Eigen::Index off = 0;
    for (const auto& s : sets) {
      parts.push_back({std::make_shared<const ArgminSet>(s), Block{off, s.dim()}});
      off += s.dim();
    }
    return product(std::move(parts));
  }

  [[nodiscard]] const Kind& kind() const { return kind_; }

  [[nodiscard]] Eigen::Index dim() const {
    return std::visit(
        [](const auto& k) -> Eigen::Index {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Affine>) return k.point.size();
          if constexpr (std::is_same_v<K, Box>) return k.lo.size();
          if constexpr (std::is_same_v<K, Ball>) return k.center.size();
          if constexpr (std::is_same_v<K, Product>) {
            const auto& last = k.parts.back().block;
            return last.offset + last.size;
          }
        },
        kind_);
  }

  [[nodiscard]] bool is_bounded() const {
    return std::visit(
        [](const auto& k) -> bool {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Affine>) return k.basis.cols() == 0;
          if constexpr (std::is_same_v<K, Product>) {
            return std::all_of(k.parts.begin(), k.parts.end(),
                               [](const Part& p) { return p.set->is_bounded(); });
          }
          return true;
        },
        kind_);
  }

  [[nodiscard]] bool is_affine() const {
    if (std::holds_alternative<Affine>(kind_)) return true;
    if (const auto* p = std::get_if<Product>(&kind_)) {
      return std::all_of(p->parts.begin(), p->parts.end(),
                         [](const Part& q) { return q.set->is_affine(); });
    }
    return false;
  }

  /// Flattens an affine set (or product of affine sets) to a single
  /// point + orthonormal basis description.
  [[nodiscard]] Affine as_affine() const {
    if (const auto* a = std::get_if<Affine>(&kind_)) return *a;
    const auto* p = std::get_if<Product>(&kind_);
    if (p == nullptr || !is_affine()) throw DomainError("ArgminSet::as_affine: set is not affine");
    const Eigen::Index n = dim();
    Vector point(n);
    std::vector<std::pair<Block, Matrix>> bases;
    Eigen::Index cols = 0;
    for (const auto& part : p->parts) {
      Affine sub = part.set->as_affine();
      point.segment(part.block.offset, part.block.size) = sub.point;
      cols += sub.basis.cols();
      bases.emplace_back(part.block, std::move(sub.basis));
    }
    Matrix basis = Matrix::Zero(n, cols);
    Eigen::Index c = 0;
    for (const auto& [blk, b] : bases) {
      basis.block(blk.offset, c, blk.size, b.cols()) = b;
      c += b.cols();
    }
    return {point, basis};
  }

  [[nodiscard]] Vector project(const Vector& x) const {
    require_dim(x, dim(), "ArgminSet::project");
    return std::visit(
        [&](const auto& k) -> Vector {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Affine>) {
            if (k.basis.cols() == 0) return k.point;
            return k.point + k.basis * (k.basis.transpose() * (x - k.point));
          }
          if constexpr (std::is_same_v<K, Box>) return x.cwiseMax(k.lo).cwiseMin(k.hi);
          if constexpr (std::is_same_v<K, Ball>) {
            const Vector d = x - k.center;
            const double r = d.norm();
            if (r <= k.radius) return x;
            return k.center + d * (k.radius / r);
          }
          if constexpr (std::is_same_v<K, Product>) {
            Vector out(x.size());
            for (const auto& part : k.parts) {
              out.segment(part.block.offset, part.block.size) =
                  part.set->project(x.segment(part.block.offset, part.block.size));
            }
            return out;
          }
        },
        kind_);
  }

  [[nodiscard]] double distance(const Vector& x) const { return (x - project(x)).norm(); }

  [[nodiscard]] bool contains(const Vector& x, double tol = 1e-9) const {
    return distance(x) <= tol;
  }

  /// sigma_C(y) = sup_{x in C} <y, x>.
  [[nodiscard]] ExtendedReal support(const Vector& y) const {
    require_dim(y, dim(), "ArgminSet::support");
    return std::visit(
        [&](const auto& k) -> ExtendedReal {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Affine>) {
            if (k.basis.cols() > 0 &&
                (k.basis.transpose() * y).norm() > kOrthTol * std::max(1.0, y.norm())) {
              return ExtendedReal::infinity();
            }
            return y.dot(k.point);
          }
          if constexpr (std::is_same_v<K, Box>) {
            return y.cwiseProduct(k.lo).cwiseMax(y.cwiseProduct(k.hi)).sum();
          }
          if constexpr (std::is_same_v<K, Ball>) return y.dot(k.center) + k.radius * y.norm();
          if constexpr (std::is_same_v<K, Product>) {
            ExtendedReal acc = 0.0;
            for (const auto& part : k.parts) {
              acc = acc + part.set->support(y.segment(part.block.offset, part.block.size));
            }
            return acc;
          }
        },
        kind_);
  }

  /// Draws a point of C. Affine directions are sampled within `radius` of the
  /// projection of `anchor`; box samples land on faces and vertices with
  /// positive probability so that normal-cone tests see the extreme points.
  template <class Rng>
  [[nodiscard]] Vector sample(Rng& rng, const Vector& anchor, double radius = 1.0) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    return std::visit(
        [&](const auto& k) -> Vector {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Affine>) {
            Vector base = project(anchor);
            if (k.basis.cols() == 0) return base;
            Vector y(k.basis.cols());
            for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = radius * (2.0 * unit(rng) - 1.0);
            return base + k.basis * y;
          }
          if constexpr (std::is_same_v<K, Box>) {
            Vector s(k.lo.size());
            for (Eigen::Index i = 0; i < s.size(); ++i) {
              const double u = unit(rng);
              if (u < 0.25) {
                s[i] = k.lo[i];
              } else if (u < 0.5) {
                s[i] = k.hi[i];
              } else {
                s[i] = k.lo[i] + unit(rng) * (k.hi[i] - k.lo[i]);
              }
            }
            return s;
          }
          if constexpr (std::is_same_v<K, Ball>) {
            std::normal_distribution<double> g(0.0, 1.0);
            Vector d(k.center.size());
            for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = g(rng);
            const double nd = d.norm();
            if (nd == 0.0) return k.center;
            // boundary with probability 1/4
            const double r = unit(rng) < 0.25
                                 ? k.radius
                                 : k.radius * std::pow(unit(rng), 1.0 / double(d.size()));
            return k.center + d * (r / nd);
          }
          if constexpr (std::is_same_v<K, Product>) {
            Vector s(anchor.size());
            for (const auto& part : k.parts) {
              s.segment(part.block.offset, part.block.size) = part.set->sample(
                  rng, Vector(anchor.segment(part.block.offset, part.block.size)), radius);
            }
            return s;
          }
        },
        kind_);
  }

  friend bool operator==(const ArgminSet& a, const ArgminSet& b) {
    if (a.kind_.index() != b.kind_.index()) return false;
    return std::visit(
        [&](const auto& ka) -> bool {
          using K = std::decay_t<decltype(ka)>;
          const auto& kb = std::get<K>(b.kind_);
          if constexpr (std::is_same_v<K, Affine>) {
            return ka.point == kb.point && ka.basis.rows() == kb.basis.rows() &&
                   ka.basis.cols() == kb.basis.cols() && ka.basis == kb.basis;
          }
          if constexpr (std::is_same_v<K, Box>) return ka.lo == kb.lo && ka.hi == kb.hi;
          if constexpr (std::is_same_v<K, Ball>) {
            return ka.center == kb.center && ka.radius == kb.radius;
          }
          if constexpr (std::is_same_v<K, Product>) {
            if (ka.parts.size() != kb.parts.size()) return false;
            for (std::size_t i = 0; i < ka.parts.size(); ++i) {
              if (!(ka.parts[i].block == kb.parts[i].block) ||
                  !(*ka.parts[i].set == *kb.parts[i].set)) {
                return false;
              }
            }
            return true;
          }
        },
        a.kind_);
  }

  /// Relative threshold below which a vector counts as orthogonal to the
  /// affine directions (shared with the quadratic-form conjugate).
  static constexpr double kOrthTol = 1e-9;

 private:
  explicit ArgminSet(Kind k) : kind_(std::move(k)) {}
  Kind kind_;
};

inline Vector project(const ArgminSet& set, const Vector& x) { return set.project(x); }

inline ExtendedReal support_function(const ArgminSet& set, const Vector& y) {
  return set.support(y);
}

/// max over sampled s in C of <p, s - z>. A value <= tol certifies
/// (empirically) that p lies in the normal cone N_C(z).
inline double normal_cone_residual(const ArgminSet& set, const Vector& z, const Vector& p,
                                   std::size_t samples = 10000, std::uint64_t seed = 12345,
                                   double membership_tol = 1e-8) {
  require_dim(z, set.dim(), "normal_cone_residual z");
  require_dim(p, set.dim(), "normal_cone_residual p");
  if (!set.contains(z, membership_tol)) {
    throw DomainError("normal_cone_residual: z is not in the set (distance " +
                      std::to_string(set.distance(z)) + ")");
  }
  std::mt19937_64 rng(seed);
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < samples; ++i) {
    const Vector s = set.sample(rng, z);
    worst = std::max(worst, p.dot(s - z));
  }
  return worst;
}

}  // namespace hiermin
