#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

namespace hiermin {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Exceptions. Every failure in the library derives from Error so callers can
// catch one type; the experiment runner maps the subclasses to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct DomainError : Error {
  using Error::Error;
};

/// Integration or solver breakdown (step underflow, non-finite state,
/// nonconvergence).
struct NumericalAbort : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

/// A real number or +infinity. Used wherever a convex-analytic quantity
/// (conjugate, support function) can leave its effective domain, so that
/// "infinite" is never confused with "large".
class ExtendedReal {
 public:
  constexpr ExtendedReal(double v) : value_(v), infinite_(false) {}  // NOLINT
  static constexpr ExtendedReal infinity() { return ExtendedReal(); }

  [[nodiscard]] constexpr bool is_finite() const { return !infinite_; }
  [[nodiscard]] constexpr bool is_infinite() const { return infinite_; }

  /// Finite value; throws on +inf.
  [[nodiscard]] double value() const {
    if (infinite_) throw DomainError("ExtendedReal: value() of +infinity");
    return value_;
  }

  friend ExtendedReal operator+(ExtendedReal a, ExtendedReal b) {
    if (a.infinite_ || b.infinite_) return infinity();
    return {a.value_ + b.value_};
  }
  friend bool operator==(ExtendedReal a, ExtendedReal b) {
    return a.infinite_ == b.infinite_ && (a.infinite_ || a.value_ == b.value_);
  }

 private:
  constexpr ExtendedReal() : value_(0.0), infinite_(true) {}
  double value_;
  bool infinite_;
};

/// Contiguous coordinate block [offset, offset + size) of a product space.
struct Block {
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
  friend bool operator==(const Block&, const Block&) = default;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw DomainError(std::string(what) + ": non-finite entry");
}

inline void require_dim(const Vector& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(n) +
                         ", got " + std::to_string(v.size()));
  }
}

}  // namespace hiermin
