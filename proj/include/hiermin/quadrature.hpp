#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace hiermin::quad {

/// Gauss-Legendre rule on [-1, 1] with N nodes, computed by Newton iteration
/// on the Legendre polynomial.
template <int N>
struct GaussLegendre {
  std::array<double, N> x{};
  std::array<double, N> w{};

  GaussLegendre() {
    for (int i = 0; i < (N + 1) / 2; ++i) {
      double z = std::cos(std::numbers::pi * (i + 0.75) / (N + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = 0.0;
        for (int j = 1; j <= N; ++j) {
          const double p2 = p1;
          p1 = p0;
          p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
        }
        dp = N * (z * p0 - p1) / (z * z - 1.0);
        const double dz = p0 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-16) break;
      }
      x[i] = -z;
      x[N - 1 - i] = z;
      w[i] = w[N - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
  }
};

inline const GaussLegendre<16>& gl16() {
  static const GaussLegendre<16> rule;
  return rule;
}

/// 16-point Gauss-Legendre on [a, b].
template <class F>
double gauss16(F&& f, double a, double b) {
  const auto& r = gl16();
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  double acc = 0.0;
  for (int i = 0; i < 16; ++i) acc += r.w[i] * f(mid + half * r.x[i]);
  return acc * half;
}

/// Composite rule on [a, b] with `panels` geometrically graded panels
/// (ratio chosen so that panel widths grow like the distance from a - 1).
template <class F>
double graded(F&& f, double a, double b, int panels) {
  if (b <= a) return 0.0;
  const double q = std::pow((1.0 + b) / (1.0 + a), 1.0 / panels);
  double lo = a, acc = 0.0;
  for (int k = 1; k <= panels; ++k) {
    const double hi = (k == panels) ? b : (1.0 + a) * std::pow(q, k) - 1.0;
    acc += gauss16(f, lo, hi);
    lo = hi;
  }
  return acc;
}

}  // namespace hiermin::quad
