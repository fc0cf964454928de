#pragma once

// Normalized product quadrature on the unit ball of R^N.
// Offsets are stored in (z, -z) pairs so linear terms cancel pairwise.

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "vpharm/errors.hpp"
#include "vpharm/geometry.hpp"

namespace vpharm {

struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

// Returns (P_n(x), P_n'(x)) by the three-term recurrence.
inline std::pair<double, double> legendre(int n, double x) {
  double p0 = 1.0, p1 = x;
  for (int k = 2; k <= n; ++k) {
    const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = pk;
  }
  return {p1, n * (x * p1 - p0) / (x * x - 1.0)};
}

}  // namespace detail

/// Gauss–Legendre rule on [-1, 1] with n nodes, exactly symmetric.
inline GaussRule gauss_legendre(int n) {
  if (n < 1) throw ConfigError("Gauss-Legendre order must be >= 1");
  GaussRule rule;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = detail::legendre(n, x);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) <= 1e-16) break;
    }
    if (n % 2 == 1 && i == n / 2) x = 0.0;
    const double dp = detail::legendre(n, x).second;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = x;
    rule.nodes[n - 1 - i] = -x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

template <int N>
struct BallQuadrature {
  std::vector<Point<N>> offsets;
  std::vector<double> weights;
  int radial_order = 0;
  int angular_order = 0;

  std::size_t size() const { return offsets.size(); }
};

namespace detail {

template <int N>
void push_pair(BallQuadrature<N>& q, const Point<N>& z, double w) {
  q.offsets.push_back(z);
  q.weights.push_back(w);
  q.offsets.push_back((-1.0) * z);
  q.weights.push_back(w);
}

template <int N>
void normalize(BallQuadrature<N>& q) {
  double total = 0.0;
  for (double w : q.weights) total += w;
  for (double& w : q.weights) w /= total;
}

}  // namespace detail

/// N=1: Gauss–Legendre on [-1,1] (radial_order nodes, angular_order unused).
/// N=2: radial Gauss–Legendre (Jacobian r) x uniform angles.
/// N=3: radial Gauss–Legendre (Jacobian r^2) x Gauss–Legendre in cos(theta) x uniform azimuth.
/// Odd angular counts are rounded up to the next even number.
template <int N>
BallQuadrature<N> build_ball_quadrature(int radial_order = 8, int angular_order = 32) {
  if constexpr (N < 1 || N > 3) {
    throw UnsupportedDimension("ball quadrature supports N in {1,2,3}");
  } else {
    if (radial_order < 1 || angular_order < 1)
      throw ConfigError("quadrature orders must be >= 1");
    const int m = angular_order + (angular_order % 2);
    BallQuadrature<N> q;
    q.radial_order = radial_order;
    q.angular_order = m;

    if constexpr (N == 1) {
      const GaussRule g = gauss_legendre(radial_order);
      for (int i = 0; i < radial_order / 2; ++i) detail::push_pair<1>(q, Point<1>{g.nodes[i]}, g.weights[i]);
      if (radial_order % 2 == 1) {
        q.offsets.push_back(Point<1>{0.0});
        q.weights.push_back(g.weights[radial_order / 2]);
      }
    } else {
      // Radial rule on [0,1] mapped from [-1,1].
      const GaussRule g = gauss_legendre(radial_order);
      std::vector<double> rho(radial_order), a(radial_order);
      for (int i = 0; i < radial_order; ++i) {
        rho[i] = 0.5 * (g.nodes[i] + 1.0);
        a[i] = 0.5 * g.weights[i] * std::pow(rho[i], N - 1);
      }
      if constexpr (N == 2) {
        for (int i = 0; i < radial_order; ++i)
          for (int k = 0; k < m / 2; ++k) {
            const double th = 2.0 * std::numbers::pi * k / m;
            detail::push_pair<2>(q, Point<2>{rho[i] * std::cos(th), rho[i] * std::sin(th)}, a[i]);
          }
      } else {
        const int polar = std::max(1, m / 2);
        const GaussRule c = gauss_legendre(polar);
        for (int i = 0; i < radial_order; ++i)
          for (int j = 0; j < polar; ++j) {
            const double ct = c.nodes[j];
            const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
            for (int k = 0; k < m / 2; ++k) {
              const double ph = 2.0 * std::numbers::pi * k / m;
              detail::push_pair<3>(
                  q, Point<3>{rho[i] * st * std::cos(ph), rho[i] * st * std::sin(ph), rho[i] * ct},
                  a[i] * c.weights[j]);
            }
          }
      }
    }
    detail::normalize(q);
    return q;
  }
}

}  // namespace vpharm
