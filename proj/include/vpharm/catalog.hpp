#pragma once

// Named analytic test functions used as probes and as boundary data.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vpharm/errors.hpp"
#include "vpharm/geometry.hpp"
#include "vpharm/operator.hpp"
#include "vpharm/pmean.hpp"

namespace vpharm {

template <int N>
struct CatalogEntry {
  std::string name;
  SmoothProbe<N> probe;
  /// True when the function itself solves the limit equation for exponent p.
  std::function<bool(Exponent)> exact_for;
  /// Rejects domains on which the function is singular or its gradient vanishes.
  std::function<void(const Domain<N>&)> check_domain = [](const Domain<N>&) {};
};

inline const std::vector<std::string>& catalog_names() {
  static const std::vector<std::string> names{"constant", "affine", "quadratic", "harmonic", "radial_power", "cubic", "aronsson"};
  return names;
}

namespace detail {

template <int N>
using Hessian = std::array<Point<N>, N>;

template <int N>
Hessian<N> zero_hessian() {
  Hessian<N> h{};
  for (auto& row : h) row.fill(0.0);
  return h;
}

template <int N>
void require_planar(const std::string& name) {
  if (N < 2) throw UnsupportedDimension("catalog entry '" + name + "' needs at least two coordinates");
}

}  // namespace detail

template <int N>
CatalogEntry<N> constant_entry() {
  CatalogEntry<N> e;
  e.name = "constant";
  e.probe.value = [](const Point<N>&) { return 1.0; };
  e.probe.gradient = [](const Point<N>&) { return Point<N>{}; };
  e.probe.hessian = [](const Point<N>&) { return detail::zero_hessian<N>(); };
  e.exact_for = [](Exponent) { return true; };
  return e;
}

/// Affine 0.3 + 0.7 x1 - 1.1 x2 + 0.4 x3 (truncated to N coordinates).
template <int N>
CatalogEntry<N> affine_entry() {
  static constexpr double c0 = 0.3;
  static constexpr std::array<double, 3> a{0.7, -1.1, 0.4};
  CatalogEntry<N> e;
  e.name = "affine";
  e.probe.value = [](const Point<N>& x) {
    double v = c0;
    for (int k = 0; k < N; ++k) v += a[k] * x[k];
    return v;
  };
  e.probe.gradient = [](const Point<N>&) {
    Point<N> g;
    for (int k = 0; k < N; ++k) g[k] = a[k];
    return g;
  };
  e.probe.hessian = [](const Point<N>&) { return detail::zero_hessian<N>(); };
  e.exact_for = [](Exponent) { return true; };
  return e;
}

/// c1 x^2 + c2 y^2 (with c1 = 1, c2 = 2) or c1 = 1, c2 = -1 for the harmonic entry.
template <int N>
CatalogEntry<N> planar_quadratic_entry(const std::string& name, double c1, double c2) {
  detail::require_planar<N>(name);
  CatalogEntry<N> e;
  e.name = name;
  e.probe.value = [=](const Point<N>& x) { return c1 * x[0] * x[0] + c2 * x[1] * x[1]; };
  e.probe.gradient = [=](const Point<N>& x) {
    Point<N> g{};
    g[0] = 2.0 * c1 * x[0];
    g[1] = 2.0 * c2 * x[1];
    return g;
  };
  e.probe.hessian = [=](const Point<N>&) {
    auto h = detail::zero_hessian<N>();
    h[0][0] = 2.0 * c1;
    h[1][1] = 2.0 * c2;
    return h;
  };
  const bool harmonic = c1 + c2 == 0.0;
  e.exact_for = [harmonic](Exponent p) { return harmonic && !p.is_infinite() && p.value() == 2.0; };
  return e;
}

/// |x|^-alpha about the origin; solves the limit equation for p = (N + alpha)/(alpha + 1)
/// (p = inf when alpha = -1).
template <int N>
CatalogEntry<N> radial_power_entry(double alpha) {
  if (!std::isfinite(alpha) || alpha == 0.0) throw ConfigError("radial_power needs a finite nonzero alpha");
  CatalogEntry<N> e;
  e.name = "radial_power";
  e.probe.value = [=](const Point<N>& x) { return std::pow(norm<N>(x), -alpha); };
  e.probe.gradient = [=](const Point<N>& x) {
    const double r = norm<N>(x);
    const double c = -alpha * std::pow(r, -alpha - 2.0);
    Point<N> g;
    for (int k = 0; k < N; ++k) g[k] = c * x[k];
    return g;
  };
  e.probe.hessian = [=](const Point<N>& x) {
    const double r2 = dot<N>(x, x);
    const double c = -alpha * std::pow(r2, -0.5 * alpha - 1.0);
    detail::Hessian<N> h;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) h[i][j] = c * ((i == j ? 1.0 : 0.0) - (alpha + 2.0) * x[i] * x[j] / r2);
    return h;
  };
  e.exact_for = [=](Exponent p) {
    if (p.is_infinite()) return alpha == -1.0;
    return alpha > -1.0 && std::abs(p.value() - (N + alpha) / (alpha + 1.0)) <= 1e-12 * p.value();
  };
  e.check_domain = [](const Domain<N>& d) {
    if (d.signed_distance(Point<N>{}) >= 0.0) throw ConfigError("radial_power needs a domain excluding the origin");
  };
  return e;
}

template <int N>
CatalogEntry<N> cubic_entry() {
  detail::require_planar<N>("cubic");
  CatalogEntry<N> e;
  e.name = "cubic";
  e.probe.value = [](const Point<N>& x) { return x[0] * x[0] * x[0] - x[1] * x[1] * x[1]; };
  e.probe.gradient = [](const Point<N>& x) {
    Point<N> g{};
    g[0] = 3.0 * x[0] * x[0];
    g[1] = -3.0 * x[1] * x[1];
    return g;
  };
  e.probe.hessian = [](const Point<N>& x) {
    auto h = detail::zero_hessian<N>();
    h[0][0] = 6.0 * x[0];
    h[1][1] = -6.0 * x[1];
    return h;
  };
  e.exact_for = [](Exponent) { return false; };
  return e;
}

/// |x|^(4/3) - |y|^(4/3), infinity-harmonic away from the coordinate axes.
template <int N>
CatalogEntry<N> aronsson_entry() {
  if (N != 2) throw UnsupportedDimension("aronsson is a planar function");
  CatalogEntry<N> e;
  e.name = "aronsson";
  e.probe.value = [](const Point<N>& x) {
    return std::pow(std::abs(x[0]), 4.0 / 3.0) - std::pow(std::abs(x[1]), 4.0 / 3.0);
  };
  e.probe.gradient = [](const Point<N>& x) {
    Point<N> g{};
    g[0] = 4.0 / 3.0 * std::copysign(std::cbrt(std::abs(x[0])), x[0]);
    g[1] = -4.0 / 3.0 * std::copysign(std::cbrt(std::abs(x[1])), x[1]);
    return g;
  };
  e.probe.hessian = [](const Point<N>& x) {
    auto h = detail::zero_hessian<N>();
    h[0][0] = 4.0 / 9.0 / std::cbrt(x[0] * x[0]);
    h[1][1] = -4.0 / 9.0 / std::cbrt(x[1] * x[1]);
    return h;
  };
  e.exact_for = [](Exponent p) { return p.is_infinite(); };
  e.check_domain = [](const Domain<N>& d) {
    const Point<N> lo = d.bbox_lo(), hi = d.bbox_hi();
    const bool crosses = (lo[0] <= 0.0 && hi[0] >= 0.0) || (lo[1] <= 0.0 && hi[1] >= 0.0);
    if (crosses) throw ConfigError("aronsson needs a domain that stays off both coordinate axes");
  };
  return e;
}

template <int N>
CatalogEntry<N> catalog_entry(const std::string& name, double alpha = 1.0) {
  if (name == "constant") return constant_entry<N>();
  if (name == "affine") return affine_entry<N>();
  if (name == "quadratic") return planar_quadratic_entry<N>("quadratic", 1.0, 2.0);
  if (name == "harmonic") return planar_quadratic_entry<N>("harmonic", 1.0, -1.0);
  if (name == "radial_power") return radial_power_entry<N>(alpha);
  if (name == "cubic") return cubic_entry<N>();
  if (name == "aronsson") return aronsson_entry<N>();
  throw ConfigError("unknown catalog entry '" + name + "'");
}

}  // namespace vpharm
