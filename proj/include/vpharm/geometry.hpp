#pragma once

// Bounded domains with exact distance to the boundary, the clamped radius
// r_eps(x) = min(eps, dist(x, boundary)), and boundary-crossing search.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "vpharm/errors.hpp"

namespace vpharm {

template <int N>
using Point = std::array<double, N>;

template <std::size_t N>
std::array<double, N> operator+(const std::array<double, N>& a, const std::array<double, N>& b) {
  std::array<double, N> out;
  for (std::size_t d = 0; d < N; ++d) out[d] = a[d] + b[d];
  return out;
}

template <std::size_t N>
std::array<double, N> operator-(const std::array<double, N>& a, const std::array<double, N>& b) {
  std::array<double, N> out;
  for (std::size_t d = 0; d < N; ++d) out[d] = a[d] - b[d];
  return out;
}

template <std::size_t N>
std::array<double, N> operator*(double s, const std::array<double, N>& a) {
  std::array<double, N> out;
  for (std::size_t d = 0; d < N; ++d) out[d] = s * a[d];
  return out;
}

template <std::size_t N>
double dot(const std::array<double, N>& a, const std::array<double, N>& b) {
  double s = 0.0;
  for (std::size_t d = 0; d < N; ++d) s += a[d] * b[d];
  return s;
}

template <std::size_t N>
double norm(const std::array<double, N>& a) {
  return std::sqrt(dot(a, a));
}

inline void check_dimension(int dim) {
  if (dim < 1 || dim > 3)
    throw UnsupportedDimension("dimension must be 1, 2 or 3, got " + std::to_string(dim));
}

template <int N>
struct RectangleShape {
  Point<N> lo, hi;
};

template <int N>
struct DiskShape {
  Point<N> center;
  double radius;
};

template <int N>
struct AnnulusShape {
  Point<N> center;
  double r_inner, r_outer;
};

/// Simple closed polygon (2-D only); vertices in either orientation.
template <int N>
struct PolygonShape {
  std::vector<Point<N>> vertices;
};

template <int N>
class Domain {
  static_assert(N >= 1 && N <= 3, "supported dimensions are 1, 2, 3");

 public:
  using Shape = std::variant<RectangleShape<N>, DiskShape<N>, AnnulusShape<N>, PolygonShape<N>>;

  static Domain rectangle(Point<N> lo, Point<N> hi) {
    for (int d = 0; d < N; ++d)
      if (!(hi[d] > lo[d])) throw ConfigError("rectangle must have hi > lo on every axis");
    return Domain(RectangleShape<N>{lo, hi});
  }

  static Domain disk(Point<N> center, double radius) {
    if (!(radius > 0.0)) throw ConfigError("disk radius must be positive");
    return Domain(DiskShape<N>{center, radius});
  }

  static Domain annulus(Point<N> center, double r_inner, double r_outer) {
    if (!(r_inner > 0.0 && r_outer > r_inner))
      throw ConfigError("annulus requires 0 < r_inner < r_outer");
    return Domain(AnnulusShape<N>{center, r_inner, r_outer});
  }

  static Domain polygon(std::vector<Point<N>> vertices) {
    if constexpr (N != 2) {
      throw UnsupportedDimension("polygons are two-dimensional");
    } else {
      if (vertices.size() < 3) throw ConfigError("polygon needs at least 3 vertices");
      double area2 = 0.0;
      const std::size_t n = vertices.size();
      for (std::size_t i = 0; i < n; ++i) {
        const auto& a = vertices[i];
        const auto& b = vertices[(i + 1) % n];
        area2 += a[0] * b[1] - b[0] * a[1];
      }
      if (std::abs(area2) <= 0.0) throw ConfigError("polygon has zero area");
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
          if (j == i + 1 || (i == 0 && j == n - 1)) continue;
          if (segments_intersect(vertices[i], vertices[(i + 1) % n], vertices[j],
                                 vertices[(j + 1) % n]))
            throw ConfigError("polygon is not simple");
        }
      Domain out(PolygonShape<N>{std::move(vertices)});
      out.ccw_ = area2 > 0.0;
      return out;
    }
  }

  const Shape& shape() const { return shape_; }

  std::string kind() const {
    switch (shape_.index()) {
      case 0: return "rectangle";
      case 1: return "disk";
      case 2: return "annulus";
      default: return "polygon";
    }
  }

  /// Positive inside, negative outside; |value| is the distance to the boundary.
  double signed_distance(const Point<N>& x) const {
    return std::visit([&](const auto& s) { return signed_distance_impl(s, x); }, shape_);
  }

  /// Slack used for "on the boundary" and "inside the closure" decisions.
  double slack() const { return 1e-12 * std::max(1.0, diameter()); }

  bool in_closure(const Point<N>& x) const { return signed_distance(x) >= -slack(); }

  /// Exact Euclidean distance to the boundary; throws if x is outside the closure.
  double dist_to_boundary(const Point<N>& x) const {
    const double sd = signed_distance(x);
    if (sd < -slack()) throw OutsideDomain("point lies outside the closed domain");
    return std::max(sd, 0.0);
  }

  double r_eps(const Point<N>& x, double eps) const { return std::min(eps, dist_to_boundary(x)); }

  Point<N> bbox_lo() const {
    return std::visit([](const auto& s) { return bbox(s).first; }, shape_);
  }
  Point<N> bbox_hi() const {
    return std::visit([](const auto& s) { return bbox(s).second; }, shape_);
  }

  double diameter() const { return norm<N>(bbox_hi() - bbox_lo()); }

  /// Largest radius of a ball contained in the domain (scanned for polygons).
  double inradius() const {
    switch (shape_.index()) {
      case 0: {
        const auto& r = std::get<0>(shape_);
        double m = std::numeric_limits<double>::infinity();
        for (int d = 0; d < N; ++d) m = std::min(m, 0.5 * (r.hi[d] - r.lo[d]));
        return m;
      }
      case 1: return std::get<1>(shape_).radius;
      case 2: {
        const auto& a = std::get<2>(shape_);
        return 0.5 * (a.r_outer - a.r_inner);
      }
      default: {
        const Point<N> lo = bbox_lo(), hi = bbox_hi();
        double best = 0.0;
        const int n = 400;
        Point<N> x{};
        for (int i = 0; i <= n; ++i)
          for (int j = 0; j <= n; ++j) {
            x[0] = lo[0] + (hi[0] - lo[0]) * i / n;
            if constexpr (N > 1) x[1] = lo[1] + (hi[1] - lo[1]) * j / n;
            best = std::max(best, signed_distance(x));
          }
        return best;
      }
    }
  }

  /// Point on the boundary between `inside` (in the closure) and `outside`.
  Point<N> boundary_crossing(const Point<N>& inside, const Point<N>& outside) const {
    double a = 0.0, b = 1.0;
    for (int it = 0; it < 200 && b - a > 1e-17; ++it) {
      const double m = 0.5 * (a + b);
      if (signed_distance(inside + m * (outside - inside)) >= 0.0) a = m;
      else b = m;
    }
    return inside + a * (outside - inside);
  }

  /// Unit outward normal at a boundary point; at rectangle corners and convex
  /// polygon vertices the normalized sum of the adjacent face normals.
  Point<N> outward_normal(const Point<N>& x0) const {
    if (std::abs(signed_distance(x0)) > 1e-9 * std::max(1.0, diameter()))
      throw OutsideDomain("outward normal requested away from the boundary");
    Point<N> n{};
    switch (shape_.index()) {
      case 0: {
        const auto& r = std::get<0>(shape_);
        const double tol = 1e-9 * std::max(1.0, diameter());
        for (int d = 0; d < N; ++d) {
          if (std::abs(x0[d] - r.lo[d]) <= tol) n[d] -= 1.0;
          if (std::abs(x0[d] - r.hi[d]) <= tol) n[d] += 1.0;
        }
        break;
      }
      case 1: n = x0 - std::get<1>(shape_).center; break;
      case 2: {
        const auto& a = std::get<2>(shape_);
        const Point<N> rel = x0 - a.center;
        const double rho = norm<N>(rel);
        n = std::abs(rho - a.r_outer) < std::abs(rho - a.r_inner) ? rel : (-1.0) * rel;
        break;
      }
      default:
        if constexpr (N == 2) n = polygon_normal(std::get<3>(shape_), x0);
        break;
    }
    const double len = norm<N>(n);
    if (!(len > 0.0)) throw NoExteriorSphere("no outward direction at boundary point");
    return (1.0 / len) * n;
  }

 private:
  explicit Domain(Shape s) : shape_(std::move(s)) {}

  static double signed_distance_impl(const RectangleShape<N>& r, const Point<N>& x) {
    double inside = std::numeric_limits<double>::infinity();
    double outside2 = 0.0;
    for (int d = 0; d < N; ++d) {
      inside = std::min({inside, x[d] - r.lo[d], r.hi[d] - x[d]});
      const double e = std::max({r.lo[d] - x[d], 0.0, x[d] - r.hi[d]});
      outside2 += e * e;
    }
    return outside2 > 0.0 ? -std::sqrt(outside2) : inside;
  }

  static double signed_distance_impl(const DiskShape<N>& s, const Point<N>& x) {
    return s.radius - norm<N>(x - s.center);
  }

  static double signed_distance_impl(const AnnulusShape<N>& s, const Point<N>& x) {
    const double rho = norm<N>(x - s.center);
    return std::min(rho - s.r_inner, s.r_outer - rho);
  }

  static double signed_distance_impl(const PolygonShape<N>& s, const Point<N>& x) {
    if constexpr (N != 2) {
      return 0.0;
    } else {
      const auto& v = s.vertices;
      const std::size_t n = v.size();
      double best = std::numeric_limits<double>::infinity();
      bool inside = false;
      for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        best = std::min(best, segment_distance(x, v[j], v[i]));
        if ((v[i][1] > x[1]) != (v[j][1] > x[1])) {
          const double xc = v[j][0] + (x[1] - v[j][1]) * (v[i][0] - v[j][0]) / (v[i][1] - v[j][1]);
          if (x[0] < xc) inside = !inside;
        }
      }
      return inside ? best : -best;
    }
  }

  static double segment_distance(const Point<N>& x, const Point<N>& a, const Point<N>& b) {
    const Point<N> ab = b - a;
    const double len2 = dot<N>(ab, ab);
    const double t = len2 > 0.0 ? std::clamp(dot<N>(x - a, ab) / len2, 0.0, 1.0) : 0.0;
    return norm<N>(x - (a + t * ab));
  }

  static bool segments_intersect(const Point<N>& a, const Point<N>& b, const Point<N>& c,
                                 const Point<N>& d) {
    auto orient = [](const Point<N>& p, const Point<N>& q, const Point<N>& r) {
      const double v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
      return (v > 0.0) - (v < 0.0);
    };
    const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a),
              o4 = orient(c, d, b);
    return o1 * o2 < 0 && o3 * o4 < 0;
  }

  Point<N> polygon_normal(const PolygonShape<N>& s, const Point<N>& x0) const {
    const auto& v = s.vertices;
    const std::size_t n = v.size();
    const double tol = 1e-9 * std::max(1.0, diameter());
    auto edge_normal = [&](std::size_t i) {
      const Point<N>& a = v[i];
      const Point<N>& b = v[(i + 1) % n];
      Point<N> e = b - a;
      Point<N> out{};
      // Outward normal: right of the edge for counter-clockwise polygons.
      out[0] = ccw_ ? e[1] : -e[1];
      out[1] = ccw_ ? -e[0] : e[0];
      return (1.0 / norm<N>(out)) * out;
    };
    for (std::size_t i = 0; i < n; ++i) {
      if (norm<N>(x0 - v[i]) <= tol) {
        const std::size_t prev = (i + n - 1) % n;
        const Point<N> e1 = v[i] - v[prev];
        const Point<N> e2 = v[(i + 1) % n] - v[i];
        const double cross = e1[0] * e2[1] - e1[1] * e2[0];
        const bool convex = ccw_ ? cross > 0.0 : cross < 0.0;
        if (!convex) throw NoExteriorSphere("reflex polygon vertex has no exterior sphere");
        return edge_normal(prev) + edge_normal(i);
      }
    }
    for (std::size_t i = 0; i < n; ++i)
      if (segment_distance(x0, v[i], v[(i + 1) % n]) <= tol) return edge_normal(i);
    throw OutsideDomain("point is not on the polygon boundary");
  }

  static std::pair<Point<N>, Point<N>> bbox(const RectangleShape<N>& r) { return {r.lo, r.hi}; }
  static std::pair<Point<N>, Point<N>> bbox(const DiskShape<N>& s) {
    Point<N> lo, hi;
    for (int d = 0; d < N; ++d) {
      lo[d] = s.center[d] - s.radius;
      hi[d] = s.center[d] + s.radius;
    }
    return {lo, hi};
  }
  static std::pair<Point<N>, Point<N>> bbox(const AnnulusShape<N>& s) {
    return bbox(DiskShape<N>{s.center, s.r_outer});
  }
  static std::pair<Point<N>, Point<N>> bbox(const PolygonShape<N>& s) {
    Point<N> lo, hi;
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (const auto& p : s.vertices)
      for (int d = 0; d < N; ++d) {
        lo[d] = std::min(lo[d], p[d]);
        hi[d] = std::max(hi[d], p[d]);
      }
    return {lo, hi};
  }

  Shape shape_;
  bool ccw_ = true;
};

}  // namespace vpharm
