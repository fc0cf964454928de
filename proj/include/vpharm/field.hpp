#pragma once

// Lattice discretization of a closed domain and grid functions on it.
//
// Every lattice node of the bounding box is classified as interior, on the
// boundary (within the domain slack) or exterior. Boundary samples are the
// on-boundary nodes plus the points where Γ crosses lattice edges joining an
// interior node to an exterior one. Edges include the cell diagonals used by
// the Kuhn (Freudenthal) triangulation so that cut cells can be interpolated
// from interior nodes and boundary samples only.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vpharm/errors.hpp"
#include "vpharm/geometry.hpp"

namespace vpharm {

enum class NodeKind : std::uint8_t { interior, on_boundary, exterior };

struct StencilTerm {
  std::int32_t slot;
  double weight;
};

template <int N>
class Grid {
 public:
  static constexpr int corners = 1 << N;

  Grid(Domain<N> domain, double h) : domain_(std::move(domain)), h_(h) {
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("grid spacing must be positive");
    origin_ = domain_.bbox_lo();
    const Point<N> hi = domain_.bbox_hi();
    inv_h_ = 1.0 / h_;
    std::int64_t total = 1;
    for (int d = 0; d < N; ++d) {
      std::int64_t n = std::llround((hi[d] - origin_[d]) / h_) + 1;
      if (origin_[d] + (n - 1) * h_ < hi[d] - domain_.slack()) ++n;
      if (n < 2) n = 2;
      shape_[d] = n;
      total *= n;
    }
    for (int d = 0; d < N; ++d) stride_[d] = d == 0 ? 1 : stride_[d - 1] * shape_[d - 1];
    for (int m = 0; m < corners; ++m) {
      std::int64_t off = 0;
      for (int d = 0; d < N; ++d)
        if (m & (1 << d)) off += stride_[d];
      corner_offset_[m] = off;
    }
    classify(total);
    if (interior_nodes_.empty()) throw ConfigError("grid has no interior node; refine h");
  }

  const Domain<N>& domain() const { return domain_; }
  double spacing() const { return h_; }
  const Point<N>& origin() const { return origin_; }
  const std::array<std::int64_t, N>& shape() const { return shape_; }
  std::size_t lattice_size() const { return kind_.size(); }

  std::size_t interior_count() const { return interior_nodes_.size(); }
  std::size_t boundary_count() const { return boundary_points_.size(); }
  std::size_t slot_count() const { return interior_count() + boundary_count(); }

  NodeKind kind(std::int64_t lin) const { return kind_[lin]; }
  std::int32_t slot_of(std::int64_t lin) const { return slot_[lin]; }
  std::int64_t interior_node(std::size_t i) const { return interior_nodes_[i]; }
  const std::vector<Point<N>>& boundary_points() const { return boundary_points_; }

  std::array<std::int64_t, N> multi_index(std::int64_t lin) const {
    std::array<std::int64_t, N> idx;
    for (int d = 0; d < N; ++d) {
      idx[d] = lin % shape_[d];
      lin /= shape_[d];
    }
    return idx;
  }

  Point<N> node_point(std::int64_t lin) const {
    const auto idx = multi_index(lin);
    Point<N> x;
    for (int d = 0; d < N; ++d) x[d] = origin_[d] + static_cast<double>(idx[d]) * h_;
    return x;
  }

  Point<N> interior_point(std::size_t i) const { return node_point(interior_nodes_[i]); }

  /// Location of the value stored in `slot`.
  Point<N> slot_point(std::size_t slot) const {
    return slot < interior_count() ? interior_point(slot)
                                   : boundary_points_[slot - interior_count()];
  }

  bool same_layout(const Grid& other) const {
    return h_ == other.h_ && origin_ == other.origin_ && shape_ == other.shape_ &&
           interior_count() == other.interior_count() && boundary_count() == other.boundary_count();
  }

  /// Cell (by lowest corner) containing x and local coordinates in [0,1]^N.
  std::int64_t locate(const Point<N>& x, Point<N>& t) const {
    std::int64_t cell = 0;
    for (int d = 0; d < N; ++d) {
      const double s = (x[d] - origin_[d]) * inv_h_;
      // Truncation equals floor for s >= 0, and negative s is clamped to cell 0.
      const std::int64_t k = std::clamp<std::int64_t>(static_cast<std::int64_t>(s), 0, shape_[d] - 2);
      t[d] = std::clamp(s - static_cast<double>(k), 0.0, 1.0);
      cell += k * stride_[d];
    }
    return cell;
  }

  bool cell_full(std::int64_t cell) const { return full_[cell] != 0; }

  /// Multilinear interpolation over a full cell from values stored per lattice node.
  double multilinear(std::span<const double> lattice, std::int64_t cell, const Point<N>& t) const {
    if constexpr (N == 2) {
      const double* base = lattice.data() + cell;
      const double v00 = base[0], v10 = base[1];
      const double v01 = base[stride_[1]], v11 = base[stride_[1] + 1];
      const double a = v00 + t[0] * (v10 - v00);
      const double b = v01 + t[0] * (v11 - v01);
      return a + t[1] * (b - a);
    } else {
      double acc = 0.0;
      for (int m = 0; m < corners; ++m) {
        double w = 1.0;
        for (int d = 0; d < N; ++d) w *= (m & (1 << d)) ? t[d] : 1.0 - t[d];
        acc += w * lattice[cell + corner_offset_[m]];
      }
      return acc;
    }
  }

  /// Convex interpolation weights on value slots for a point of the closure.
  void stencil(const Point<N>& x, std::vector<StencilTerm>& out) const {
    Point<N> t;
    const std::int64_t cell = locate(x, t);
    out.clear();
    if (cell_full(cell)) {
      for (int m = 0; m < corners; ++m) {
        double w = 1.0;
        for (int d = 0; d < N; ++d) w *= (m & (1 << d)) ? t[d] : 1.0 - t[d];
        if (w > 0.0) out.push_back({slot_[cell + corner_offset_[m]], w});
      }
      if (out.empty()) out.push_back({slot_[cell], 1.0});
      return;
    }
    cut_stencil(x, cell, t, out);
  }

  /// Interpolated value at x, which must lie in the closure of the domain.
  double interpolate(std::span<const double> values, const Point<N>& x) const {
    if (!domain_.in_closure(x)) throw OutsidePoint("interpolation point outside the domain");
    thread_local std::vector<StencilTerm> terms;
    stencil(x, terms);
    double acc = 0.0;
    for (const auto& term : terms) acc += term.weight * values[term.slot];
    return acc;
  }

  /// Copies slot values onto the lattice; exterior nodes receive 0.
  void scatter(std::span<const double> values, std::span<double> lattice) const {
    for (std::size_t lin = 0; lin < kind_.size(); ++lin)
      lattice[lin] = slot_[lin] >= 0 ? values[slot_[lin]] : 0.0;
  }

  /// Interpolation in cells with at least one exterior corner: linear on the
  /// Kuhn simplex containing x, clipped at the boundary samples on its edges.
  void cut_stencil(const Point<N>& x, std::int64_t cell, const Point<N>& t,
                   std::vector<StencilTerm>& out) const {
    out.clear();
    std::array<int, N> perm;
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) { return t[a] > t[b]; });
    std::array<std::int64_t, N + 1> vlin;
    std::array<double, N + 1> lam;
    vlin[0] = cell;
    for (int k = 1; k <= N; ++k) vlin[k] = vlin[k - 1] + stride_[perm[k - 1]];
    lam[0] = 1.0 - t[perm[0]];
    for (int k = 1; k < N; ++k) lam[k] = t[perm[k - 1]] - t[perm[k]];
    lam[N] = t[perm[N - 1]];

    std::array<int, N + 1> known{}, unknown{};
    int nk = 0, nu = 0;
    double theta = 0.0;
    for (int k = 0; k <= N; ++k) {
      if (slot_[vlin[k]] >= 0) {
        known[nk++] = k;
      } else {
        unknown[nu++] = k;
        theta += lam[k];
      }
    }
    if (nk == 0) return nearest_boundary(x, cell, out);
    if (theta <= 0.0) {
      for (int i = 0; i < nk; ++i)
        if (lam[known[i]] > 0.0) out.push_back({slot_[vlin[known[i]]], lam[known[i]]});
      return;
    }

    std::array<double, N + 1> aw{};
    Point<N> a{};
    const bool degenerate = 1.0 - theta <= 1e-12;
    for (int i = 0; i < nk; ++i) {
      const int k = known[i];
      aw[i] = degenerate ? 1.0 / nk : lam[k] / (1.0 - theta);
      a = a + aw[i] * node_point(vlin[k]);
    }

    // Boundary samples on the simplex edges joining known and exterior vertices.
    std::vector<std::int32_t> cs;
    std::vector<Point<N>> cp;
    for (int i = 0; i < nk; ++i)
      for (int j = 0; j < nu; ++j) {
        const int k = known[i], u = unknown[j];
        std::int32_t s;
        if (kind_[vlin[k]] == NodeKind::on_boundary) {
          s = slot_[vlin[k]];
        } else {
          const int lo = std::min(k, u), hi = std::max(k, u);
          std::uint64_t mask = 0;
          for (int l = lo; l < hi; ++l) mask |= 1u << perm[l];
          const auto it = crossing_.find(edge_key(vlin[lo], mask));
          if (it == crossing_.end()) return nearest_boundary(x, cell, out);
          s = it->second;
        }
        cs.push_back(s);
        cp.push_back(slot_point(s));
      }

    const Point<N> dir = x - a;
    if (norm<N>(dir) <= 1e-14 * h_) {
      for (int i = 0; i < nk; ++i)
        if (aw[i] > 0.0) out.push_back({slot_[vlin[known[i]]], aw[i]});
      return;
    }

    // Facets of the clipped interface, each with N crossing points.
    std::vector<std::array<int, N>> facets;
    if (static_cast<int>(cs.size()) == N) {
      std::array<int, N> f;
      std::iota(f.begin(), f.end(), 0);
      facets.push_back(f);
    } else if constexpr (N == 3) {
      if (cs.size() == 4) {
        facets.push_back({0, 1, 3});
        facets.push_back({0, 3, 2});
      }
    }
    std::array<double, N> mu{};
    std::array<int, N> facet{};
    bool found = false;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& f : facets) {
      std::array<double, N> m;
      if (!line_facet(a, dir, cp, f, m)) continue;
      const double worst = *std::min_element(m.begin(), m.end());
      if (worst > best) {
        best = worst;
        mu = m;
        facet = f;
        found = true;
      }
    }
    if (!found) {
      facet = facets.empty() ? std::array<int, N>{} : facets.front();
      mu.fill(1.0 / N);
    }
    double msum = 0.0;
    for (double& m : mu) {
      m = std::max(m, 0.0);
      msum += m;
    }
    if (!(msum > 0.0)) {
      mu.fill(1.0 / N);
      msum = 1.0;
    }
    Point<N> c{};
    for (int i = 0; i < N; ++i) {
      mu[i] /= msum;
      c = c + mu[i] * cp[facet[i]];
    }
    const Point<N> ac = c - a;
    const double len2 = dot<N>(ac, ac);
    const double tau = len2 > 0.0 ? std::clamp(dot<N>(dir, ac) / len2, 0.0, 1.0) : 1.0;
    for (int i = 0; i < nk; ++i)
      if (aw[i] > 0.0 && tau < 1.0) out.push_back({slot_[vlin[known[i]]], (1.0 - tau) * aw[i]});
    for (int i = 0; i < N; ++i)
      if (mu[i] > 0.0 && tau > 0.0) out.push_back({cs[facet[i]], tau * mu[i]});
  }

 private:
  static std::uint64_t edge_key(std::int64_t lin, std::uint64_t mask) {
    return static_cast<std::uint64_t>(lin) * 8u + mask;
  }

  void classify(std::int64_t total) {
    kind_.resize(total);
    slot_.assign(total, -1);
    const double slack = domain_.slack();
    for (std::int64_t lin = 0; lin < total; ++lin) {
      const double sd = domain_.signed_distance(node_point(lin));
      kind_[lin] = sd > slack ? NodeKind::interior
                              : (sd >= -slack ? NodeKind::on_boundary : NodeKind::exterior);
      if (kind_[lin] == NodeKind::interior) {
        slot_[lin] = static_cast<std::int32_t>(interior_nodes_.size());
        interior_nodes_.push_back(lin);
      }
    }
    const auto base = static_cast<std::int32_t>(interior_nodes_.size());
    for (std::int64_t lin = 0; lin < total; ++lin) {
      if (kind_[lin] == NodeKind::on_boundary) {
        slot_[lin] = base + static_cast<std::int32_t>(boundary_points_.size());
        boundary_points_.push_back(node_point(lin));
      }
      const auto idx = multi_index(lin);
      for (std::uint64_t mask = 1; mask < static_cast<std::uint64_t>(corners); ++mask) {
        std::int64_t other = lin;
        bool inside = true;
        for (int d = 0; d < N; ++d)
          if (mask & (1u << d)) {
            if (idx[d] + 1 >= shape_[d]) inside = false;
            other += stride_[d];
          }
        if (!inside) continue;
        const NodeKind ka = kind_[lin], kb = kind_[other];
        const bool cross = (ka == NodeKind::interior && kb == NodeKind::exterior) ||
                           (ka == NodeKind::exterior && kb == NodeKind::interior);
        if (!cross) continue;
        const Point<N> pa = node_point(lin), pb = node_point(other);
        const Point<N> cpt = ka == NodeKind::interior ? domain_.boundary_crossing(pa, pb)
                                                      : domain_.boundary_crossing(pb, pa);
        crossing_.emplace(edge_key(lin, mask),
                          base + static_cast<std::int32_t>(boundary_points_.size()));
        boundary_points_.push_back(cpt);
      }
    }
    full_.assign(total, 0);
    for (std::int64_t lin = 0; lin < total; ++lin) {
      const auto idx = multi_index(lin);
      bool ok = true;
      for (int d = 0; d < N; ++d) ok = ok && idx[d] + 1 < shape_[d];
      if (!ok) continue;
      for (int m = 0; m < corners && ok; ++m) ok = slot_[lin + corner_offset_[m]] >= 0;
      full_[lin] = ok ? 1 : 0;
    }
    for (std::size_t b = 0; b < boundary_points_.size(); ++b) {
      Point<N> t;
      cell_boundary_[locate(boundary_points_[b], t)].push_back(base + static_cast<std::int32_t>(b));
    }
  }

  // Fallback for slivers of the domain inside a cell with no known simplex vertex.
  void nearest_boundary(const Point<N>& x, std::int64_t cell, std::vector<StencilTerm>& out) const {
    out.clear();
    const auto idx = multi_index(cell);
    double best = std::numeric_limits<double>::infinity();
    std::int32_t pick = -1;
    auto consider = [&](std::int32_t s) {
      const double dist = norm<N>(slot_point(s) - x);
      if (dist < best || (dist == best && s < pick)) {
        best = dist;
        pick = s;
      }
    };
    for (int m = 0; m < static_cast<int>(std::pow(3, N)); ++m) {
      std::int64_t lin = 0;
      bool ok = true;
      int code = m;
      for (int d = 0; d < N; ++d) {
        const std::int64_t j = idx[d] + (code % 3) - 1;
        code /= 3;
        if (j < 0 || j >= shape_[d]) ok = false;
        lin += j * stride_[d];
      }
      if (!ok) continue;
      const auto it = cell_boundary_.find(lin);
      if (it == cell_boundary_.end()) continue;
      for (std::int32_t s : it->second) consider(s);
    }
    if (pick < 0)
      for (std::size_t b = 0; b < boundary_points_.size(); ++b)
        consider(static_cast<std::int32_t>(interior_count() + b));
    if (pick < 0) throw OutsidePoint("no boundary sample available near interpolation point");
    out.push_back({pick, 1.0});
  }

  // Solves a + s*dir = sum mu_i C_i with sum mu_i = 1.
  static bool line_facet(const Point<N>& a, const Point<N>& dir, const std::vector<Point<N>>& cp,
                         const std::array<int, N>& f, std::array<double, N>& mu) {
    constexpr int M = N + 1;
    double A[M][M + 1];
    for (int r = 0; r < N; ++r) {
      A[r][0] = dir[r];
      for (int i = 0; i < N; ++i) A[r][1 + i] = -cp[f[i]][r];
      A[r][M] = -a[r];
    }
    A[N][0] = 0.0;
    for (int i = 0; i < N; ++i) A[N][1 + i] = 1.0;
    A[N][M] = 1.0;
    double scale = 0.0;
    for (int r = 0; r < M; ++r)
      for (int c = 0; c < M; ++c) scale = std::max(scale, std::abs(A[r][c]));
    for (int col = 0; col < M; ++col) {
      int piv = col;
      for (int r = col + 1; r < M; ++r)
        if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
      if (std::abs(A[piv][col]) <= 1e-13 * scale) return false;
      if (piv != col)
        for (int c = 0; c <= M; ++c) std::swap(A[piv][c], A[col][c]);
      for (int r = 0; r < M; ++r) {
        if (r == col) continue;
        const double factor = A[r][col] / A[col][col];
        for (int c = col; c <= M; ++c) A[r][c] -= factor * A[col][c];
      }
    }
    for (int i = 0; i < N; ++i) mu[i] = A[1 + i][M] / A[1 + i][1 + i];
    return true;
  }

  Domain<N> domain_;
  double h_;
  double inv_h_ = 0.0;
  Point<N> origin_{};
  std::array<std::int64_t, N> shape_{}, stride_{};
  std::array<std::int64_t, corners> corner_offset_{};
  std::vector<NodeKind> kind_;
  std::vector<std::int32_t> slot_;
  std::vector<std::uint8_t> full_;
  std::vector<std::int64_t> interior_nodes_;
  std::vector<Point<N>> boundary_points_;
  std::unordered_map<std::uint64_t, std::int32_t> crossing_;
  std::unordered_map<std::int64_t, std::vector<std::int32_t>> cell_boundary_;
};

template <int N>
using GridPtr = std::shared_ptr<const Grid<N>>;

template <int N>
GridPtr<N> make_grid(Domain<N> domain, double h) {
  return std::make_shared<const Grid<N>>(std::move(domain), h);
}

/// Values on interior nodes followed by the boundary trace.
template <int N>
class GridField {
 public:
  GridField() = default;
  explicit GridField(GridPtr<N> grid, double fill = std::numeric_limits<double>::quiet_NaN())
      : grid_(std::move(grid)), values_(grid_->slot_count(), fill) {}

  template <class F>
  static GridField from_function(GridPtr<N> grid, F&& f) {
    GridField out(std::move(grid));
    for (std::size_t s = 0; s < out.values_.size(); ++s) out.values_[s] = f(out.grid_->slot_point(s));
    return out;
  }

  const Grid<N>& grid() const { return *grid_; }
  const GridPtr<N>& grid_ptr() const { return grid_; }

  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> interior_values() { return std::span<double>(values_).first(grid_->interior_count()); }
  std::span<const double> interior_values() const {
    return std::span<const double>(values_).first(grid_->interior_count());
  }
  std::span<double> boundary_trace() { return std::span<double>(values_).subspan(grid_->interior_count()); }
  std::span<const double> boundary_trace() const {
    return std::span<const double>(values_).subspan(grid_->interior_count());
  }

  double& operator[](std::size_t slot) { return values_[slot]; }
  double operator[](std::size_t slot) const { return values_[slot]; }

  double interpolate(const Point<N>& x) const { return grid_->interpolate(values_, x); }

 private:
  GridPtr<N> grid_;
  std::vector<double> values_;
};

template <int N>
void require_same_grid(const GridField<N>& a, const GridField<N>& b) {
  if (a.grid_ptr() != b.grid_ptr() && !a.grid().same_layout(b.grid()))
    throw GridMismatch("fields live on different grids");
}

/// max |f1 - f2| over interior nodes and boundary samples.
template <int N>
double sup_diff(const GridField<N>& f1, const GridField<N>& f2) {
  require_same_grid(f1, f2);
  double m = 0.0;
  for (std::size_t s = 0; s < f1.size(); ++s) m = std::max(m, std::abs(f1[s] - f2[s]));
  return m;
}

/// Field with g sampled on the boundary and NaN on interior nodes.
template <int N, class G>
GridField<N> boundary_trace_from(G&& g, GridPtr<N> grid) {
  GridField<N> out(std::move(grid));
  const auto& pts = out.grid().boundary_points();
  auto trace = out.boundary_trace();
  for (std::size_t b = 0; b < pts.size(); ++b) trace[b] = g(pts[b]);
  return out;
}

/// CSV with header x[,y[,z]],u; interior nodes first, then boundary samples.
template <int N>
void write_csv(const GridField<N>& f, std::ostream& os) {
  static const char* names[] = {"x", "y", "z"};
  for (int d = 0; d < N; ++d) os << names[d] << ',';
  os << "u\n";
  char buf[32];
  for (std::size_t s = 0; s < f.size(); ++s) {
    const Point<N> x = f.grid().slot_point(s);
    for (int d = 0; d < N; ++d) {
      std::snprintf(buf, sizeof buf, "%.17g", x[d]);
      os << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", f[s]);
    os << buf << '\n';
  }
}

}  // namespace vpharm
