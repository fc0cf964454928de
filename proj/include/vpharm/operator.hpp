#pragma once

// The ball-averaging operator mu_p^eps, the baseline mean eta_p^eps, the
// game-theoretic p-Laplacian of analytic probes and the residual map A_eps.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "vpharm/errors.hpp"
#include "vpharm/field.hpp"
#include "vpharm/geometry.hpp"
#include "vpharm/parallel.hpp"
#include "vpharm/pmean.hpp"
#include "vpharm/quadrature.hpp"

namespace vpharm {

template <int N>
struct OperatorConfig {
  Exponent p = Exponent::finite(2.0);
  double eps = 0.1;
  BallQuadrature<N> quadrature = build_ball_quadrature<N>();
  /// Relative p-mean tolerance: each node solves to pmean_tol * max(1, sample spread).
  double pmean_tol = 1e-13;

  void validate() const {
    if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("eps must be positive");
    if (!(pmean_tol > 0.0)) throw ConfigError("pmean_tol must be positive");
    if (quadrature.size() == 0) throw ConfigError("empty ball quadrature");
  }
};

/// Coefficient c in A_eps = c * (s - mu) / r^2, i.e. 2(N+p)eps/p; 2 eps for p = inf.
template <int N>
double residual_prefactor(const OperatorConfig<N>& cfg) {
  return 2.0 * cfg.eps / cfg.p.amvp_fraction(N);
}

namespace detail {

template <int N>
inline Point<N> ball_point(const Point<N>& x, double r, const Point<N>& z) {
  Point<N> y;
  for (int d = 0; d < N; ++d) y[d] = x[d] + r * z[d];
  return y;
}

inline double node_mean(std::span<const double> samples, std::span<const double> weights,
                        Exponent p, double rel_tol, double guess) {
  double lo = samples[0], hi = samples[0];
  for (double s : samples) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return pmean_kernel(samples, weights, p, rel_tol * std::max(1.0, hi - lo), guess).nu;
}

inline double eta_mean(std::span<const double> samples, std::span<const double> weights, Exponent p,
                       int dim) {
  const double q = p.value();
  double mean = 0.0, lo = samples[0], hi = samples[0];
  for (std::size_t k = 0; k < samples.size(); ++k) {
    mean += weights[k] * samples[k];
    lo = std::min(lo, samples[k]);
    hi = std::max(hi, samples[k]);
  }
  return (dim + 2.0) / (dim + q) * mean + (q - 2.0) / (2.0 * (dim + q)) * (hi + lo);
}

}  // namespace detail

enum class MeanKind { mu, eta };

/// mu_p^eps (or eta_p^eps) on a fixed grid. Radii and the interpolation
/// stencils of quadrature points that fall in cut cells are precomputed;
/// points in full cells are interpolated on the fly.
template <int N>
class BallOperator {
 public:
  BallOperator(OperatorConfig<N> cfg, GridPtr<N> grid, unsigned threads = 0)
      : cfg_(std::move(cfg)), grid_(std::move(grid)), threads_(resolve_threads(threads)) {
    cfg_.validate();
    const Grid<N>& g = *grid_;
    const std::size_t n = g.interior_count();
    centers_.resize(n);
    radius_.resize(n);
    cut_begin_.resize(n + 1);
    std::vector<StencilTerm> terms;
    for (std::size_t i = 0; i < n; ++i) {
      centers_[i] = g.interior_point(i);
      radius_[i] = g.domain().r_eps(centers_[i], cfg_.eps);
      cut_begin_[i] = cut_ranges_.size();
      for (const auto& z : cfg_.quadrature.offsets) {
        const Point<N> y = detail::ball_point<N>(centers_[i], radius_[i], z);
        Point<N> t;
        const std::int64_t cell = g.locate(y, t);
        if (g.cell_full(cell)) continue;
        g.cut_stencil(y, cell, t, terms);
        const std::size_t begin = cut_terms_.size();
        cut_terms_.insert(cut_terms_.end(), terms.begin(), terms.end());
        cut_ranges_.push_back({static_cast<std::uint32_t>(begin),
                               static_cast<std::uint32_t>(cut_terms_.size())});
      }
    }
    cut_begin_[n] = cut_ranges_.size();
  }

  const OperatorConfig<N>& config() const { return cfg_; }
  const Grid<N>& grid() const { return *grid_; }
  const GridPtr<N>& grid_ptr() const { return grid_; }
  unsigned threads() const { return threads_; }
  double radius(std::size_t i) const { return radius_[i]; }
  double min_radius() const { return *std::min_element(radius_.begin(), radius_.end()); }
  std::size_t cut_sample_count() const { return cut_ranges_.size(); }

  /// out = mean[in] on interior slots; boundary slots are copied.
  void apply(std::span<const double> in, std::span<double> out, MeanKind kind = MeanKind::mu) const {
    if (kind == MeanKind::eta && cfg_.p.is_infinite())
      throw UnsupportedP("the baseline mean needs a finite exponent");
    const Grid<N>& g = *grid_;
    std::vector<double> lattice(g.lattice_size());
    g.scatter(in, lattice);
    const std::size_t n = g.interior_count();
    std::copy(in.begin() + n, in.end(), out.begin() + n);
    parallel_for(n, threads_, [&](std::size_t i) {
      thread_local std::vector<double> samples;
      out[i] = node_update(lattice, in, i, kind, in[i], samples);
    });
  }

  GridField<N> apply_mu(const GridField<N>& f) const { return apply_field(f, MeanKind::mu); }
  GridField<N> apply_eta(const GridField<N>& f) const { return apply_field(f, MeanKind::eta); }

  struct SweepStats {
    double max_change = 0.0;
    double min_delta = 0.0;
    double max_delta = 0.0;
  };

  /// One in-place Gauss–Seidel sweep over interior nodes in lattice order.
  SweepStats gauss_seidel(std::span<double> values) const {
    const Grid<N>& g = *grid_;
    std::vector<double> lattice(g.lattice_size());
    g.scatter(values, lattice);
    std::vector<double> samples;
    SweepStats st;
    st.min_delta = std::numeric_limits<double>::infinity();
    st.max_delta = -st.min_delta;
    for (std::size_t i = 0; i < g.interior_count(); ++i) {
      const double old = values[i];
      const double nu = node_update(lattice, values, i, MeanKind::mu, old, samples);
      values[i] = nu;
      lattice[g.interior_node(i)] = nu;
      const double delta = nu - old;
      st.max_change = std::max(st.max_change, std::abs(delta));
      st.min_delta = std::min(st.min_delta, delta);
      st.max_delta = std::max(st.max_delta, delta);
    }
    return st;
  }

  /// Sample values of the field on the quadrature ball of interior node i.
  void gather(std::span<const double> lattice, std::span<const double> values, std::size_t i,
              std::vector<double>& samples) const {
    const Grid<N>& g = *grid_;
    const auto& q = cfg_.quadrature;
    samples.resize(q.size());
    std::size_t cut = cut_begin_[i];
    const Point<N>& x = centers_[i];
    const double r = radius_[i];
    for (std::size_t k = 0; k < q.size(); ++k) {
      const Point<N> y = detail::ball_point<N>(x, r, q.offsets[k]);
      Point<N> t;
      const std::int64_t cell = g.locate(y, t);
      if (g.cell_full(cell)) {
        samples[k] = g.multilinear(lattice, cell, t);
      } else {
        const auto [b, e] = cut_ranges_[cut++];
        double acc = 0.0;
        for (std::uint32_t j = b; j < e; ++j) acc += cut_terms_[j].weight * values[cut_terms_[j].slot];
        samples[k] = acc;
      }
    }
  }

 private:
  struct Range {
    std::uint32_t begin, end;
  };

  double node_update(std::span<const double> lattice, std::span<const double> values, std::size_t i,
                     MeanKind kind, double guess, std::vector<double>& samples) const {
    gather(lattice, values, i, samples);
    const auto& w = cfg_.quadrature.weights;
    if (kind == MeanKind::eta) return detail::eta_mean(samples, w, cfg_.p, N);
    try {
      return detail::node_mean(samples, w, cfg_.p, cfg_.pmean_tol, guess);
    } catch (const NonConvergence& e) {
      std::string where;
      for (int d = 0; d < N; ++d) where += (d ? "," : "") + std::to_string(centers_[i][d]);
      throw NonConvergence(std::string(e.what()) + " at node (" + where + ")");
    }
  }

  GridField<N> apply_field(const GridField<N>& f, MeanKind kind) const {
    if (f.grid_ptr() != grid_ && !f.grid().same_layout(*grid_))
      throw GridMismatch("field and operator use different grids");
    GridField<N> out(grid_);
    apply(f.values(), out.values(), kind);
    return out;
  }

  OperatorConfig<N> cfg_;
  GridPtr<N> grid_;
  unsigned threads_;
  std::vector<Point<N>> centers_;
  std::vector<double> radius_;
  std::vector<std::size_t> cut_begin_;
  std::vector<Range> cut_ranges_;
  std::vector<StencilTerm> cut_terms_;
};

template <int N>
GridField<N> apply_mu(const OperatorConfig<N>& cfg, const GridField<N>& f) {
  return BallOperator<N>(cfg, f.grid_ptr()).apply_mu(f);
}

template <int N>
GridField<N> apply_eta(const OperatorConfig<N>& cfg, const GridField<N>& f) {
  return BallOperator<N>(cfg, f.grid_ptr()).apply_eta(f);
}

/// mu (or eta) of an analytic function over the quadrature ball of radius r at x.
template <int N, class F>
double mean_of_function(const OperatorConfig<N>& cfg, F&& phi, const std::type_identity_t<Point<N>>& x, double r,
                        MeanKind kind = MeanKind::mu) {
  if (kind == MeanKind::eta && cfg.p.is_infinite())
    throw UnsupportedP("the baseline mean needs a finite exponent");
  if (r <= 0.0) return phi(x);
  const auto& q = cfg.quadrature;
  std::vector<double> samples(q.size());
  for (std::size_t k = 0; k < q.size(); ++k) samples[k] = phi(detail::ball_point<N>(x, r, q.offsets[k]));
  if (kind == MeanKind::eta) return detail::eta_mean(samples, q.weights, cfg.p, N);
  return detail::node_mean(samples, q.weights, cfg.p, cfg.pmean_tol,
                           std::numeric_limits<double>::quiet_NaN());
}

template <int N, class F>
double mu_of_function(const OperatorConfig<N>& cfg, F&& phi, const std::type_identity_t<Point<N>>& x, double r) {
  return mean_of_function(cfg, std::forward<F>(phi), x, r, MeanKind::mu);
}

/// mu_p^eps[f](x) at an arbitrary point of the closure, sampling f by interpolation.
template <int N>
double mu_at_point(const OperatorConfig<N>& cfg, const GridField<N>& f, const std::type_identity_t<Point<N>>& x) {
  const double r = f.grid().domain().r_eps(x, cfg.eps);
  return mu_of_function(cfg, [&](const Point<N>& y) { return f.interpolate(y); }, x, r);
}

/// Analytic C^2 test function.
template <int N>
struct SmoothProbe {
  std::function<double(const Point<N>&)> value;
  std::function<Point<N>(const Point<N>&)> gradient;
  std::function<std::array<Point<N>, N>(const Point<N>&)> hessian;

  /// Largest mismatch between the analytic derivatives and central differences
  /// of step h, relative to max(1, |analytic|).
  double consistency_error(const Point<N>& x, double h = 1e-5) const {
    const Point<N> g = gradient(x);
    const auto H = hessian(x);
    double worst = 0.0;
    for (int d = 0; d < N; ++d) {
      Point<N> xp = x, xm = x;
      xp[d] += h;
      xm[d] -= h;
      const double fd = (value(xp) - value(xm)) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - g[d]) / std::max(1.0, std::abs(g[d])));
      const Point<N> gp = gradient(xp), gm = gradient(xm);
      for (int e = 0; e < N; ++e) {
        const double hd = (gp[e] - gm[e]) / (2.0 * h);
        worst = std::max(worst, std::abs(hd - H[e][d]) / std::max(1.0, std::abs(H[e][d])));
      }
    }
    return worst;
  }

  void validate(const Point<N>& x, double tol = 1e-5) const {
    if (!value || !gradient || !hessian) throw ConfigError("probe is missing a callable");
    const double err = consistency_error(x);
    if (!(err <= tol))
      throw ConfigError("probe derivatives disagree with finite differences (" + std::to_string(err) + ")");
  }
};

/// Game-theoretic p-Laplacian: (tr H + (p-2) <H g, g>/|g|^2)/p; <H g, g>/|g|^2 for p = inf.
template <int N>
double gtp_laplacian(const SmoothProbe<N>& probe, const std::type_identity_t<Point<N>>& x, Exponent p) {
  const Point<N> g = probe.gradient(x);
  const double g2 = dot(g, g);
  if (!(std::sqrt(g2) > 1e-10)) throw VanishingGradient("gradient vanishes at the probe point");
  const auto H = probe.hessian(x);
  double trace = 0.0, quad = 0.0;
  for (int i = 0; i < N; ++i) {
    trace += H[i][i];
    for (int j = 0; j < N; ++j) quad += g[i] * H[i][j] * g[j];
  }
  quad /= g2;
  if (p.is_infinite()) return quad;
  const double q = p.value();
  return (trace + (q - 2.0) * quad) / q;
}

/// Limit of the AMVP ratio: p/(2(N+p)) * Delta_p^G phi(x) (1/2 Delta_inf phi for p = inf).
template <int N>
double amvp_target(const SmoothProbe<N>& probe, const std::type_identity_t<Point<N>>& x, Exponent p) {
  return 0.5 * p.amvp_fraction(N) * gtp_laplacian(probe, x, p);
}

/// (mu_p^eps[phi](x) - phi(x)) / r_eps(x)^2 with phi sampled exactly on the quadrature.
template <int N>
double amvp_ratio(const OperatorConfig<N>& cfg, const Domain<N>& domain, const SmoothProbe<N>& probe,
                  const std::type_identity_t<Point<N>>& x) {
  const Point<N> g = probe.gradient(x);
  if (!(norm(g) > 1e-10)) throw VanishingGradient("gradient vanishes at the probe point");
  const double r = domain.r_eps(x, cfg.eps);
  if (!(r > 0.0)) throw ZeroRadius("AMVP ratio needs an interior point");
  // The p-mean commutes with shifts; working with increments keeps the
  // rounding error of a nearly cancelling difference out of the ratio.
  const double phi_x = probe.value(x);
  const auto& q = cfg.quadrature;
  std::vector<double> increments(q.size());
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t k = 0; k < q.size(); ++k) {
    increments[k] = probe.value(detail::ball_point<N>(x, r, q.offsets[k])) - phi_x;
    lo = std::min(lo, increments[k]);
    hi = std::max(hi, increments[k]);
  }
  const double nu = pmean_kernel(increments, q.weights, cfg.p, cfg.pmean_tol * std::max(hi - lo, 1e-300)).nu;
  return nu / (r * r);
}

/// Ratios are evaluated from increments of size ~r |grad phi| with relative
/// p-mean tolerance; differences below this level are rounding, not signal.
inline constexpr double kAmvpResolution = 1e-9;

/// True when errors never grow, treating values below `resolution` as zero.
inline bool nonincreasing(const std::vector<double>& errors, double resolution = kAmvpResolution) {
  for (std::size_t k = 1; k < errors.size(); ++k) {
    const double a = errors[k - 1] <= resolution ? 0.0 : errors[k - 1];
    const double b = errors[k] <= resolution ? 0.0 : errors[k];
    if (b > a) return false;
  }
  return true;
}

enum class PointKind { interior, boundary };

/// A_eps(s, x, f): interior c (s - mu[f](x)) / r^2, boundary eps (s - g(x)).
template <int N>
double residual_A(const OperatorConfig<N>& cfg, double s, const std::type_identity_t<Point<N>>& x, const GridField<N>& f,
                  double g_at, PointKind kind) {
  if (kind == PointKind::boundary) return cfg.eps * (s - g_at);
  const double r = f.grid().domain().r_eps(x, cfg.eps);
  if (!(r > 0.0)) throw ZeroRadius("interior residual requested where r_eps = 0");
  return residual_prefactor(cfg) * (s - mu_at_point(cfg, f, x)) / (r * r);
}

/// Point kind inferred from the distance to the boundary.
template <int N>
double residual_A(const OperatorConfig<N>& cfg, double s, const std::type_identity_t<Point<N>>& x, const GridField<N>& f,
                  double g_at) {
  const auto& d = f.grid().domain();
  const PointKind kind = d.dist_to_boundary(x) <= d.slack() ? PointKind::boundary : PointKind::interior;
  return residual_A(cfg, s, x, f, g_at, kind);
}

/// A_eps(u(x), x, u) at every slot, with mu taken from the operator's stencils:
/// interior slots use the nodal radii, boundary slots compare against g.
template <int N>
std::vector<double> residual_A_nodes(const BallOperator<N>& op, const GridField<N>& u,
                                     const GridField<N>& g) {
  const GridField<N> mu = op.apply_mu(u);
  const std::size_t n = op.grid().interior_count();
  const double c = residual_prefactor(op.config());
  std::vector<double> res(u.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double r = op.radius(i);
    res[i] = c * (u[i] - mu[i]) / (r * r);
  }
  for (std::size_t s = n; s < u.size(); ++s) res[s] = op.config().eps * (u[s] - g[s]);
  return res;
}

}  // namespace vpharm
