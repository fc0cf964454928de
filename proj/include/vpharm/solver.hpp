#pragma once

// Perron iteration for u = mu_p^eps[u] in the domain with u = g on the
// boundary, power-function barriers and the comparison-principle check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "vpharm/errors.hpp"
#include "vpharm/field.hpp"
#include "vpharm/geometry.hpp"
#include "vpharm/operator.hpp"

namespace vpharm {

enum class Init { constant_min_g, constant_max_g, boundary_interpolant, user_field };
enum class Sweep { jacobi, gauss_seidel };

inline std::string to_string(Init init) {
  switch (init) {
    case Init::constant_min_g: return "constant_min_g";
    case Init::constant_max_g: return "constant_max_g";
    case Init::boundary_interpolant: return "boundary_interpolant";
    case Init::user_field: return "user_field";
  }
  return "?";
}

inline std::string to_string(Sweep s) { return s == Sweep::jacobi ? "jacobi" : "gauss_seidel"; }

inline Init parse_init(const std::string& s) {
  for (Init i : {Init::constant_min_g, Init::constant_max_g, Init::boundary_interpolant, Init::user_field})
    if (to_string(i) == s) return i;
  throw ConfigError("unknown init '" + s + "'");
}

inline Sweep parse_sweep(const std::string& s) {
  if (s == "jacobi") return Sweep::jacobi;
  if (s == "gauss_seidel") return Sweep::gauss_seidel;
  throw ConfigError("unknown sweep '" + s + "'");
}

template <int N>
struct SolverConfig {
  OperatorConfig<N> op;
  Init init = Init::constant_min_g;
  /// <= 0 selects 1e-8 * max(1, sup |g|).
  double tol_fix = 0.0;
  /// <= 0 selects 50 (diam / eps)^2.
  long max_iters = 0;
  Sweep sweep = Sweep::jacobi;
  /// Also require the contraction-based error estimate to be below tol_fix.
  bool error_control = true;
  unsigned threads = 0;
  /// Starting field for Init::user_field; its boundary values are replaced by g.
  std::optional<GridField<N>> initial;
};

template <int N>
struct SolverReport {
  GridField<N> solution;
  long iterations = 0;
  std::vector<double> residual_history;
  /// Nodewise steps against the expected direction beyond 1e-12 (monotone inits only).
  long monotone_violations = 0;
  double worst_violation = 0.0;
  bool converged = false;
  double tol_fix = 0.0;
  long max_iters = 0;
  double fixed_point_residual = std::numeric_limits<double>::quiet_NaN();
  double contraction = std::numeric_limits<double>::quiet_NaN();
  double error_estimate = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
  Init init = Init::constant_min_g;
  Sweep sweep = Sweep::jacobi;
};

inline constexpr double kMonotoneSlack = 1e-12;

namespace detail {

template <int N>
void boundary_range(const GridField<N>& g, double& lo, double& hi) {
  const auto trace = g.boundary_trace();
  if (trace.empty()) throw ConfigError("grid has no boundary samples");
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (double v : trace) {
    if (!std::isfinite(v)) throw ConfigError("boundary data must be finite");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
}

// Inverse-square-distance blend of the boundary samples.
template <int N>
void shepard_fill(GridField<N>& u) {
  const Grid<N>& grid = u.grid();
  const auto& pts = grid.boundary_points();
  const auto trace = u.boundary_trace();
  for (std::size_t i = 0; i < grid.interior_count(); ++i) {
    const Point<N> x = grid.interior_point(i);
    double num = 0.0, den = 0.0;
    for (std::size_t b = 0; b < pts.size(); ++b) {
      const Point<N> d = x - pts[b];
      const double w = 1.0 / dot(d, d);
      num += w * trace[b];
      den += w;
    }
    u[i] = num / den;
  }
}

// Largest recent ratio of successive changes; the asymptotic contraction factor.
inline double contraction_estimate(const std::vector<double>& hist, std::size_t window = 10) {
  if (hist.size() < window + 1) return std::numeric_limits<double>::infinity();
  double rho = 0.0;
  for (std::size_t k = hist.size() - window; k < hist.size(); ++k) {
    if (hist[k - 1] <= 0.0) return hist[k] <= 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    rho = std::max(rho, hist[k] / hist[k - 1]);
  }
  return rho;
}

}  // namespace detail

template <int N>
double default_tol_fix(const GridField<N>& g) {
  double m = 0.0;
  for (double v : g.boundary_trace()) m = std::max(m, std::abs(v));
  return 1e-8 * std::max(1.0, m);
}

template <int N>
long default_max_iters(const Domain<N>& d, double eps) {
  const double ratio = d.diameter() / eps;
  return static_cast<long>(std::ceil(50.0 * ratio * ratio));
}

template <int N>
GridField<N> initial_field(const SolverConfig<N>& cfg, const GridField<N>& g) {
  double lo = 0.0, hi = 0.0;
  detail::boundary_range(g, lo, hi);
  GridField<N> u(g.grid_ptr());
  std::copy(g.boundary_trace().begin(), g.boundary_trace().end(), u.boundary_trace().begin());
  auto interior = u.interior_values();
  switch (cfg.init) {
    case Init::constant_min_g: std::fill(interior.begin(), interior.end(), lo); break;
    case Init::constant_max_g: std::fill(interior.begin(), interior.end(), hi); break;
    case Init::boundary_interpolant: detail::shepard_fill(u); break;
    case Init::user_field: {
      if (!cfg.initial) throw ConfigError("init user_field needs an initial field");
      require_same_grid(*cfg.initial, g);
      const auto src = cfg.initial->interior_values();
      for (double v : src)
        if (!std::isfinite(v)) throw ConfigError("initial field must be finite");
      std::copy(src.begin(), src.end(), interior.begin());
      break;
    }
  }
  return u;
}

/// Fixed-point iteration u <- mu[u] with g held on the boundary. Returns a
/// report with converged = false when max_iters is reached.
template <int N>
SolverReport<N> perron_solve(const SolverConfig<N>& cfg, const GridField<N>& g) {
  const auto start = std::chrono::steady_clock::now();
  cfg.op.validate();
  const Grid<N>& grid = g.grid();
  const Domain<N>& domain = grid.domain();
  if (domain.inradius() < cfg.op.eps)
    throw ConfigError("eps exceeds the inradius of the domain (" + std::to_string(domain.inradius()) + ")");

  SolverReport<N> rep;
  rep.init = cfg.init;
  rep.sweep = cfg.sweep;
  rep.tol_fix = cfg.tol_fix > 0.0 ? cfg.tol_fix : default_tol_fix(g);
  rep.max_iters = cfg.max_iters > 0 ? cfg.max_iters : default_max_iters(domain, cfg.op.eps);
  const int direction = cfg.init == Init::constant_min_g ? 1 : cfg.init == Init::constant_max_g ? -1 : 0;
  // Changes at this level are interpolation rounding, not iteration error.
  const double rounding = 64.0 * std::numeric_limits<double>::epsilon() * 1e8 * default_tol_fix(g);

  const BallOperator<N> op(cfg.op, g.grid_ptr(), cfg.threads);
  GridField<N> u = initial_field(cfg, g);
  GridField<N> next = u;
  const std::size_t n = grid.interior_count();

  auto record_steps = [&](std::span<const double> before, std::span<const double> after) {
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double delta = after[i] - before[i];
      change = std::max(change, std::abs(delta));
      const double against = -direction * delta;
      if (direction != 0 && against > kMonotoneSlack) {
        ++rep.monotone_violations;
        rep.worst_violation = std::max(rep.worst_violation, against);
      }
    }
    return change;
  };

  while (rep.iterations < rep.max_iters) {
    double change = 0.0;
    if (cfg.sweep == Sweep::jacobi) {
      op.apply(u.values(), next.values());
      change = record_steps(u.values(), next.values());
    } else {
      std::copy(u.values().begin(), u.values().end(), next.values().begin());
      op.gauss_seidel(next.values());
      change = record_steps(u.values(), next.values());
    }
    ++rep.iterations;
    rep.residual_history.push_back(change);

    if (change <= rep.tol_fix) {
      const double rho = detail::contraction_estimate(rep.residual_history);
      const double estimate = rho < 1.0 ? change / (1.0 - rho) : std::numeric_limits<double>::infinity();
      const bool small_error = change <= rounding || !cfg.error_control || estimate <= rep.tol_fix;
      if (small_error) {
        // For Jacobi the change is the fixed-point residual of u; a Gauss-Seidel
        // iterate needs one separate application.
        double residual = change;
        if (cfg.sweep == Sweep::gauss_seidel) {
          GridField<N> probe(g.grid_ptr());
          op.apply(next.values(), probe.values());
          residual = 0.0;
          for (std::size_t i = 0; i < n; ++i) residual = std::max(residual, std::abs(probe[i] - next[i]));
          std::swap(u, next);
        }
        if (residual <= 10.0 * rep.tol_fix) {
          rep.fixed_point_residual = residual;
          rep.contraction = change <= rounding ? 0.0 : rho;
          rep.error_estimate = change <= rounding ? change : estimate;
          rep.converged = true;
          break;
        }
        if (cfg.sweep == Sweep::gauss_seidel) continue;
      }
    }
    std::swap(u, next);
  }
  if (!rep.converged && !rep.residual_history.empty()) {
    rep.fixed_point_residual = rep.residual_history.back();
    rep.contraction = detail::contraction_estimate(rep.residual_history);
  }
  rep.solution = std::move(u);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

/// Lower and upper iterations from constant_min_g and constant_max_g.
template <int N>
struct Bracket {
  SolverReport<N> lower, upper;
  double gap = 0.0;
};

template <int N>
Bracket<N> solve_bracket(SolverConfig<N> cfg, const GridField<N>& g) {
  Bracket<N> b;
  cfg.init = Init::constant_min_g;
  b.lower = perron_solve(cfg, g);
  cfg.init = Init::constant_max_g;
  b.upper = perron_solve(cfg, g);
  b.gap = sup_diff(b.lower.solution, b.upper.solution);
  return b;
}

/// Power-function barrier R^-alpha - |x - y0|^-alpha anchored at a boundary point.
template <int N>
struct Barrier {
  Point<N> anchor{};
  Point<N> center{};
  double radius = 0.0;
  double alpha = 0.0;

  double operator()(const Point<N>& x) const {
    return std::pow(radius, -alpha) - std::pow(norm<N>(x - center), -alpha);
  }
};

/// alpha = (N+1)/(p-1); p = inf uses alpha = 1.
inline double barrier_exponent(int dim, Exponent p) {
  if (p.is_infinite()) return 1.0;
  const double q = p.value();
  if (q <= 1.0) throw UnsupportedP("barriers need p > 1");
  return (dim + 1.0) / (q - 1.0);
}

template <int N>
Barrier<N> make_barrier(const Domain<N>& d, const std::type_identity_t<Point<N>>& x0, Exponent p, double R) {
  const double alpha = barrier_exponent(N, p);
  if (!(R > 0.0)) throw ConfigError("barrier radius must be positive");
  const Point<N> nrm = d.outward_normal(x0);
  Barrier<N> b{x0, x0 + R * nrm, R, alpha};
  b.radius = norm<N>(x0 - b.center);
  if (-d.signed_distance(b.center) < R * (1.0 - 1e-9))
    throw NoExteriorSphere("no exterior ball of radius " + std::to_string(R) + " at the anchor");
  return b;
}

template <int N>
struct BarrierCheck {
  double value_at_anchor = 0.0;
  /// Smallest barrier value over grid slots other than the anchor.
  double min_elsewhere = std::numeric_limits<double>::infinity();
  /// max over interior nodes of mu[w] - w.
  double worst_excess = -std::numeric_limits<double>::infinity();
  bool positive = false;
  bool superharmonious = false;
  bool valid() const { return positive && superharmonious; }
};

template <int N>
BarrierCheck<N> check_barrier(const Barrier<N>& b, const BallOperator<N>& op, double tol = 1e-8) {
  const Grid<N>& grid = op.grid();
  BarrierCheck<N> c;
  c.value_at_anchor = b(b.anchor);
  const double same = 1e-12 * std::max(1.0, grid.domain().diameter());
  GridField<N> w(op.grid_ptr());
  for (std::size_t s = 0; s < w.size(); ++s) {
    const Point<N> x = grid.slot_point(s);
    w[s] = b(x);
    if (norm<N>(x - b.anchor) > same) c.min_elsewhere = std::min(c.min_elsewhere, w[s]);
  }
  const GridField<N> mu = op.apply_mu(w);
  for (std::size_t i = 0; i < grid.interior_count(); ++i) c.worst_excess = std::max(c.worst_excess, mu[i] - w[i]);
  c.positive = c.min_elsewhere > 0.0;
  c.superharmonious = c.worst_excess <= tol;
  return c;
}

struct ComparisonReport {
  double worst_violation = 0.0;
  long violations = 0;
  double min_gap = 0.0;
  double max_gap = 0.0;
};

/// Checks v <= w at every slot for a subharmonious v and a superharmonious w
/// ordered on the boundary.
template <int N>
ComparisonReport verify_comparison(const GridField<N>& v, const GridField<N>& w, const OperatorConfig<N>& cfg,
                                   double tol = 1e-8) {
  require_same_grid(v, w);
  const BallOperator<N> op(cfg, v.grid_ptr());
  const std::size_t n = v.grid().interior_count();
  const GridField<N> mv = op.apply_mu(v), mw = op.apply_mu(w);
  for (std::size_t i = 0; i < n; ++i) {
    if (v[i] > mv[i] + tol) throw PreconditionFailed("v is not subharmonious at node " + std::to_string(i));
    if (w[i] < mw[i] - tol) throw PreconditionFailed("w is not superharmonious at node " + std::to_string(i));
  }
  for (std::size_t s = n; s < v.size(); ++s)
    if (v[s] > w[s] + tol) throw PreconditionFailed("boundary data are not ordered");
  ComparisonReport r;
  r.min_gap = std::numeric_limits<double>::infinity();
  r.max_gap = -r.min_gap;
  for (std::size_t s = 0; s < v.size(); ++s) {
    const double gap = w[s] - v[s];
    r.min_gap = std::min(r.min_gap, gap);
    r.max_gap = std::max(r.max_gap, gap);
    if (-gap > tol) {
      ++r.violations;
      r.worst_violation = std::max(r.worst_violation, -gap);
    }
  }
  return r;
}

struct RegularityFlag {
  bool regular = false;
  double radius = 0.0;
  std::string reason;
};

/// Attempts a barrier at every boundary sample. Samples within one grid step of
/// a polygon or rectangle vertex use R = h; elsewhere R starts at a quarter of
/// the diameter and halves until an exterior ball fits.
template <int N>
std::vector<RegularityFlag> regularity_probe(const Domain<N>& d, Exponent p, double eps, double h,
                                             const BallQuadrature<N>& quadrature = build_ball_quadrature<N>()) {
  const GridPtr<N> grid = make_grid(d, h);
  OperatorConfig<N> cfg;
  cfg.p = p;
  cfg.eps = eps;
  cfg.quadrature = quadrature;
  const BallOperator<N> op(cfg, grid);
  std::vector<Point<N>> vertices;
  if (const auto* rect = std::get_if<RectangleShape<N>>(&d.shape())) {
    for (int m = 0; m < (1 << N); ++m) {
      Point<N> v;
      for (int k = 0; k < N; ++k) v[k] = (m & (1 << k)) ? rect->hi[k] : rect->lo[k];
      vertices.push_back(v);
    }
  } else if (const auto* poly = std::get_if<PolygonShape<N>>(&d.shape())) {
    vertices = poly->vertices;
  }
  std::vector<RegularityFlag> flags;
  for (const Point<N>& x0 : grid->boundary_points()) {
    RegularityFlag f;
    const bool at_vertex = std::any_of(vertices.begin(), vertices.end(),
                                       [&](const Point<N>& v) { return norm<N>(x0 - v) <= 1e-12; });
    try {
      std::optional<Barrier<N>> b;
      if (at_vertex) {
        b = make_barrier(d, x0, p, h);
        f.radius = h;
      } else {
        for (double R = 0.25 * d.diameter(); R >= h && !b; R *= 0.5) {
          try {
            b = make_barrier(d, x0, p, R);
            f.radius = R;
          } catch (const NoExteriorSphere&) {
          }
        }
        if (!b) throw NoExteriorSphere("no exterior ball of radius >= h");
      }
      const auto check = check_barrier(*b, op);
      f.regular = check.valid();
      if (!check.positive) f.reason = "barrier not positive away from the anchor";
      else if (!check.superharmonious) f.reason = "mu[w] exceeds w by " + std::to_string(check.worst_excess);
    } catch (const Error& e) {
      f.reason = e.what();
    }
    flags.push_back(f);
  }
  return flags;
}

}  // namespace vpharm
