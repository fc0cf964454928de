#pragma once

// Study configuration, the AMVP and convergence studies, and their CSV/JSON
// outputs. Everything here is driven by one JSON document per run.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "vpharm/catalog.hpp"
#include "vpharm/errors.hpp"
#include "vpharm/field.hpp"
#include "vpharm/geometry.hpp"
#include "vpharm/operator.hpp"
#include "vpharm/solver.hpp"

namespace vpharm {

using json = nlohmann::json;

struct StudyConfig {
  int dim = 2;
  json domain;
  std::vector<Exponent> p;
  std::vector<double> eps;
  std::vector<double> h;
  std::string data;
  /// radial_power exponent; unset means (N - p)/(p - 1) for each p.
  std::optional<double> alpha;
  std::string out = ".";
  unsigned threads = 0;
  double tol_fix = 0.0;
  long max_iters = 0;
  Init init = Init::constant_min_g;
  Sweep sweep = Sweep::jacobi;
  bool error_control = true;
  int radial_order = 8;
  int angular_order = 32;
  int amvp_points = 20;
  std::uint64_t amvp_seed = 1;
};

namespace detail {

inline const json& require(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing key '") + key + "'");
  return j.at(key);
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

inline Exponent exponent_from_json(const json& j) {
  if (j.is_string()) return Exponent::parse(j.get<std::string>());
  if (j.is_number()) return Exponent::finite(j.get<double>());
  throw ConfigError("p entries must be numbers or \"inf\"");
}

// Accepts a number or a non-empty array of numbers.
inline std::vector<double> number_list(const json& j, const char* key) {
  std::vector<double> out;
  if (j.is_number()) {
    out.push_back(j.get<double>());
  } else if (j.is_array()) {
    for (const auto& v : j) {
      if (!v.is_number()) throw ConfigError(std::string("'") + key + "' must hold numbers");
      out.push_back(v.get<double>());
    }
  } else {
    throw ConfigError(std::string("'") + key + "' must be a number or an array of numbers");
  }
  if (out.empty()) throw ConfigError(std::string("'") + key + "' is empty");
  for (double v : out)
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("'") + key + "' values must be positive");
  return out;
}

template <int N>
Point<N> point_from_json(const json& j, const char* key) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(N))
    throw ConfigError(std::string("'") + key + "' must be an array of " + std::to_string(N) + " numbers");
  Point<N> x;
  for (int d = 0; d < N; ++d) {
    if (!j[d].is_number()) throw ConfigError(std::string("'") + key + "' must hold numbers");
    x[d] = j[d].get<double>();
  }
  return x;
}

// Shortest text that reads back to the same double.
inline std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string fmt(Exponent p) { return p.is_infinite() ? "inf" : fmt(p.value()); }

inline json exponent_json(Exponent p) { return p.is_infinite() ? json("inf") : json(p.value()); }

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline std::filesystem::path output_dir(const StudyConfig& cfg) {
  std::filesystem::path dir(cfg.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + cfg.out + "': " + ec.message());
  return dir;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  return os;
}

}  // namespace detail

template <int N>
Domain<N> domain_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("'domain' must be an object");
  const std::string kind = detail::require(j, "kind").get<std::string>();
  if (kind == "rectangle") {
    detail::reject_unknown(j, {"kind", "lo", "hi"}, "domain");
    return Domain<N>::rectangle(detail::point_from_json<N>(detail::require(j, "lo"), "lo"),
                                detail::point_from_json<N>(detail::require(j, "hi"), "hi"));
  }
  if (kind == "disk") {
    detail::reject_unknown(j, {"kind", "center", "radius"}, "domain");
    return Domain<N>::disk(detail::point_from_json<N>(detail::require(j, "center"), "center"),
                           detail::require(j, "radius").get<double>());
  }
  if (kind == "annulus") {
    detail::reject_unknown(j, {"kind", "center", "r_inner", "r_outer"}, "domain");
    return Domain<N>::annulus(detail::point_from_json<N>(detail::require(j, "center"), "center"),
                              detail::require(j, "r_inner").get<double>(), detail::require(j, "r_outer").get<double>());
  }
  if (kind == "polygon") {
    detail::reject_unknown(j, {"kind", "vertices"}, "domain");
    std::vector<Point<N>> vertices;
    for (const auto& v : detail::require(j, "vertices")) vertices.push_back(detail::point_from_json<N>(v, "vertices"));
    return Domain<N>::polygon(std::move(vertices));
  }
  throw ConfigError("unknown domain kind '" + kind + "'");
}

inline StudyConfig parse_study_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  detail::reject_unknown(j,
                         {"dim", "domain", "p", "eps", "h", "data", "alpha", "out", "threads", "tol_fix",
                          "max_iters", "init", "sweep", "error_control", "quadrature", "amvp"},
                         "config");
  StudyConfig c;
  try {
    if (j.contains("dim")) c.dim = j.at("dim").get<int>();
    if (c.dim != 2 && c.dim != 3) throw ConfigError("dim must be 2 or 3");
    c.domain = detail::require(j, "domain");
    const json& pj = detail::require(j, "p");
    if (pj.is_array()) {
      for (const auto& v : pj) c.p.push_back(detail::exponent_from_json(v));
    } else {
      c.p.push_back(detail::exponent_from_json(pj));
    }
    if (c.p.empty()) throw ConfigError("'p' is empty");
    c.eps = detail::number_list(detail::require(j, "eps"), "eps");
    for (std::size_t k = 1; k < c.eps.size(); ++k)
      if (!(c.eps[k] < c.eps[k - 1])) throw ConfigError("'eps' must be strictly decreasing");
    if (j.contains("h")) c.h = detail::number_list(j.at("h"), "h");
    c.data = detail::require(j, "data").get<std::string>();
    const auto& names = catalog_names();
    if (std::find(names.begin(), names.end(), c.data) == names.end())
      throw ConfigError("unknown data '" + c.data + "'");
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    if (j.contains("threads")) {
      const long t = j.at("threads").get<long>();
      if (t < 0) throw ConfigError("'threads' must be >= 0");
      c.threads = static_cast<unsigned>(t);
    }
    if (j.contains("tol_fix")) c.tol_fix = j.at("tol_fix").get<double>();
    if (j.contains("max_iters")) c.max_iters = j.at("max_iters").get<long>();
    if (c.tol_fix < 0.0) throw ConfigError("'tol_fix' must be positive (or 0 for the default)");
    if (c.max_iters < 0) throw ConfigError("'max_iters' must be >= 1 (or 0 for the default)");
    if (j.contains("init")) c.init = parse_init(j.at("init").get<std::string>());
    if (c.init == Init::user_field) throw ConfigError("init user_field is only available through the library");
    if (j.contains("sweep")) c.sweep = parse_sweep(j.at("sweep").get<std::string>());
    if (j.contains("error_control")) c.error_control = j.at("error_control").get<bool>();
    if (j.contains("quadrature")) {
      const json& q = j.at("quadrature");
      detail::reject_unknown(q, {"radial", "angular"}, "quadrature");
      if (q.contains("radial")) c.radial_order = q.at("radial").get<int>();
      if (q.contains("angular")) c.angular_order = q.at("angular").get<int>();
    }
    if (j.contains("amvp")) {
      const json& a = j.at("amvp");
      detail::reject_unknown(a, {"points", "seed"}, "amvp");
      if (a.contains("points")) c.amvp_points = a.at("points").get<int>();
      if (a.contains("seed")) c.amvp_seed = a.at("seed").get<std::uint64_t>();
      if (c.amvp_points < 1) throw ConfigError("'amvp.points' must be >= 1");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const InvalidExponent& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline StudyConfig load_study_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_study_config(j);
}

/// Catalog entry for a given exponent, filling in the critical radial exponent.
template <int N>
CatalogEntry<N> study_entry(const StudyConfig& cfg, Exponent p) {
  if (cfg.data != "radial_power" || cfg.alpha) return catalog_entry<N>(cfg.data, cfg.alpha.value_or(1.0));
  if (p.is_infinite()) return radial_power_entry<N>(-1.0);
  const double q = p.value();
  if (!(q > 1.0) || q == static_cast<double>(N))
    throw ConfigError("radial_power without 'alpha' needs 1 < p != N");
  return radial_power_entry<N>((N - q) / (q - 1.0));
}

template <int N>
OperatorConfig<N> operator_config(const StudyConfig& cfg, Exponent p, double eps) {
  OperatorConfig<N> op;
  op.p = p;
  op.eps = eps;
  op.quadrature = build_ball_quadrature<N>(cfg.radial_order, cfg.angular_order);
  op.validate();
  return op;
}

template <int N>
SolverConfig<N> solver_config(const StudyConfig& cfg, Exponent p, double eps) {
  SolverConfig<N> s;
  s.op = operator_config<N>(cfg, p, eps);
  s.init = cfg.init;
  s.tol_fix = cfg.tol_fix;
  s.max_iters = cfg.max_iters;
  s.sweep = cfg.sweep;
  s.error_control = cfg.error_control;
  s.threads = cfg.threads;
  return s;
}

template <int N>
void check_eps_fit(const Domain<N>& d, const std::vector<double>& eps) {
  for (double e : eps)
    if (e > d.inradius())
      throw ConfigError("eps " + detail::fmt(e) + " exceeds the inradius " + detail::fmt(d.inradius()));
}

struct AmvpRow {
  Exponent p;
  double eps = 0.0;
  int point_id = 0;
  double ratio = 0.0;
  double target = 0.0;
  double abs_err = 0.0;
};

struct AmvpStudy {
  std::vector<AmvpRow> rows;
  /// max_error[k][e]: largest abs_err for p[k] at eps[e].
  std::vector<std::vector<double>> max_error;
  std::vector<bool> nonincreasing;
  std::vector<std::string> skipped;
};

/// Probe points: uniform in the bounding box, kept when the largest ball fits.
template <int N>
std::vector<Point<N>> amvp_points(const Domain<N>& d, double max_eps, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Point<N> lo = d.bbox_lo(), hi = d.bbox_hi();
  std::vector<std::uniform_real_distribution<double>> axis;
  for (int k = 0; k < N; ++k) axis.emplace_back(lo[k], hi[k]);
  std::vector<Point<N>> pts;
  for (long tries = 0; static_cast<int>(pts.size()) < count; ++tries) {
    if (tries > 1000L * count) throw ConfigError("no room for AMVP points at distance >= max eps from the boundary");
    Point<N> x;
    for (int k = 0; k < N; ++k) x[k] = axis[k](rng);
    if (d.signed_distance(x) >= max_eps) pts.push_back(x);
  }
  return pts;
}

template <int N>
AmvpStudy run_amvp_study(const StudyConfig& cfg, std::ostream& log = std::clog) {
  const Domain<N> domain = domain_from_json<N>(cfg.domain);
  check_eps_fit(domain, cfg.eps);
  const auto points = amvp_points(domain, cfg.eps.front(), cfg.amvp_points, cfg.amvp_seed);
  AmvpStudy study;
  for (Exponent p : cfg.p) {
    const CatalogEntry<N> entry = study_entry<N>(cfg, p);
    entry.check_domain(domain);
    std::vector<double> errs(cfg.eps.size(), 0.0);
    for (std::size_t e = 0; e < cfg.eps.size(); ++e) {
      const OperatorConfig<N> op = operator_config<N>(cfg, p, cfg.eps[e]);
      for (std::size_t i = 0; i < points.size(); ++i) {
        AmvpRow row{p, cfg.eps[e], static_cast<int>(i)};
        try {
          row.target = amvp_target(entry.probe, points[i], p);
          row.ratio = amvp_ratio(op, domain, entry.probe, points[i]);
        } catch (const VanishingGradient&) {
          if (e == 0) {
            std::string msg = "p=" + detail::fmt(p) + " point " + std::to_string(i) + ": gradient vanishes, skipped";
            log << msg << '\n';
            study.skipped.push_back(std::move(msg));
          }
          continue;
        }
        row.abs_err = std::abs(row.ratio - row.target);
        errs[e] = std::max(errs[e], row.abs_err);
        study.rows.push_back(row);
      }
    }
    study.nonincreasing.push_back(nonincreasing(errs));
    study.max_error.push_back(std::move(errs));
  }
  return study;
}

inline void write_amvp_csv(const AmvpStudy& s, std::ostream& os) {
  os << "p,eps,point_id,ratio,target,abs_err\n";
  for (const auto& r : s.rows)
    os << detail::fmt(r.p) << ',' << detail::fmt(r.eps) << ',' << r.point_id << ',' << detail::fmt(r.ratio) << ','
       << detail::fmt(r.target) << ',' << detail::fmt(r.abs_err) << '\n';
}

inline json amvp_summary(const StudyConfig& cfg, const AmvpStudy& s) {
  json out;
  out["data"] = cfg.data;
  out["eps"] = cfg.eps;
  out["points"] = cfg.amvp_points;
  out["quadrature"] = {{"radial", cfg.radial_order}, {"angular", cfg.angular_order}};
  out["resolution"] = kAmvpResolution;
  out["skipped"] = s.skipped;
  json per_p = json::array();
  for (std::size_t k = 0; k < cfg.p.size(); ++k)
    per_p.push_back({{"p", detail::exponent_json(cfg.p[k])},
                     {"max_error", s.max_error[k]},
                     {"nonincreasing", static_cast<bool>(s.nonincreasing[k])}});
  out["results"] = per_p;
  return out;
}

struct ConvergenceRow {
  Exponent p;
  double eps = 0.0;
  double h = 0.0;
  double sup_error = 0.0;
  long iters = 0;
  double seconds = 0.0;
  bool converged = false;
  long monotone_violations = 0;
  double worst_violation = 0.0;
  double fixed_point_residual = 0.0;
};

struct ConvergenceStudy {
  std::vector<ConvergenceRow> rows;
  /// Per exponent: sup_error strictly decreases along eps at the finest h.
  std::vector<bool> strictly_decreasing;
  bool all_converged = true;
};

template <int N>
double sup_error(const GridField<N>& u, const std::function<double(const Point<N>&)>& exact) {
  double m = 0.0;
  for (std::size_t s = 0; s < u.size(); ++s) m = std::max(m, std::abs(u[s] - exact(u.grid().slot_point(s))));
  return m;
}

/// Calls `on_row` after every cell so long studies can report progress.
template <int N>
ConvergenceStudy run_convergence_study(const StudyConfig& cfg,
                                       const std::function<void(const ConvergenceRow&)>& on_row = {}) {
  const Domain<N> domain = domain_from_json<N>(cfg.domain);
  check_eps_fit(domain, cfg.eps);
  if (cfg.h.empty()) throw ConfigError("convergence study needs 'h'");
  double finest = cfg.h.front();
  for (double h : cfg.h) finest = std::min(finest, h);
  ConvergenceStudy study;
  for (Exponent p : cfg.p) {
    const CatalogEntry<N> entry = study_entry<N>(cfg, p);
    entry.check_domain(domain);
    if (!entry.exact_for(p))
      throw ConfigError("data '" + cfg.data + "' has no known exact solution for p = " + detail::fmt(p));
    std::vector<double> finest_errors;
    for (double h : cfg.h) {
      const GridPtr<N> grid = make_grid(domain, h);
      const GridField<N> g = boundary_trace_from(entry.probe.value, grid);
      for (double eps : cfg.eps) {
        const SolverReport<N> rep = perron_solve(solver_config<N>(cfg, p, eps), g);
        ConvergenceRow row{p, eps, h};
        row.sup_error = sup_error<N>(rep.solution, entry.probe.value);
        row.iters = rep.iterations;
        row.seconds = rep.seconds;
        row.converged = rep.converged;
        row.monotone_violations = rep.monotone_violations;
        row.worst_violation = rep.worst_violation;
        row.fixed_point_residual = rep.fixed_point_residual;
        study.all_converged = study.all_converged && rep.converged;
        if (h == finest) finest_errors.push_back(row.sup_error);
        if (on_row) on_row(row);
        study.rows.push_back(row);
      }
    }
    bool decreasing = true;
    for (std::size_t k = 1; k < finest_errors.size(); ++k)
      decreasing = decreasing && finest_errors[k] < finest_errors[k - 1];
    study.strictly_decreasing.push_back(decreasing);
  }
  return study;
}

inline void write_convergence_csv(const ConvergenceStudy& s, std::ostream& os) {
  os << "p,eps,h,sup_error,iters,seconds\n";
  for (const auto& r : s.rows)
    os << detail::fmt(r.p) << ',' << detail::fmt(r.eps) << ',' << detail::fmt(r.h) << ',' << detail::fmt(r.sup_error)
       << ',' << r.iters << ',' << detail::fmt(r.seconds) << '\n';
}

inline json convergence_summary(const StudyConfig& cfg, const ConvergenceStudy& s) {
  json out;
  out["data"] = cfg.data;
  out["all_converged"] = s.all_converged;
  json rows = json::array();
  for (const auto& r : s.rows)
    rows.push_back({{"p", detail::exponent_json(r.p)},
                    {"eps", r.eps},
                    {"h", r.h},
                    {"sup_error", r.sup_error},
                    {"iters", r.iters},
                    {"converged", r.converged},
                    {"monotone_violations", r.monotone_violations},
                    {"fixed_point_residual", detail::finite_or_null(r.fixed_point_residual)}});
  out["rows"] = rows;
  json per_p = json::array();
  for (std::size_t k = 0; k < cfg.p.size(); ++k)
    per_p.push_back({{"p", detail::exponent_json(cfg.p[k])}, {"strictly_decreasing", static_cast<bool>(s.strictly_decreasing[k])}});
  out["finest_h"] = per_p;
  return out;
}

template <int N>
struct SolveOutcome {
  SolverReport<N> report;
  std::optional<double> sup_error;
};

template <int N>
SolveOutcome<N> run_solve(const StudyConfig& cfg) {
  if (cfg.p.size() != 1 || cfg.eps.size() != 1 || cfg.h.size() != 1)
    throw ConfigError("solve needs exactly one p, one eps and one h");
  const Domain<N> domain = domain_from_json<N>(cfg.domain);
  check_eps_fit(domain, cfg.eps);
  const Exponent p = cfg.p.front();
  const CatalogEntry<N> entry = study_entry<N>(cfg, p);
  entry.check_domain(domain);
  const GridPtr<N> grid = make_grid(domain, cfg.h.front());
  const GridField<N> g = boundary_trace_from(entry.probe.value, grid);
  SolveOutcome<N> out{perron_solve(solver_config<N>(cfg, p, cfg.eps.front()), g), std::nullopt};
  if (entry.exact_for(p)) out.sup_error = sup_error<N>(out.report.solution, entry.probe.value);
  return out;
}

template <int N>
json solve_report_json(const StudyConfig& cfg, const SolveOutcome<N>& o) {
  const auto& r = o.report;
  json out;
  out["p"] = detail::exponent_json(cfg.p.front());
  out["eps"] = cfg.eps.front();
  out["h"] = cfg.h.front();
  out["dim"] = N;
  out["domain"] = cfg.domain;
  out["data"] = cfg.data;
  out["init"] = to_string(r.init);
  out["sweep"] = to_string(r.sweep);
  out["quadrature"] = {{"radial", cfg.radial_order}, {"angular", cfg.angular_order}};
  out["interior_nodes"] = r.solution.grid().interior_count();
  out["boundary_samples"] = r.solution.grid().boundary_count();
  out["tol_fix"] = r.tol_fix;
  out["max_iters"] = r.max_iters;
  out["iterations"] = r.iterations;
  out["converged"] = r.converged;
  out["fixed_point_residual"] = detail::finite_or_null(r.fixed_point_residual);
  out["contraction"] = detail::finite_or_null(r.contraction);
  out["error_estimate"] = detail::finite_or_null(r.error_estimate);
  out["monotone_violations"] = r.monotone_violations;
  out["worst_violation"] = r.worst_violation;
  out["sup_error"] = o.sup_error ? json(*o.sup_error) : json(nullptr);
  out["residual_prefactor_limit"] = cfg.p.front().is_infinite();
  out["seconds"] = r.seconds;
  out["residual_history"] = r.residual_history;
  return out;
}

/// Runs the study named by `command` ("solve", "amvp", "converge") for the
/// configured dimension and writes its files into cfg.out. Returns false when
/// a solve did not converge.
template <int N>
bool run_command(const std::string& command, const StudyConfig& cfg, std::ostream& log) {
  const auto dir = detail::output_dir(cfg);
  if (command == "amvp") {
    const AmvpStudy s = run_amvp_study<N>(cfg, log);
    auto csv = detail::open_output(dir / "amvp.csv");
    write_amvp_csv(s, csv);
    auto js = detail::open_output(dir / "amvp_summary.json");
    js << amvp_summary(cfg, s).dump(2) << '\n';
    for (std::size_t k = 0; k < cfg.p.size(); ++k)
      log << "p=" << detail::fmt(cfg.p[k]) << " max error along eps: "
          << json(s.max_error[k]).dump() << (s.nonincreasing[k] ? " (nonincreasing)" : " (NOT nonincreasing)") << '\n';
    return true;
  }
  if (command == "converge") {
    const ConvergenceStudy s = run_convergence_study<N>(cfg, [&](const ConvergenceRow& r) {
      log << "p=" << detail::fmt(r.p) << " eps=" << detail::fmt(r.eps) << " h=" << detail::fmt(r.h)
          << " sup_error=" << detail::fmt(r.sup_error) << " iters=" << r.iters << (r.converged ? "" : " NOT CONVERGED")
          << '\n';
    });
    auto csv = detail::open_output(dir / "convergence.csv");
    write_convergence_csv(s, csv);
    auto js = detail::open_output(dir / "convergence_summary.json");
    js << convergence_summary(cfg, s).dump(2) << '\n';
    return s.all_converged;
  }
  if (command == "solve") {
    const SolveOutcome<N> o = run_solve<N>(cfg);
    auto csv = detail::open_output(dir / "solution.csv");
    write_csv(o.report.solution, csv);
    auto js = detail::open_output(dir / "report.json");
    js << solve_report_json(cfg, o).dump(2) << '\n';
    log << "iterations=" << o.report.iterations << " converged=" << (o.report.converged ? "true" : "false");
    if (o.sup_error) log << " sup_error=" << detail::fmt(*o.sup_error);
    log << '\n';
    return o.report.converged;
  }
  throw ConfigError("unknown command '" + command + "'");
}

inline bool run_command(const std::string& command, const StudyConfig& cfg, std::ostream& log = std::clog) {
  return cfg.dim == 3 ? run_command<3>(command, cfg, log) : run_command<2>(command, cfg, log);
}

}  // namespace vpharm
