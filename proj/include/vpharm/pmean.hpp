#pragma once

// Variational p-means of finitely supported weighted samples.
//
// For a sample (v_i, w_i) with sum w_i = 1 the p-mean is the constant nu that
// minimizes sum w_i |v_i - nu|^p (the max of |v_i - nu| when p is infinite).
// For finite p it is the unique root of
//
//   F(nu) = sum_i w_i sgn(v_i - nu) |v_i - nu|^(p-1),
//
// which is strictly decreasing in nu on [min v, max v].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "vpharm/errors.hpp"

namespace vpharm {

/// Exponent p in [1, inf]; infinity is an explicit tag.
class Exponent {
 public:
  static Exponent finite(double p) {
    if (!std::isfinite(p) || p < 1.0)
      throw InvalidExponent("exponent must satisfy 1 <= p < inf, got " + std::to_string(p));
    return Exponent(p, false);
  }
  static Exponent infinity() { return Exponent(0.0, true); }

  /// Accepts a decimal number or one of "inf", "infinity".
  static Exponent parse(std::string_view text) {
    if (text == "inf" || text == "infinity" || text == "Inf" || text == "INF") return infinity();
    std::string s(text);
    std::size_t used = 0;
    double p = 0.0;
    try {
      p = std::stod(s, &used);
    } catch (const std::exception&) {
      throw InvalidExponent("cannot parse exponent '" + s + "'");
    }
    if (used != s.size()) throw InvalidExponent("cannot parse exponent '" + s + "'");
    return finite(p);
  }

  bool is_infinite() const { return infinite_; }
  bool is_finite() const { return !infinite_; }

  double value() const {
    if (infinite_) throw InvalidExponent("exponent is infinite");
    return p_;
  }

  /// p/(N+p), with its limit 1 for p = inf.
  double amvp_fraction(int dim) const { return infinite_ ? 1.0 : p_ / (dim + p_); }

  std::string to_string() const {
    if (infinite_) return "inf";
    std::string s = std::to_string(p_);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  }

  friend bool operator==(const Exponent& a, const Exponent& b) {
    return a.infinite_ == b.infinite_ && (a.infinite_ || a.p_ == b.p_);
  }

 private:
  Exponent(double p, bool inf) : p_(p), infinite_(inf) {}
  double p_;
  bool infinite_;
};

/// sgn(t) |t|^(p-1); for p = 1 this is sgn(t) with sgn(0) = 0.
inline double signed_power(double t, double p) {
  if (t == 0.0) return 0.0;
  const double a = std::pow(std::abs(t), p - 1.0);
  return t > 0.0 ? a : -a;
}

/// Values with non-negative weights, normalized to total weight 1.
class WeightedSample {
 public:
  WeightedSample(std::vector<double> values, std::vector<double> weights)
      : values_(std::move(values)), weights_(std::move(weights)) {
    if (values_.empty()) throw InvalidSample("sample is empty");
    if (values_.size() != weights_.size())
      throw InvalidSample("values and weights differ in length");
    for (double v : values_)
      if (!std::isfinite(v)) throw InvalidSample("sample value is not finite");
    double total = 0.0;
    for (double w : weights_) {
      if (!std::isfinite(w) || w < 0.0) throw InvalidSample("weights must be finite and >= 0");
      total += w;
    }
    if (!(total > 0.0)) throw InvalidSample("weights sum to zero");
    original_sum_ = total;
    for (double& w : weights_) w /= total;
  }

  static WeightedSample uniform(std::vector<double> values) {
    std::vector<double> w(values.size(), 1.0);
    return WeightedSample(std::move(values), std::move(w));
  }

  std::span<const double> values() const { return values_; }
  std::span<const double> weights() const { return weights_; }
  std::size_t size() const { return values_.size(); }
  double original_weight_sum() const { return original_sum_; }

  double min_value() const { return extreme(true); }
  double max_value() const { return extreme(false); }

 private:
  double extreme(bool lowest) const {
    double out = lowest ? std::numeric_limits<double>::infinity()
                        : -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (weights_[i] <= 0.0) continue;
      out = lowest ? std::min(out, values_[i]) : std::max(out, values_[i]);
    }
    return out;
  }

  std::vector<double> values_;
  std::vector<double> weights_;
  double original_sum_ = 1.0;
};

struct PMeanResult {
  double nu = 0.0;
  int iterations = 0;
  double residual = 0.0;  // |F(nu)| at return; zero for the closed forms
};

/// Absolute tolerance on nu used when the caller passes tol <= 0.
inline double default_pmean_tolerance(double spread) { return 1e-12 * std::max(1.0, spread); }

namespace detail {

struct NoBracketObserver {
  void operator()(double, double, double, double) const {}
};

inline void positive_range(std::span<const double> v, std::span<const double> w, double& lo,
                           double& hi) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (w[i] <= 0.0) continue;
    lo = std::min(lo, v[i]);
    hi = std::max(hi, v[i]);
  }
}

// Weighted median; when the minimizing set is an interval, its midpoint.
inline double weighted_median_kernel(std::span<const double> v, std::span<const double> w) {
  thread_local std::vector<std::size_t> order;
  order.clear();
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (w[i] > 0.0) {
      order.push_back(i);
      total += w[i];
    }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  const double half = 0.5 * total;
  const double tie = 1e-12 * total;
  // Lower end: first value whose cumulative weight reaches one half.
  double cum = 0.0;
  std::size_t k = 0;
  for (; k < order.size(); ++k) {
    cum += w[order[k]];
    if (cum >= half - tie) break;
  }
  k = std::min(k, order.size() - 1);
  const double a = v[order[k]];
  while (k + 1 < order.size() && v[order[k + 1]] == a) cum += w[order[++k]];
  // Mass exactly one half at or below `a`: every point up to the next distinct
  // value also minimizes.
  if (std::abs(cum - half) <= tie && k + 1 < order.size()) return 0.5 * (a + v[order[k + 1]]);
  return a;
}

enum class PowerKind { generic, half, linear, quadratic };

inline PowerKind power_kind(double p) {
  if (p == 1.5) return PowerKind::half;
  if (p == 3.0) return PowerKind::linear;
  if (p == 4.0) return PowerKind::quadratic;
  return PowerKind::generic;
}

// Accumulates F(nu) and D(nu) = sum w |v - nu|^(p-2) (so that F' = -(p-1) D).
template <PowerKind Kind>
inline void eval_f(std::span<const double> v, std::span<const double> w, double p, double nu,
                   double& f, double& d) {
  const double e = p - 2.0;
  const double* vp = v.data();
  const double* wp = w.data();
  const std::size_t n = v.size();
  double fs = 0.0, ds = 0.0;
  int hits = 0;
#pragma omp simd reduction(+ : fs, ds, hits)
  for (std::size_t i = 0; i < n; ++i) {
    const double t = vp[i] - nu;
    const double a = std::abs(t);
    double pw;
    if constexpr (Kind == PowerKind::half) {
      pw = a > 0.0 ? 1.0 / std::sqrt(a) : 0.0;
    } else if constexpr (Kind == PowerKind::linear) {
      pw = a;
    } else if constexpr (Kind == PowerKind::quadratic) {
      pw = a * a;
    } else {
      pw = a > 0.0 ? std::pow(a, e) : 0.0;
    }
    fs += wp[i] * t * pw;
    ds += wp[i] * pw;
    hits += (a == 0.0 && wp[i] > 0.0) ? 1 : 0;
  }
  f = fs;
  d = (e < 0.0 && hits > 0) ? std::numeric_limits<double>::infinity() : ds;
}

template <PowerKind Kind, class Observer>
PMeanResult root_find(std::span<const double> v, std::span<const double> w, double p, double lo,
                      double hi, double tol, double guess, int max_iterations, Observer& observe) {
  double f_lo = 0.0, f_hi = 0.0, d = 0.0;
  // F(lo) >= 0 >= F(hi) always; the endpoint values are only needed by observers.
  if constexpr (!std::is_same_v<std::remove_cvref_t<Observer>, NoBracketObserver>) {
    eval_f<Kind>(v, w, p, lo, f_lo, d);
    eval_f<Kind>(v, w, p, hi, f_hi, d);
    observe(lo, hi, f_lo, f_hi);
  }
  const double scale = p - 1.0;
  double x = (std::isfinite(guess) && guess > lo && guess < hi) ? guess : 0.5 * (lo + hi);
  int it = 0;
  bool bisect_next = false;
  // Previous two step lengths: a Newton step must be at most half of the one
  // before last, otherwise the iteration falls back to a midpoint.
  double dx = hi - lo, dx_old = hi - lo;
  while (it < max_iterations) {
    ++it;
    double f = 0.0;
    eval_f<Kind>(v, w, p, x, f, d);
    if (f == 0.0) return {x, it, 0.0};
    if (f > 0.0) {
      lo = x;
      f_lo = f;
    } else {
      hi = x;
      f_hi = f;
    }
    observe(lo, hi, f_lo, f_hi);
    if (hi - lo <= tol) return {x, it, std::abs(f)};

    if (bisect_next) {
      bisect_next = false;
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi)
        throw NonConvergence("p-mean bracket cannot shrink below tolerance " + std::to_string(tol));
      dx_old = dx;
      dx = mid - x;
      x = mid;
      continue;
    }
    const double slope = scale * d;
    const double step = (std::isfinite(slope) && slope > 0.0) ? f / slope : 0.0;
    if (step != 0.0 && std::abs(step) <= 0.5 * tol) {
      // Close out: bracket the root within tol around the Newton point. The
      // step may be below the spacing of doubles at x, leaving xn == x.
      const double xn = std::clamp(x + step, lo, hi);
      double fn = f;
      if (xn != x) {
        eval_f<Kind>(v, w, p, xn, fn, d);
        ++it;
        if (fn == 0.0) return {xn, it, 0.0};
      }
      const double probe = fn > 0.0 ? std::min(hi, xn + 0.5 * tol) : std::max(lo, xn - 0.5 * tol);
      double fp = 0.0;
      eval_f<Kind>(v, w, p, probe, fp, d);
      ++it;
      if (fn > 0.0) {
        lo = xn;
        f_lo = fn;
        if (fp <= 0.0) {
          hi = probe;
          f_hi = fp;
        }
      } else {
        hi = xn;
        f_hi = fn;
        if (fp >= 0.0) {
          lo = probe;
          f_lo = fp;
        }
      }
      observe(lo, hi, f_lo, f_hi);
      if (hi - lo <= tol) return {xn, it, std::abs(fn)};
      // Near a sample value with p < 2 the slope blows up and Newton steps
      // understate the distance to the root; halve the bracket instead.
      x = 0.5 * (lo + hi);
      bisect_next = true;
      continue;
    }
    const double xn = x + step;
    if (step != 0.0 && xn > lo && xn < hi) {
      // Accept the Newton point only if it shrinks the bracket meaningfully and
      // the steps are contracting (an oscillation around a vertical tangent is not).
      const double width = hi - lo;
      const bool contracting = std::abs(step) <= 0.5 * std::abs(dx_old);
      if (contracting && (std::min(xn - lo, hi - xn) > 1e-3 * width || std::abs(step) < 0.25 * width)) {
        dx_old = dx;
        dx = step;
        x = xn;
        continue;
      }
    }
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi)
      throw NonConvergence("p-mean bracket cannot shrink below tolerance " + std::to_string(tol));
    dx_old = dx;
    dx = mid - x;
    x = mid;
  }
  if (hi - lo <= tol) return {x, it, 0.0};
  throw NonConvergence("p-mean root finder exceeded " + std::to_string(max_iterations) +
                       " iterations (bracket width " + std::to_string(hi - lo) + ")");
}

}  // namespace detail

/// Unchecked p-mean on parallel spans. `guess` (ignored when NaN or outside the
/// sample range) seeds the safeguarded Newton iteration; `observe(lo, hi, F(lo),
/// F(hi))` sees every bracket update.
template <class Observer = detail::NoBracketObserver>
PMeanResult pmean_kernel(std::span<const double> values, std::span<const double> weights,
                         Exponent p, double tol,
                         double guess = std::numeric_limits<double>::quiet_NaN(),
                         Observer&& observe = {}, int max_iterations = 400) {
  double lo = 0.0, hi = 0.0;
  detail::positive_range(values, weights, lo, hi);
  if (!(lo <= hi)) throw InvalidSample("sample has no positive weight");
  if (tol <= 0.0) tol = default_pmean_tolerance(hi - lo);
  if (hi - lo == 0.0) return {lo, 0, 0.0};
  if (p.is_infinite()) return {0.5 * (lo + hi), 0, 0.0};
  const double q = p.value();
  if (q == 1.0) return {detail::weighted_median_kernel(values, weights), 0, 0.0};
  if (q == 2.0) {
    double s = 0.0, sw = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      s += weights[i] * values[i];
      sw += weights[i];
    }
    return {std::clamp(s / sw, lo, hi), 0, 0.0};
  }
  switch (detail::power_kind(q)) {
    case detail::PowerKind::half:
      return detail::root_find<detail::PowerKind::half>(values, weights, q, lo, hi, tol, guess,
                                                        max_iterations, observe);
    case detail::PowerKind::linear:
      return detail::root_find<detail::PowerKind::linear>(values, weights, q, lo, hi, tol, guess,
                                                          max_iterations, observe);
    case detail::PowerKind::quadratic:
      return detail::root_find<detail::PowerKind::quadratic>(values, weights, q, lo, hi, tol,
                                                             guess, max_iterations, observe);
    default:
      return detail::root_find<detail::PowerKind::generic>(values, weights, q, lo, hi, tol, guess,
                                                           max_iterations, observe);
  }
}

/// p-mean of a validated sample. tol <= 0 selects 1e-12 * max(1, spread).
inline PMeanResult compute_pmean(const WeightedSample& sample, Exponent p, double tol = 0.0) {
  return pmean_kernel(sample.values(), sample.weights(), p, tol);
}

/// p = 1 mean with the midpoint rule for non-unique minimizers.
inline double weighted_median(const WeightedSample& sample) {
  return detail::weighted_median_kernel(sample.values(), sample.weights());
}

/// Residual F(nu) of the characterizing equation (finite p only).
inline double pmean_equation(const WeightedSample& sample, Exponent p, double nu) {
  const double q = p.value();
  double f = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i)
    f += sample.weights()[i] * signed_power(sample.values()[i] - nu, q);
  return f;
}

}  // namespace vpharm
