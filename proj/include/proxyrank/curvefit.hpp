#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The proxyrank Authors

/**
 * @file curvefit.hpp
 * @brief Extrapolation curves: power law, generalized logistic, exponential
 *
 *   power_law:    y = a - b * x^(-c),                        c > 0, x > 0
 *   sigmoid:      y = lower + (upper - lower) / (1 + exp(-slope * (x - midpoint)))
 *   exponential:  y = eps - k * exp(-gamma * x),             gamma > 0
 *
 * The power law and exponential have a single nonlinear parameter. They are
 * fit by a log-spaced grid over it with closed-form least squares for the two
 * linear parameters, then refined jointly with damped Gauss-Newton. Damping
 * only accepts steps that lower the residual sum of squares, so refinement
 * never ends above the best grid point. The sigmoid uses a deterministic
 * multi-start grid over (midpoint, slope) with the same refinement.
 */

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "proxyrank/error.hpp"
#include "proxyrank/proxylib.hpp"

namespace proxyrank {

struct Series {
  std::vector<double> x;
  std::vector<double> y;
  std::string x_label;
  std::string y_label;

  std::size_t size() const { return x.size(); }

  void validate(std::size_t min_points, const char* what) const {
    if (x.size() != y.size()) throw ValidationError(std::string(what) + ": x and y lengths differ");
    if (x.size() < min_points)
      throw ValidationError(std::string(what) + ": needs at least " + std::to_string(min_points) + " points, got " +
                            std::to_string(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
        throw ValidationError(std::string(what) + ": non-finite value at point " + std::to_string(i));
  }

  Series slice(std::size_t begin, std::size_t end) const {
    Series s;
    s.x.assign(x.begin() + static_cast<std::ptrdiff_t>(begin), x.begin() + static_cast<std::ptrdiff_t>(end));
    s.y.assign(y.begin() + static_cast<std::ptrdiff_t>(begin), y.begin() + static_cast<std::ptrdiff_t>(end));
    s.x_label = x_label;
    s.y_label = y_label;
    return s;
  }

  double y_range() const {
    if (y.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    return *hi - *lo;
  }
};

enum class CurveFamily { power_law, sigmoid, exponential };

inline const char* to_string(CurveFamily f) {
  switch (f) {
    case CurveFamily::power_law: return "power_law";
    case CurveFamily::sigmoid: return "sigmoid";
    case CurveFamily::exponential: return "exponential";
  }
  return "power_law";
}

struct FitResult {
  CurveFamily family = CurveFamily::power_law;
  // power_law: a, b, c; sigmoid: lower, upper, slope, midpoint; exponential: eps, k, gamma
  std::vector<double> params;
  double rss = 0.0;
  double r2 = 0.0;
  bool degenerate = false;       // constant target, flat fit
  bool underdetermined = false;  // too few distinct x to identify the nonlinear parameter
  bool converged = true;
  int iterations = 0;
  double grid_rss = 0.0;         // best grid / start RSS before refinement

  std::vector<std::string> param_names() const {
    switch (family) {
      case CurveFamily::power_law: return {"a", "b", "c"};
      case CurveFamily::sigmoid: return {"lower", "upper", "slope", "midpoint"};
      case CurveFamily::exponential: return {"eps", "k", "gamma"};
    }
    return {};
  }

  /// Power laws are only defined for x > 0 and return NaN elsewhere.
  double predict(double x) const {
    switch (family) {
      case CurveFamily::power_law:
        if (!(x > 0.0)) return std::numeric_limits<double>::quiet_NaN();
        return params[0] - params[1] * std::pow(x, -params[2]);
      case CurveFamily::sigmoid: {
        const double z = params[2] * (x - params[3]);
        return params[0] + (params[1] - params[0]) / (1.0 + std::exp(-z));
      }
      case CurveFamily::exponential:
        return params[0] - params[1] * std::exp(-params[2] * x);
    }
    return std::numeric_limits<double>::quiet_NaN();
  }
};

namespace detail {

inline double rss_of(const Series& s, const FitResult& f) {
  double r = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double e = s.y[i] - f.predict(s.x[i]);
    r += e * e;
  }
  return r;
}

inline double r_squared(const Series& s, double rss) {
  double m = 0.0;
  for (double v : s.y) m += v;
  m /= static_cast<double>(s.size());
  double tss = 0.0;
  for (double v : s.y) tss += (v - m) * (v - m);
  if (tss <= 0.0) return rss <= 0.0 ? 1.0 : 0.0;
  return 1.0 - rss / tss;
}

inline bool is_constant(std::span<const double> y) {
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  return (*hi - *lo) <= 1e-12 * std::max(1.0, std::max(std::abs(*lo), std::abs(*hi)));
}

inline std::size_t distinct_count(std::span<const double> x) {
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Least squares y ~ p0 * u + p1 * v (two basis columns). False when singular.
inline bool two_column_ls(std::span<const double> u, std::span<const double> v, std::span<const double> y,
                          double& p0, double& p1) {
  double uu = 0, uv = 0, vv = 0, uy = 0, vy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    uu += u[i] * u[i];
    uv += u[i] * v[i];
    vv += v[i] * v[i];
    uy += u[i] * y[i];
    vy += v[i] * y[i];
  }
  const double det = uu * vv - uv * uv;
  if (!(std::abs(det) > 1e-14 * std::max(1e-300, uu * vv))) return false;
  p0 = (vv * uy - uv * vy) / det;
  p1 = (uu * vy - uv * uy) / det;
  return true;
}

/// Solves A x = b in place by Gaussian elimination with partial pivoting.
inline bool solve_dense(std::vector<double> A, std::vector<double> b, std::size_t n, std::vector<double>& x) {
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(A[r * n + c]) > std::abs(A[piv * n + c])) piv = r;
    if (!(std::abs(A[piv * n + c]) > 0.0)) return false;
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(A[c * n + k], A[piv * n + k]);
      std::swap(b[c], b[piv]);
    }
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = A[r * n + c] / A[c * n + c];
      for (std::size_t k = c; k < n; ++k) A[r * n + k] -= f * A[c * n + k];
      b[r] -= f * b[c];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= A[i * n + k] * x[k];
    x[i] = s / A[i * n + i];
  }
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

struct RefineOutcome {
  int iterations = 0;
  bool converged = false;
};

/// Damped Gauss-Newton (Levenberg-Marquardt). `jac(p, x, row)` fills the
/// gradient of the model at x; `project(p)` enforces parameter constraints.
template <typename Jacobian, typename Project>
RefineOutcome refine(FitResult& fit, const Series& s, Jacobian&& jac, Project&& project, int max_iter = 200,
                     double rtol = 1e-10) {
  const std::size_t d = fit.params.size();
  const std::size_t n = s.size();
  double rss = rss_of(s, fit);
  double lambda = 0.0;
  RefineOutcome out;
  std::vector<double> row(d), A(d * d), g(d), delta;
  for (int it = 0; it < max_iter; ++it) {
    std::fill(A.begin(), A.end(), 0.0);
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      jac(fit.params, s.x[i], row);
      const double r = s.y[i] - fit.predict(s.x[i]);
      for (std::size_t a = 0; a < d; ++a) {
        g[a] += row[a] * r;
        for (std::size_t b = 0; b < d; ++b) A[a * d + b] += row[a] * row[b];
      }
    }
    bool accepted = false;
    while (lambda <= 1e16) {
      // Parameters the projection moves are held at the bound and the step re-solved.
      std::vector<bool> fixed(d, false);
      FitResult trial = fit;
      bool solved = false;
      for (std::size_t pass = 0; pass <= d; ++pass) {
        std::vector<double> M = A, rhs = g;
        for (std::size_t a = 0; a < d; ++a) {
          M[a * d + a] += lambda * std::max(A[a * d + a], 1e-300);
          if (!fixed[a]) continue;
          for (std::size_t b = 0; b < d; ++b) M[a * d + b] = M[b * d + a] = 0.0;
          M[a * d + a] = 1.0;
          rhs[a] = 0.0;
        }
        if (!(solved = solve_dense(M, rhs, d, delta))) break;
        trial.params = fit.params;
        for (std::size_t a = 0; a < d; ++a) trial.params[a] += delta[a];
        const auto raw = trial.params;
        project(trial.params);
        bool moved = false;
        for (std::size_t a = 0; a < d; ++a)
          if (!fixed[a] && trial.params[a] != raw[a]) fixed[a] = moved = true;
        if (!moved) break;
      }
      if (solved) {
        const double trss = rss_of(s, trial);
        if (std::isfinite(trss) && trss < rss) {
          const double rel = (rss - trss) / std::max(rss, 1e-300);
          double step = 0.0;
          for (std::size_t a = 0; a < d; ++a)
            step = std::max(step, std::abs(trial.params[a] - fit.params[a]) / (std::abs(fit.params[a]) + rtol));
          fit.params = trial.params;
          rss = trss;
          accepted = true;
          lambda = lambda > 1e-12 ? lambda / 10.0 : 0.0;
          out.iterations = it + 1;
          if (rel < rtol || step < rtol || rss <= 1e-300) {
            out.converged = true;
            fit.rss = rss;
            return out;
          }
          break;
        }
      }
      lambda = lambda == 0.0 ? 1e-9 : lambda * 10.0;
    }
    if (!accepted) {
      // no damping level improves RSS: stationary point
      out.converged = true;
      break;
    }
  }
  fit.rss = rss;
  return out;
}

inline std::vector<double> log_grid(double lo, double hi, int points) {
  std::vector<double> g(points);
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < points; ++i) g[i] = std::pow(10.0, a + (b - a) * i / (points - 1));
  return g;
}

/// Shared fit for y = p0 - p1 * basis(x; theta), theta > 0.
template <typename Basis, typename BasisDeriv>
FitResult fit_one_nonlinear(CurveFamily family, const Series& s, Basis&& basis, BasisDeriv&& dbasis) {
  FitResult best;
  best.family = family;
  if (is_constant(s.y)) {
    best.params = {mean_of(s.y), 0.0, 1.0};
    best.degenerate = true;
    best.rss = rss_of(s, best);
    best.grid_rss = best.rss;
    best.r2 = r_squared(s, best.rss);
    return best;
  }
  const std::size_t n = s.size();
  std::vector<double> ones(n, 1.0), phi(n);
  double best_rss = std::numeric_limits<double>::infinity();
  for (double theta : log_grid(1e-3, 10.0, 64)) {
    for (std::size_t i = 0; i < n; ++i) phi[i] = -basis(s.x[i], theta);
    double p0, p1;
    if (!two_column_ls(ones, phi, s.y, p0, p1)) continue;
    FitResult cand;
    cand.family = family;
    cand.params = {p0, p1, theta};
    const double r = rss_of(s, cand);
    if (std::isfinite(r) && r < best_rss) {
      best_rss = r;
      best = cand;
    }
  }
  if (!std::isfinite(best_rss)) {
    // basis is constant over x for every grid value: only a level fits
    best.params = {mean_of(s.y), 0.0, 1.0};
    best.underdetermined = true;
    best.rss = rss_of(s, best);
    best.grid_rss = best.rss;
    best.r2 = r_squared(s, best.rss);
    return best;
  }
  best.rss = best_rss;
  best.grid_rss = best_rss;
  if (distinct_count(s.x) < 3) {
    best.underdetermined = true;
  } else {
    auto jac = [&](const std::vector<double>& p, double x, std::vector<double>& row) {
      row[0] = 1.0;
      row[1] = -basis(x, p[2]);
      row[2] = -p[1] * dbasis(x, p[2]);
    };
    auto project = [](std::vector<double>& p) { p[2] = std::max(p[2], 1e-12); };
    const auto res = refine(best, s, jac, project);
    best.iterations = res.iterations;
    best.converged = res.converged;
  }
  best.r2 = r_squared(s, best.rss);
  return best;
}

}  // namespace detail

inline FitResult fit_power_law(const Series& s) {
  s.validate(4, "power law fit");
  for (double x : s.x)
    if (!(x > 0.0)) throw ValidationError("power law fit: x must be > 0");
  return detail::fit_one_nonlinear(
      CurveFamily::power_law, s, [](double x, double c) { return std::pow(x, -c); },
      [](double x, double c) { return -std::log(x) * std::pow(x, -c); });
}

inline FitResult fit_exponential(const Series& s) {
  s.validate(4, "exponential fit");
  return detail::fit_one_nonlinear(
      CurveFamily::exponential, s, [](double x, double g) { return std::exp(-g * x); },
      [](double x, double g) { return -x * std::exp(-g * x); });
}

struct SigmoidOptions {
  /// Clamp both asymptotes to [0, 1] (targets that are accuracies).
  bool bounded = true;
};

inline FitResult fit_sigmoid(const Series& s, const SigmoidOptions& opt = {}) {
  s.validate(5, "sigmoid fit");
  FitResult best;
  best.family = CurveFamily::sigmoid;
  const double xmin = *std::min_element(s.x.begin(), s.x.end());
  const double xmax = *std::max_element(s.x.begin(), s.x.end());
  if (detail::is_constant(s.y)) {
    const double m = detail::mean_of(s.y);
    best.params = {m, m, 0.0, 0.5 * (xmin + xmax)};
    best.degenerate = true;
    best.rss = detail::rss_of(s, best);
    best.grid_rss = best.rss;
    best.r2 = detail::r_squared(s, best.rss);
    return best;
  }
  const std::size_t n = s.size();
  auto project = [&](std::vector<double>& p) {
    if (opt.bounded) {
      p[0] = std::clamp(p[0], 0.0, 1.0);
      p[1] = std::clamp(p[1], 0.0, 1.0);
    }
  };
  auto jac = [](const std::vector<double>& p, double x, std::vector<double>& row) {
    const double z = p[2] * (x - p[3]);
    const double sg = 1.0 / (1.0 + std::exp(-z));
    const double ds = sg * (1.0 - sg);
    const double span = p[1] - p[0];
    row[0] = 1.0 - sg;
    row[1] = sg;
    row[2] = span * ds * (x - p[3]);
    row[3] = -span * ds * p[2];
  };

  double best_rss = std::numeric_limits<double>::infinity();
  bool any_converged = false;
  std::vector<double> u(n), v(n);
  std::string diagnostics;
  for (double q : {0.25, 0.5, 0.75}) {
    const double mid = xmin + q * (xmax - xmin);
    for (double slope : {0.5, -0.5, 1.0, -1.0, 2.0, -2.0, 4.0, -4.0}) {
      for (std::size_t i = 0; i < n; ++i) {
        const double sg = 1.0 / (1.0 + std::exp(-slope * (s.x[i] - mid)));
        u[i] = 1.0 - sg;
        v[i] = sg;
      }
      FitResult cand;
      cand.family = CurveFamily::sigmoid;
      double lo, hi;
      if (!detail::two_column_ls(u, v, s.y, lo, hi)) continue;
      cand.params = {lo, hi, slope, mid};
      project(cand.params);
      cand.grid_rss = detail::rss_of(s, cand);
      cand.rss = cand.grid_rss;
      const auto res = detail::refine(cand, s, jac, project);
      cand.iterations = res.iterations;
      cand.converged = res.converged;
      if (!std::isfinite(cand.rss)) continue;
      any_converged = any_converged || res.converged;
      if (cand.rss < best_rss) {
        best_rss = cand.rss;
        best = cand;
      }
    }
  }
  if (!std::isfinite(best_rss) || !any_converged) {
    throw Error("sigmoid fit did not converge from any start; best rss=" + std::to_string(best_rss) +
                (best.params.size() == 4 ? ", params=(" + std::to_string(best.params[0]) + ", " +
                                               std::to_string(best.params[1]) + ", " + std::to_string(best.params[2]) +
                                               ", " + std::to_string(best.params[3]) + ")"
                                         : std::string()));
  }
  if (best.params[0] > best.params[1]) {
    std::swap(best.params[0], best.params[1]);
    best.params[2] = -best.params[2];
  }
  best.r2 = detail::r_squared(s, best.rss);
  return best;
}

enum class ErrorMode { nmae, rmse };

/// nmae: mean |predict - y| / train_range. rmse: sqrt(mean (predict - y)^2).
inline double extrapolation_error(const FitResult& fit, const Series& holdout, ErrorMode mode,
                                  double train_range = 0.0) {
  if (holdout.size() == 0) throw ValidationError("extrapolation_error: empty holdout");
  if (holdout.x.size() != holdout.y.size()) throw ValidationError("extrapolation_error: x and y lengths differ");
  if (mode == ErrorMode::nmae && !(train_range > 0.0))
    throw ValidationError("extrapolation_error: NMAE needs a positive training range");
  double acc = 0.0;
  for (std::size_t i = 0; i < holdout.size(); ++i) {
    const double e = fit.predict(holdout.x[i]) - holdout.y[i];
    acc += mode == ErrorMode::nmae ? std::abs(e) : e * e;
  }
  acc /= static_cast<double>(holdout.size());
  return mode == ErrorMode::nmae ? acc / train_range : std::sqrt(acc);
}

struct InnerSplitResult {
  ProxyId id;
  FitResult fit;       // refit on the full window
  double inner_nmae = 0.0;
  std::map<ProxyId, double> candidates;  // inner NMAE per non-degenerate proxy
};

/// Fits a power law to the earliest ceil(fraction * n) points of each series,
/// scores NMAE on the rest, keeps the minimizer (lowest ProxyId on ties), and
/// refits it on the full series.
inline InnerSplitResult inner_split_select(const std::map<ProxyId, Series>& per_proxy, double split_fraction = 0.5) {
  if (!(split_fraction > 0.0 && split_fraction < 1.0))
    throw ValidationError("inner split: fraction must be in (0, 1) so that a holdout remains");
  if (per_proxy.empty()) throw ValidationError("inner split: no proxy series");
  InnerSplitResult out;
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  for (const auto& [id, s] : per_proxy) {
    s.validate(1, "inner split series");
    const auto n_train = static_cast<std::size_t>(std::ceil(split_fraction * static_cast<double>(s.size())));
    if (n_train < 4)
      throw ValidationError("inner split: " + id.str() + " has " + std::to_string(n_train) +
                            " training points, at least 4 are required");
    if (n_train >= s.size()) throw ValidationError("inner split: " + id.str() + " leaves no holdout points");
    const Series train = s.slice(0, n_train);
    const Series hold = s.slice(n_train, s.size());
    const double range = train.y_range();
    if (!(range > 0.0)) continue;
    FitResult fit;
    try {
      fit = fit_power_law(train);
    } catch (const ValidationError&) {
      continue;  // e.g. non-positive x
    }
    if (fit.degenerate) continue;
    const double e = extrapolation_error(fit, hold, ErrorMode::nmae, range);
    if (!std::isfinite(e)) continue;
    out.candidates[id] = e;
    if (e < best) {
      best = e;
      out.id = id;
      found = true;
    }
  }
  if (!found) throw ValidationError("inner split: every proxy series is degenerate");
  out.inner_nmae = best;
  out.fit = fit_power_law(per_proxy.at(out.id));
  return out;
}

}  // namespace proxyrank
