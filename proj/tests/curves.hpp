#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The proxyrank Authors

// Generate-then-fit draws for the three curve families.
//
// Parameter ranges and x windows (training window of 12 points, holdout
// covering the second half of a window twice as wide):
//   power_law    a in [0.5, 1], b in [0.5, 1], c in [0.3, 1];   x = step, log-spaced 1..100, holdout 100..199
//   sigmoid      lower in [0, 0.25], upper in [0.75, 1], |slope| in [1.5, 4],
//                midpoint in [3.5, 4.5];                         x = log10 step, 2..6, holdout 6..10
//   exponential  eps in [0.5, 1], k in [2, 4], gamma in [0.8, 1.5];  x = 1..3, holdout 3..5

#include <cmath>
#include <vector>

#include "proxyrank/curvefit.hpp"
#include "synthetic.hpp"

namespace synth {

struct CurveDraw {
  proxyrank::CurveFamily family;
  std::vector<double> params;
  proxyrank::Series train, holdout;  // noisy when noise > 0
  proxyrank::Series holdout_clean;
};

inline double curve_value(proxyrank::CurveFamily f, const std::vector<double>& p, double x) {
  proxyrank::FitResult r;
  r.family = f;
  r.params = p;
  return r.predict(x);
}

inline CurveDraw draw_curve(Rng& rng, proxyrank::CurveFamily family, double noise) {
  using proxyrank::CurveFamily;
  CurveDraw d;
  d.family = family;
  std::vector<double> xs, hx;
  const int n = 12;
  switch (family) {
    case CurveFamily::power_law:
      d.params = {rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0), rng.uniform(0.3, 1.0)};
      for (int i = 0; i < n; ++i) xs.push_back(std::pow(100.0, i / (n - 1.0)));
      for (int i = 1; i <= 6; ++i) hx.push_back(100.0 + 99.0 * i / 6.0);
      break;
    case CurveFamily::sigmoid: {
      const double slope = rng.uniform(1.5, 4.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
      d.params = {rng.uniform(0.0, 0.25), rng.uniform(0.75, 1.0), slope, rng.uniform(3.5, 4.5)};
      for (int i = 0; i < n; ++i) xs.push_back(2.0 + 4.0 * i / (n - 1.0));
      for (int i = 1; i <= 6; ++i) hx.push_back(6.0 + 4.0 * i / 6.0);
      break;
    }
    case CurveFamily::exponential:
      d.params = {rng.uniform(0.5, 1.0), rng.uniform(2.0, 4.0), rng.uniform(0.8, 1.5)};
      for (int i = 0; i < n; ++i) xs.push_back(1.0 + 2.0 * i / (n - 1.0));
      for (int i = 1; i <= 6; ++i) hx.push_back(3.0 + 2.0 * i / 6.0);
      break;
  }
  for (double x : xs) {
    d.train.x.push_back(x);
    d.train.y.push_back(curve_value(family, d.params, x) + noise * rng.normal());
  }
  for (double x : hx) {
    const double y = curve_value(family, d.params, x);
    d.holdout_clean.x.push_back(x);
    d.holdout_clean.y.push_back(y);
    d.holdout.x.push_back(x);
    d.holdout.y.push_back(y + noise * rng.normal());
  }
  return d;
}

inline proxyrank::FitResult fit_curve(const CurveDraw& d) {
  using proxyrank::CurveFamily;
  switch (d.family) {
    case CurveFamily::power_law: return proxyrank::fit_power_law(d.train);
    case CurveFamily::sigmoid: return proxyrank::fit_sigmoid(d.train, {.bounded = true});
    case CurveFamily::exponential: return proxyrank::fit_exponential(d.train);
  }
  return {};
}

/// Largest relative parameter error; sigmoid parameters are compared after
/// mapping the truth to the fit's lower <= upper convention.
inline double max_relative_error(const CurveDraw& d, const proxyrank::FitResult& f) {
  auto truth = d.params;
  if (d.family == proxyrank::CurveFamily::sigmoid && truth[0] > truth[1]) {
    std::swap(truth[0], truth[1]);
    truth[2] = -truth[2];
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    worst = std::max(worst, std::abs(f.params[i] - truth[i]) / std::max(std::abs(truth[i]), 1e-3));
  return worst;
}

}  // namespace synth
