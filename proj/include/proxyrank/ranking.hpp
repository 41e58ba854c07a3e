#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The proxyrank Authors

/**
 * @file ranking.hpp
 * @brief Rank correlation, decision accuracy and the four proxy ranker classes
 *
 * Rankers map a ProxyVector to a scalar whose ordering over subjects should
 * track downstream scores:
 *  - univariate:      s * Phi_j, with the orientation s chosen at selection
 *  - sparse3:         sum_k alpha_k Phi_{j_k}, exhaustive triplet x grid sweep
 *  - ranksvm_linear:  w . z(Phi), pairwise hinge loss
 *  - ranksvm_rbf:     sum_i alpha_i k(z(Phi), z_i), Gaussian kernel
 *
 * z(.) is the per-task z-score over the subjects being ranked; the selection
 * rankers work on raw values (their orderings are already per-task).
 * Undefined entries are imputed with the per-task mean of the defined ones.
 */

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "proxyrank/error.hpp"
#include "proxyrank/format.hpp"
#include "proxyrank/proxylib.hpp"

namespace proxyrank {

enum class SubjectKind { model, corpus, checkpoint };

inline const char* to_string(SubjectKind k) {
  switch (k) {
    case SubjectKind::model: return "model";
    case SubjectKind::corpus: return "corpus";
    case SubjectKind::checkpoint: return "checkpoint";
  }
  return "model";
}

inline std::optional<SubjectKind> parse_subject_kind(std::string_view s) {
  if (s == "model") return SubjectKind::model;
  if (s == "corpus") return SubjectKind::corpus;
  if (s == "checkpoint") return SubjectKind::checkpoint;
  return std::nullopt;
}

/// Downstream score per (subject, task). Subjects and tasks keep first-seen order.
class ScoreTable {
 public:
  SubjectKind kind = SubjectKind::model;

  void insert(const std::string& subject, const std::string& task, double score) {
    if (!std::isfinite(score))
      throw ValidationError("score for (" + subject + ", " + task + ") is not finite");
    if (!scores_.emplace(std::make_pair(subject, task), score).second)
      throw ValidationError("duplicate score for (" + subject + ", " + task + ")");
    remember(subjects_, subject);
    remember(tasks_, task);
  }

  std::optional<double> find(const std::string& subject, const std::string& task) const {
    auto it = scores_.find({subject, task});
    if (it == scores_.end()) return std::nullopt;
    return it->second;
  }

  double at(const std::string& subject, const std::string& task) const {
    if (auto v = find(subject, task)) return *v;
    throw ValidationError("missing score for (" + subject + ", " + task + ")");
  }

  const std::vector<std::string>& subjects() const { return subjects_; }
  const std::vector<std::string>& tasks() const { return tasks_; }
  std::size_t size() const { return scores_.size(); }
  bool empty() const { return scores_.empty(); }

 private:
  static void remember(std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  }

  std::map<std::pair<std::string, std::string>, double> scores_;
  std::vector<std::string> subjects_;
  std::vector<std::string> tasks_;
};

/// Task-level proxy vectors keyed by (subject, task).
class FeatureTable {
 public:
  void insert(ProxyVector v) {
    auto key = std::make_pair(v.subject, v.task);
    if (!table_.emplace(key, std::move(v)).second)
      throw ValidationError("duplicate features for (" + key.first + ", " + key.second + ")");
  }

  const ProxyVector& at(const std::string& subject, const std::string& task) const {
    auto it = table_.find({subject, task});
    if (it == table_.end())
      throw ValidationError("missing features for (" + subject + ", " + task + ")");
    return it->second;
  }

  bool contains(const std::string& subject, const std::string& task) const {
    return table_.count({subject, task}) > 0;
  }

  std::size_t size() const { return table_.size(); }
  auto begin() const { return table_.begin(); }
  auto end() const { return table_.end(); }

 private:
  std::map<std::pair<std::string, std::string>, ProxyVector> table_;
};

// ---------------------------------------------------------------------------
// Spearman
// ---------------------------------------------------------------------------

namespace detail {

/// Twice the average (fractional) rank, so tied ranks stay integral.
inline void doubled_ranks(const double* x, std::size_t n, std::size_t* order, double* out) {
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (n <= 32) {
    for (std::size_t i = 1; i < n; ++i) {
      const std::size_t cur = order[i];
      const double v = x[cur];
      std::size_t j = i;
      while (j > 0 && x[order[j - 1]] > v) {
        order[j] = order[j - 1];
        --j;
      }
      order[j] = cur;
    }
  } else {
    std::stable_sort(order, order + n, [x](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  }
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && x[order[j]] == x[order[i]]) ++j;
    // 1-based ranks i+1..j averaged, doubled: (i+1+j)
    const double r2 = static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) out[order[k]] = r2;
    i = j;
  }
}

/// Pearson correlation of two doubled-rank vectors.
inline std::optional<double> rank_pearson(const double* rx, const double* ry, std::size_t n) {
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += rx[i];
    sy += ry[i];
    sxx += rx[i] * rx[i];
    syy += ry[i] * ry[i];
    sxy += rx[i] * ry[i];
  }
  const double nn = static_cast<double>(n);
  const double dx = nn * sxx - sx * sx;
  const double dy = nn * syy - sy * sy;
  if (!(dx > 0.0) || !(dy > 0.0)) return std::nullopt;
  const double rho = (nn * sxy - sx * sy) / std::sqrt(dx * dy);
  return std::clamp(rho, -1.0, 1.0);
}

}  // namespace detail

/// Spearman rho with average ranks for ties. nullopt when n < 2 or either
/// side has no rank variance.
inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw ValidationError("spearman: inputs have different lengths");
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  std::vector<std::size_t> order(n);
  std::vector<double> rx(n), ry(n);
  detail::doubled_ranks(x.data(), n, order.data(), rx.data());
  detail::doubled_ranks(y.data(), n, order.data(), ry.data());
  return detail::rank_pearson(rx.data(), ry.data(), n);
}

// ---------------------------------------------------------------------------
// Decision accuracy and preference pairs
// ---------------------------------------------------------------------------

struct DecisionResult {
  double accuracy = 0.0;
  std::size_t comparable_pairs = 0;
};

/// Fraction of subject pairs (distinct truth) whose predicted order agrees.
/// Pairs tied in the prediction count as disagreements.
inline DecisionResult decision_accuracy_detail(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size())
    throw ValidationError("decision_accuracy: inputs have different lengths");
  std::size_t agree = 0, total = 0;
  for (std::size_t a = 0; a < pred.size(); ++a) {
    for (std::size_t b = a + 1; b < pred.size(); ++b) {
      const double dt = truth[a] - truth[b];
      if (dt == 0.0) continue;
      ++total;
      const double dp = pred[a] - pred[b];
      if ((dp > 0.0 && dt > 0.0) || (dp < 0.0 && dt < 0.0)) ++agree;
    }
  }
  if (total == 0) throw ValidationError("decision_accuracy: no comparable pairs");
  return {static_cast<double>(agree) / static_cast<double>(total), total};
}

inline double decision_accuracy(std::span<const double> pred, std::span<const double> truth) {
  return decision_accuracy_detail(pred, truth).accuracy;
}

inline double decision_accuracy(const std::map<std::string, double>& pred,
                                 const std::map<std::string, double>& truth) {
  if (pred.size() != truth.size()) throw ValidationError("decision_accuracy: subject sets differ");
  std::vector<double> p, t;
  for (const auto& [subject, value] : truth) {
    auto it = pred.find(subject);
    if (it == pred.end()) throw ValidationError("decision_accuracy: no prediction for " + subject);
    p.push_back(it->second);
    t.push_back(value);
  }
  return decision_accuracy(p, t);
}

struct PreferencePair {
  std::string task;
  std::string winner;
  std::string loser;
};

inline std::vector<PreferencePair> preference_pairs(const ScoreTable& scores,
                                                    std::span<const std::string> tasks,
                                                    std::span<const std::string> subjects) {
  std::vector<PreferencePair> pairs;
  for (const auto& task : tasks) {
    std::vector<double> y;
    y.reserve(subjects.size());
    for (const auto& s : subjects) y.push_back(scores.at(s, task));
    for (std::size_t a = 0; a < subjects.size(); ++a) {
      for (std::size_t b = a + 1; b < subjects.size(); ++b) {
        if (y[a] > y[b]) pairs.push_back({task, subjects[a], subjects[b]});
        else if (y[b] > y[a]) pairs.push_back({task, subjects[b], subjects[a]});
      }
    }
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Per-task feature matrices and standardization
// ---------------------------------------------------------------------------

using FeatureRow = std::array<double, kNumProxies>;

/// Per-feature mean and standard deviation over one task's subjects.
/// Zero-variance features standardize to 0.
struct Standardizer {
  FeatureRow mean{};
  FeatureRow scale{};  // 0 marks a zero-variance feature

  static Standardizer fit(std::span<const FeatureRow> rows) {
    Standardizer s;
    if (rows.empty()) return s;
    const double n = static_cast<double>(rows.size());
    for (int j = 0; j < kNumProxies; ++j) {
      double m = 0.0;
      for (const auto& r : rows) m += r[j];
      m /= n;
      double ss = 0.0;
      for (const auto& r : rows) ss += (r[j] - m) * (r[j] - m);
      const double sd = std::sqrt(ss / n);
      s.mean[j] = m;
      s.scale[j] = sd > 1e-12 * std::max(1.0, std::abs(m)) ? sd : 0.0;
    }
    return s;
  }

  FeatureRow apply(const FeatureRow& raw) const {
    FeatureRow z{};
    for (int j = 0; j < kNumProxies; ++j) z[j] = scale[j] > 0.0 ? (raw[j] - mean[j]) / scale[j] : 0.0;
    return z;
  }
};

/// Dense rows for `subjects` on `task`, undefined entries imputed with the
/// mean of the defined entries of that feature (0 if none are defined).
inline std::vector<FeatureRow> task_rows(const FeatureTable& features, const std::string& task,
                                         std::span<const std::string> subjects) {
  std::vector<FeatureRow> rows(subjects.size());
  FeatureRow sum{};
  std::array<int, kNumProxies> count{};
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const auto& v = features.at(subjects[s], task);
    rows[s] = v.values;
    for (int j = 0; j < kNumProxies; ++j) {
      if (v.defined[j]) {
        sum[j] += v.values[j];
        ++count[j];
      }
    }
  }
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const auto& v = features.at(subjects[s], task);
    for (int j = 0; j < kNumProxies; ++j)
      if (!v.defined[j]) rows[s][j] = count[j] > 0 ? sum[j] / count[j] : 0.0;
  }
  return rows;
}

// ---------------------------------------------------------------------------
// RankSVM solvers on generic point sets
// ---------------------------------------------------------------------------

/// Points plus (winner, loser) index pairs into them.
struct PairwiseProblem {
  std::vector<std::vector<double>> points;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

struct SvmOptions {
  double regularization = 1.0;            // C
  std::optional<double> kernel_width;     // RBF only; median heuristic when unset
  int max_iterations = 2000;
  double tolerance = 1e-6;                // relative objective change
};

struct SolverTrace {
  std::vector<double> objective;  // objective after each accepted iteration, [0] = start
  int iterations = 0;
  bool converged = false;
};

namespace detail {

/// Subgradient descent with backtracking: a step is only accepted when it
/// lowers the objective, so the trace is non-increasing. Stops on an
/// iteration budget, a relative change below tolerance, or when no step
/// size along the subgradient decreases the objective.
template <typename Objective, typename Subgradient>
SolverTrace descend(std::vector<double>& x, Objective&& objective, Subgradient&& subgradient,
                    const SvmOptions& opt) {
  SolverTrace trace;
  double f = objective(x);
  trace.objective.push_back(f);
  double step = 1.0;
  std::vector<double> g(x.size()), trial(x.size());
  for (int it = 0; it < opt.max_iterations; ++it) {
    subgradient(x, g);
    double gnorm = 0.0;
    for (double v : g) gnorm += v * v;
    if (gnorm == 0.0) {
      trace.converged = true;
      break;
    }
    bool accepted = false;
    double f_new = f;
    for (int attempt = 0; attempt < 60; ++attempt) {
      for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] - step * g[i];
      f_new = objective(trial);
      if (f_new < f) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      trace.converged = true;
      break;
    }
    x.swap(trial);
    const double rel = (f - f_new) / std::max(std::abs(f), 1e-300);
    f = f_new;
    trace.objective.push_back(f);
    trace.iterations = it + 1;
    step = std::min(step * 2.0, 1e6);
    if (rel < opt.tolerance) {
      trace.converged = true;
      break;
    }
  }
  return trace;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace detail

struct LinearSvmModel {
  std::vector<double> weights;
  SolverTrace trace;
  bool degenerate = false;

  double score(std::span<const double> x) const { return detail::dot(weights, x); }
};

/// Minimizes 1/2 |w|^2 + C sum_pairs max(0, 1 - w.(x_winner - x_loser)).
inline LinearSvmModel train_linear_ranksvm(const PairwiseProblem& problem, const SvmOptions& opt) {
  if (problem.pairs.empty()) throw DegenerateFitError("ranksvm: no preference pairs");
  if (opt.regularization < 0.0) throw ValidationError("ranksvm: regularization must be >= 0");
  const std::size_t dim = problem.points.empty() ? 0 : problem.points.front().size();
  std::vector<std::vector<double>> diffs;
  diffs.reserve(problem.pairs.size());
  for (auto [w, l] : problem.pairs) {
    std::vector<double> d(dim);
    for (std::size_t k = 0; k < dim; ++k) d[k] = problem.points[w][k] - problem.points[l][k];
    diffs.push_back(std::move(d));
  }
  const double C = opt.regularization;
  auto objective = [&](const std::vector<double>& w) {
    double f = 0.5 * detail::dot(w, w);
    for (const auto& d : diffs) f += C * std::max(0.0, 1.0 - detail::dot(w, d));
    return f;
  };
  auto subgradient = [&](const std::vector<double>& w, std::vector<double>& g) {
    g = w;
    for (const auto& d : diffs) {
      if (detail::dot(w, d) < 1.0)
        for (std::size_t k = 0; k < dim; ++k) g[k] -= C * d[k];
    }
  };
  LinearSvmModel model;
  model.weights.assign(dim, 0.0);
  model.trace = detail::descend(model.weights, objective, subgradient, opt);
  model.degenerate = std::all_of(model.weights.begin(), model.weights.end(), [](double v) { return v == 0.0; });
  return model;
}

struct RbfSvmModel {
  std::vector<std::vector<double>> support;
  std::vector<double> alpha;
  double width = 1.0;
  SolverTrace trace;
  bool degenerate = false;

  double kernel(std::span<const double> a, std::span<const double> b) const {
    return std::exp(-detail::squared_distance(a, b) / (2.0 * width * width));
  }

  double score(std::span<const double> x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < support.size(); ++i)
      if (alpha[i] != 0.0) s += alpha[i] * kernel(x, support[i]);
    return s;
  }
};

/// Median Euclidean distance over distinct point pairs; 1 if that is 0.
inline double median_distance(const std::vector<std::vector<double>>& points) {
  std::vector<double> d;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j)
      d.push_back(std::sqrt(detail::squared_distance(points[i], points[j])));
  if (d.empty()) return 1.0;
  std::sort(d.begin(), d.end());
  const std::size_t m = d.size() / 2;
  const double med = d.size() % 2 ? d[m] : 0.5 * (d[m - 1] + d[m]);
  return med > 0.0 ? med : 1.0;
}

inline constexpr double kDegenerateScoreRange = 1e-9;

/// f(x) = sum_i alpha_i k(x, x_i) over the problem points, fit on the same
/// pairwise hinge objective with RKHS norm 1/2 alpha' K alpha. Descent uses
/// the functional subgradient (the K-preconditioned one), which is a descent
/// direction whenever K is positive semidefinite.
inline RbfSvmModel train_rbf_ranksvm(const PairwiseProblem& problem, const SvmOptions& opt) {
  if (problem.pairs.empty()) throw DegenerateFitError("ranksvm: no preference pairs");
  if (opt.regularization < 0.0) throw ValidationError("ranksvm: regularization must be >= 0");
  RbfSvmModel model;
  model.support = problem.points;
  model.width = opt.kernel_width ? *opt.kernel_width : median_distance(problem.points);
  if (!(model.width > 0.0)) throw ValidationError("ranksvm: kernel width must be > 0");
  const std::size_t m = problem.points.size();
  std::vector<double> K(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) K[i * m + j] = model.kernel(problem.points[i], problem.points[j]);
  const double C = opt.regularization;

  auto fvals = [&](const std::vector<double>& a) {
    std::vector<double> f(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) f[i] += K[i * m + j] * a[j];
    return f;
  };
  auto objective = [&](const std::vector<double>& a) {
    const auto f = fvals(a);
    double obj = 0.5 * detail::dot(a, f);
    for (auto [w, l] : problem.pairs) obj += C * std::max(0.0, 1.0 - (f[w] - f[l]));
    return obj;
  };
  auto subgradient = [&](const std::vector<double>& a, std::vector<double>& g) {
    const auto f = fvals(a);
    g = a;
    for (auto [w, l] : problem.pairs) {
      if (f[w] - f[l] < 1.0) {
        g[w] -= C;
        g[l] += C;
      }
    }
  };
  model.alpha.assign(m, 0.0);
  model.trace = detail::descend(model.alpha, objective, subgradient, opt);
  const auto f = fvals(model.alpha);
  const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
  model.degenerate = f.empty() || (*hi - *lo) < kDegenerateScoreRange;
  return model;
}

// ---------------------------------------------------------------------------
// Rankers over the proxy library
// ---------------------------------------------------------------------------

enum class RankerVariant { univariate, sparse3, ranksvm_linear, ranksvm_rbf };

inline const char* to_string(RankerVariant v) {
  switch (v) {
    case RankerVariant::univariate: return "univariate";
    case RankerVariant::sparse3: return "sparse3";
    case RankerVariant::ranksvm_linear: return "ranksvm_linear";
    case RankerVariant::ranksvm_rbf: return "ranksvm_rbf";
  }
  return "univariate";
}

inline std::optional<RankerVariant> parse_ranker_variant(std::string_view s) {
  for (auto v : {RankerVariant::univariate, RankerVariant::sparse3, RankerVariant::ranksvm_linear,
                 RankerVariant::ranksvm_rbf})
    if (s == to_string(v)) return v;
  return std::nullopt;
}

struct Ranker {
  RankerVariant variant = RankerVariant::univariate;
  bool fitted = false;
  bool degenerate = false;

  // univariate / sparse3: oriented coefficients over the selected ids
  std::vector<ProxyId> ids;
  std::vector<double> coefficients;
  double selection_objective = 0.0;  // oriented mean held-in rho

  LinearSvmModel linear;
  RbfSvmModel rbf;

  // Fit-time per-task state (means for imputation, scales for z-scoring).
  std::map<std::string, Standardizer> task_state;

  bool standardizes() const {
    return variant == RankerVariant::ranksvm_linear || variant == RankerVariant::ranksvm_rbf;
  }

  std::string describe() const {
    std::string out = to_string(variant);
    out += ":";
    switch (variant) {
      case RankerVariant::univariate:
      case RankerVariant::sparse3:
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (k > 0) out += " ";
          out += (coefficients[k] < 0 ? "-" : "+");
          out += format_g6(std::abs(coefficients[k])) + "*" + ids[k].str();
        }
        break;
      case RankerVariant::ranksvm_linear:
        out += "iterations=" + std::to_string(linear.trace.iterations);
        break;
      case RankerVariant::ranksvm_rbf:
        out += "width=" + format_g6(rbf.width) + " iterations=" + std::to_string(rbf.trace.iterations);
        break;
    }
    return out;
  }

  /// Score of one raw feature row. `state` supplies imputation means and,
  /// for the RankSVM variants, the z-scoring of the row's task.
  double score_row(const FeatureRow& raw, const Standardizer& state) const {
    if (!fitted) throw Error("ranker is not fitted");
    switch (variant) {
      case RankerVariant::univariate:
      case RankerVariant::sparse3: {
        double s = 0.0;
        for (std::size_t k = 0; k < ids.size(); ++k) s += coefficients[k] * raw[ids[k].index()];
        return s;
      }
      case RankerVariant::ranksvm_linear: {
        const auto z = state.apply(raw);
        return linear.score(z);
      }
      case RankerVariant::ranksvm_rbf: {
        const auto z = state.apply(raw);
        return rbf.score(z);
      }
    }
    return 0.0;
  }
};

/// Scores a single vector using the state captured for its task at fit time.
inline double score_model(const Ranker& ranker, const ProxyVector& v) {
  if (!ranker.fitted) throw Error("ranker is not fitted");
  auto it = ranker.task_state.find(v.task);
  if (it == ranker.task_state.end()) {
    if (ranker.standardizes())
      throw ValidationError("no fit-time standardization for task " + v.task + "; use score_task");
    for (int j = 0; j < kNumProxies; ++j)
      if (!v.defined[j]) throw ValidationError("undefined entry with no fit-time mean for task " + v.task);
    return ranker.score_row(v.values, Standardizer{});
  }
  FeatureRow raw = v.values;
  for (int j = 0; j < kNumProxies; ++j)
    if (!v.defined[j]) raw[j] = it->second.mean[j];
  return ranker.score_row(raw, it->second);
}

/// Scores every subject on a task, standardizing over that same subject set.
inline std::vector<double> score_task(const Ranker& ranker, const FeatureTable& features,
                                      const std::string& task, std::span<const std::string> subjects) {
  const auto rows = task_rows(features, task, subjects);
  const auto state = Standardizer::fit(rows);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(ranker.score_row(r, state));
  return out;
}

namespace detail {

inline std::vector<double> task_scores(const ScoreTable& scores, const std::string& task,
                                       std::span<const std::string> subjects) {
  std::vector<double> y;
  y.reserve(subjects.size());
  for (const auto& s : subjects) y.push_back(scores.at(s, task));
  return y;
}

inline void check_selection_inputs(std::span<const std::string> tasks, std::span<const std::string> subjects) {
  if (subjects.size() < 2) throw ValidationError("ranker selection needs at least 2 subjects");
  if (tasks.empty()) throw ValidationError("ranker selection needs at least 1 held-in task");
}

inline void record_task_state(Ranker& r, const FeatureTable& features, std::span<const std::string> tasks,
                              std::span<const std::string> subjects) {
  for (const auto& t : tasks) r.task_state[t] = Standardizer::fit(task_rows(features, t, subjects));
}

}  // namespace detail

/// Picks the proxy maximizing |mean held-in Spearman|; an undefined task
/// correlation contributes 0 to the mean. Ties go to the lowest ProxyId.
inline Ranker select_univariate(const FeatureTable& features, const ScoreTable& scores,
                                std::span<const std::string> heldin_tasks,
                                std::span<const std::string> subjects) {
  detail::check_selection_inputs(heldin_tasks, subjects);
  std::array<double, kNumProxies> sum{};
  std::array<int, kNumProxies> defined{};
  std::vector<double> x(subjects.size());
  for (const auto& task : heldin_tasks) {
    const auto rows = task_rows(features, task, subjects);
    const auto y = detail::task_scores(scores, task, subjects);
    for (int j = 0; j < kNumProxies; ++j) {
      for (std::size_t s = 0; s < rows.size(); ++s) x[s] = rows[s][j];
      if (auto rho = spearman(x, y)) {
        sum[j] += *rho;
        ++defined[j];
      }
    }
  }
  int best = -1;
  double best_abs = -1.0;
  const double T = static_cast<double>(heldin_tasks.size());
  for (int j = 0; j < kNumProxies; ++j) {
    if (defined[j] == 0) continue;
    const double a = std::abs(sum[j] / T);
    if (a > best_abs) {
      best_abs = a;
      best = j;
    }
  }
  if (best < 0) throw DegenerateFitError("univariate selection: every correlation is undefined");
  Ranker r;
  r.variant = RankerVariant::univariate;
  r.ids = {ProxyId::from_index(best)};
  const double mean = sum[best] / T;
  r.coefficients = {mean >= 0.0 ? 1.0 : -1.0};
  r.selection_objective = std::abs(mean);
  r.fitted = true;
  detail::record_task_state(r, features, heldin_tasks, subjects);
  return r;
}

/// Values tried for the 2nd and 3rd sparse3 coefficients (the 1st is fixed
/// to +1), in sweep order.
struct CoefficientGrid {
  std::vector<double> values;

  /// {-10^e, ..., -10^-e, 0, 10^-e, ..., 10^e} for e = max_exponent, ascending.
  static CoefficientGrid log_spaced(int max_exponent = 3, bool include_zero = true) {
    CoefficientGrid g;
    for (int e = max_exponent; e >= -max_exponent; --e) g.values.push_back(-std::pow(10.0, e));
    if (include_zero) g.values.push_back(0.0);
    for (int e = -max_exponent; e <= max_exponent; ++e) g.values.push_back(std::pow(10.0, e));
    return g;
  }
};

struct Sparse3Options {
  CoefficientGrid grid = CoefficientGrid::log_spaced();
  unsigned threads = 1;
  /// Restrict the sweep to the first `library_size` proxies (tests, reduced libraries).
  int library_size = kNumProxies;
};

/// Triplet (i < j < k) with linear index in lexicographic order.
struct Triplet {
  int i, j, k;
};

inline std::vector<Triplet> enumerate_triplets(int n) {
  std::vector<Triplet> out;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = j + 1; k < n; ++k) out.push_back({i, j, k});
  return out;
}

namespace detail {

struct Sparse3Task {
  std::vector<std::vector<double>> columns;  // [feature][subject]
  std::vector<double> y_ranks;               // doubled ranks of the scores
};

struct Sparse3Best {
  double abs_mean = -1.0;
  double mean = 0.0;
  std::size_t triplet = 0;
  std::size_t c2 = 0, c3 = 0;
  bool found = false;
};

inline Sparse3Best sweep_sparse3(const std::vector<Sparse3Task>& tasks, const std::vector<Triplet>& triplets,
                                 std::size_t begin, std::size_t end, const std::vector<double>& grid,
                                 std::size_t n) {
  Sparse3Best best;
  std::vector<double> v(n), rx(n);
  std::vector<std::size_t> order(n);
  const double T = static_cast<double>(tasks.size());
  for (std::size_t t = begin; t < end; ++t) {
    const auto [i, j, k] = triplets[t];
    for (std::size_t a = 0; a < grid.size(); ++a) {
      const double c2 = grid[a];
      for (std::size_t b = 0; b < grid.size(); ++b) {
        const double c3 = grid[b];
        double sum = 0.0;
        int defined = 0;
        for (const auto& task : tasks) {
          const double* xi = task.columns[i].data();
          const double* xj = task.columns[j].data();
          const double* xk = task.columns[k].data();
          for (std::size_t s = 0; s < n; ++s) v[s] = xi[s] + c2 * xj[s] + c3 * xk[s];
          doubled_ranks(v.data(), n, order.data(), rx.data());
          if (auto rho = rank_pearson(rx.data(), task.y_ranks.data(), n)) {
            sum += *rho;
            ++defined;
          }
        }
        if (defined == 0) continue;
        const double mean = sum / T;
        const double am = std::abs(mean);
        if (am > best.abs_mean) {
          best = {am, mean, t, a, b, true};
        }
      }
    }
  }
  return best;
}

}  // namespace detail

/// Exhaustive sweep over proxy triplets and grid coefficient pairs, maximizing
/// |mean held-in Spearman| of Phi_i + c2 Phi_j + c3 Phi_k. Ties go to the
/// earliest (triplet, c2, c3) in sweep order, independent of thread count.
inline Ranker select_sparse3(const FeatureTable& features, const ScoreTable& scores,
                             std::span<const std::string> heldin_tasks,
                             std::span<const std::string> subjects, const Sparse3Options& opt = {}) {
  detail::check_selection_inputs(heldin_tasks, subjects);
  if (opt.grid.values.empty()) throw ValidationError("sparse3: coefficient grid is empty");
  if (opt.library_size < 3 || opt.library_size > kNumProxies)
    throw ValidationError("sparse3: library size must be in [3, 80]");
  const std::size_t n = subjects.size();
  std::vector<detail::Sparse3Task> tasks;
  for (const auto& task : heldin_tasks) {
    const auto rows = task_rows(features, task, subjects);
    detail::Sparse3Task st;
    st.columns.assign(opt.library_size, std::vector<double>(n));
    for (int j = 0; j < opt.library_size; ++j)
      for (std::size_t s = 0; s < n; ++s) st.columns[j][s] = rows[s][j];
    const auto y = detail::task_scores(scores, task, subjects);
    st.y_ranks.resize(n);
    std::vector<std::size_t> order(n);
    detail::doubled_ranks(y.data(), n, order.data(), st.y_ranks.data());
    tasks.push_back(std::move(st));
  }

  const auto triplets = enumerate_triplets(opt.library_size);
  const std::size_t chunk = 64;
  const std::size_t n_chunks = (triplets.size() + chunk - 1) / chunk;
  std::vector<detail::Sparse3Best> results(n_chunks);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t c = next++; c < n_chunks; c = next++) {
      const std::size_t b = c * chunk;
      results[c] = detail::sweep_sparse3(tasks, triplets, b, std::min(b + chunk, triplets.size()),
                                         opt.grid.values, n);
    }
  };
  const unsigned threads = std::max(1u, opt.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  detail::Sparse3Best best;
  for (const auto& r : results)
    if (r.found && r.abs_mean > best.abs_mean) best = r;
  if (!best.found) throw DegenerateFitError("sparse3 selection: every correlation is undefined");

  const auto& tr = triplets[best.triplet];
  const double orient = best.mean >= 0.0 ? 1.0 : -1.0;
  Ranker r;
  r.variant = RankerVariant::sparse3;
  r.ids = {ProxyId::from_index(tr.i), ProxyId::from_index(tr.j), ProxyId::from_index(tr.k)};
  r.coefficients = {orient * 1.0, orient * opt.grid.values[best.c2] + 0.0, orient * opt.grid.values[best.c3] + 0.0};
  r.selection_objective = best.abs_mean;
  r.fitted = true;
  detail::record_task_state(r, features, heldin_tasks, subjects);
  return r;
}

namespace detail {

/// Standardized points for every (subject, task) in the selection set and the
/// preference pairs mapped onto them.
inline PairwiseProblem build_problem(std::span<const PreferencePair> pairs, const FeatureTable& features,
                                     std::span<const std::string> subjects, Ranker& r) {
  std::vector<std::string> tasks;
  for (const auto& p : pairs)
    if (std::find(tasks.begin(), tasks.end(), p.task) == tasks.end()) tasks.push_back(p.task);
  PairwiseProblem prob;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& t : tasks) {
    const auto rows = task_rows(features, t, subjects);
    const auto state = Standardizer::fit(rows);
    r.task_state[t] = state;
    for (std::size_t s = 0; s < subjects.size(); ++s) {
      const auto z = state.apply(rows[s]);
      index[{subjects[s], t}] = prob.points.size();
      prob.points.emplace_back(z.begin(), z.end());
    }
  }
  for (const auto& p : pairs) {
    auto w = index.find({p.winner, p.task});
    auto l = index.find({p.loser, p.task});
    if (w == index.end() || l == index.end())
      throw ValidationError("preference pair (" + p.winner + " > " + p.loser + " on " + p.task +
                            ") refers to a subject outside the selection set");
    prob.pairs.emplace_back(w->second, l->second);
  }
  return prob;
}

}  // namespace detail

/// `subjects` is the selection set each task is standardized over.
inline Ranker fit_ranksvm_linear(std::span<const PreferencePair> pairs, const FeatureTable& features,
                                 std::span<const std::string> subjects, const SvmOptions& opt = {}) {
  if (pairs.empty()) throw DegenerateFitError("ranksvm: no preference pairs");
  Ranker r;
  r.variant = RankerVariant::ranksvm_linear;
  const auto prob = detail::build_problem(pairs, features, subjects, r);
  r.linear = train_linear_ranksvm(prob, opt);
  r.degenerate = r.linear.degenerate;
  r.fitted = true;
  return r;
}

inline Ranker fit_ranksvm_rbf(std::span<const PreferencePair> pairs, const FeatureTable& features,
                              std::span<const std::string> subjects, const SvmOptions& opt = {}) {
  if (pairs.empty()) throw DegenerateFitError("ranksvm: no preference pairs");
  Ranker r;
  r.variant = RankerVariant::ranksvm_rbf;
  const auto prob = detail::build_problem(pairs, features, subjects, r);
  r.rbf = train_rbf_ranksvm(prob, opt);
  r.degenerate = r.rbf.degenerate;
  r.fitted = true;
  return r;
}

/// Configuration for fitting any ranker variant.
struct RankerSpec {
  RankerVariant variant = RankerVariant::ranksvm_linear;
  Sparse3Options sparse3;
  SvmOptions svm;
};

inline Ranker fit_ranker(const RankerSpec& spec, const FeatureTable& features, const ScoreTable& scores,
                         std::span<const std::string> tasks, std::span<const std::string> subjects) {
  switch (spec.variant) {
    case RankerVariant::univariate:
      return select_univariate(features, scores, tasks, subjects);
    case RankerVariant::sparse3:
      return select_sparse3(features, scores, tasks, subjects, spec.sparse3);
    case RankerVariant::ranksvm_linear: {
      const auto pairs = preference_pairs(scores, tasks, subjects);
      return fit_ranksvm_linear(pairs, features, subjects, spec.svm);
    }
    case RankerVariant::ranksvm_rbf: {
      const auto pairs = preference_pairs(scores, tasks, subjects);
      return fit_ranksvm_rbf(pairs, features, subjects, spec.svm);
    }
  }
  throw Error("unknown ranker variant");
}

}  // namespace proxyrank
