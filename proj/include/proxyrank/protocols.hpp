#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The proxyrank Authors

/**
 * @file protocols.hpp
 * @brief Evaluation protocols: leave-k-tasks-out CV, oracle selection, and the
 *        corpus-ranking decision curve against compute
 *
 * Subject subsampling is portable across implementations: the generator is
 * std::mt19937_64 (fully specified by the standard) seeded with
 * splitmix64(seed + (fold + 1) * 0x9E3779B97F4A7C15). Subsets are drawn with a
 * partial Fisher-Yates shuffle using rejection-sampled bounded integers, then
 * returned in the original subject order.
 */

#include <algorithm>
#include <atomic>
#include <exception>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "proxyrank/error.hpp"
#include "proxyrank/ranking.hpp"

namespace proxyrank {

inline constexpr const char* kPrngDescription =
    "mt19937_64 seeded with splitmix64(seed + (fold+1)*0x9E3779B97F4A7C15); partial Fisher-Yates, "
    "rejection-sampled bounded draws";

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) {
  return splitmix64(seed + (static_cast<std::uint64_t>(fold) + 1) * 0x9E3779B97F4A7C15ULL);
}

/// Uniform integer in [0, bound) without modulo bias.
inline std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % bound;
  }
}

struct FoldSpec {
  std::vector<std::string> heldin;
  std::vector<std::string> heldout;
};

/// All C(|tasks|, k) held-out combinations in lexicographic index order.
inline std::vector<FoldSpec> make_folds(const std::vector<std::string>& tasks, int k) {
  const int n = static_cast<int>(tasks.size());
  if (k < 1 || k >= n)
    throw ValidationError("k must satisfy 1 <= k < number of tasks (k=" + std::to_string(k) +
                          ", tasks=" + std::to_string(n) + ")");
  std::vector<FoldSpec> folds;
  std::vector<int> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  for (;;) {
    FoldSpec f;
    std::vector<bool> out(n, false);
    for (int i : idx) out[i] = true;
    for (int i = 0; i < n; ++i) (out[i] ? f.heldout : f.heldin).push_back(tasks[i]);
    folds.push_back(std::move(f));
    int pos = k - 1;
    while (pos >= 0 && idx[pos] == n - k + pos) --pos;
    if (pos < 0) break;
    ++idx[pos];
    for (int i = pos + 1; i < k; ++i) idx[i] = idx[i - 1] + 1;
  }
  return folds;
}

/// round-half-up(fraction * n), at least 2.
inline std::size_t subsample_size(std::size_t n, double fraction) {
  const auto m = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
  return std::clamp<std::size_t>(m, 2, n);
}

inline std::vector<std::string> subsample_subjects(const std::vector<std::string>& subjects, double fraction,
                                                   std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("subsample fraction must be in (0, 1]");
  const std::size_t n = subjects.size();
  if (n < 2) throw ValidationError("subsampling needs at least 2 subjects");
  const std::size_t m = subsample_size(n, fraction);
  if (m == n) return subjects;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(bounded_draw(rng, n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  std::vector<std::string> out;
  out.reserve(m);
  for (auto i : idx) out.push_back(subjects[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

struct CvConfig {
  int k = 2;
  double fraction = 0.6;
  std::vector<std::uint64_t> seeds = default_seeds();
  RankerSpec ranker;
  unsigned threads = 1;

  static std::vector<std::uint64_t> default_seeds(int n = 20) {
    std::vector<std::uint64_t> s(n);
    std::iota(s.begin(), s.end(), std::uint64_t{0});
    return s;
  }
};

struct CvRecord {
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> heldout;
  std::vector<std::optional<double>> rho;  // oriented test rho per held-out task
  std::string ranker;                      // description, or the failure reason
  std::vector<ProxyId> selected;           // univariate / sparse3 only
  bool fit_failed = false;
  bool degenerate = false;
};

struct Aggregate {
  std::string task;  // "overall" for the all-task aggregate
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std = std::numeric_limits<double>::quiet_NaN();
  int n_seeds = 0;      // seeds with at least one defined rho
  int n_values = 0;     // defined rho values
  int n_undefined = 0;  // undefined rho values
};

struct CvReport {
  std::vector<std::string> tasks;
  std::vector<std::string> subjects;
  std::vector<FoldSpec> folds;
  std::vector<std::uint64_t> seeds;
  RankerVariant variant = RankerVariant::ranksvm_linear;
  std::vector<CvRecord> records;
  std::vector<Aggregate> per_task;
  Aggregate overall;
  std::array<int, kNumProxies> selection_counts{};
  std::string prng = kPrngDescription;

  bool has_selection() const {
    return variant == RankerVariant::univariate || variant == RankerVariant::sparse3;
  }

  int selection_total() const { return std::accumulate(selection_counts.begin(), selection_counts.end(), 0); }

  /// Normalized selection frequency per proxy (sums to 1 when any selection happened).
  std::array<double, kNumProxies> selection_frequency() const {
    std::array<double, kNumProxies> f{};
    const int total = selection_total();
    if (total == 0) return f;
    for (int j = 0; j < kNumProxies; ++j) f[j] = static_cast<double>(selection_counts[j]) / total;
    return f;
  }
};

namespace detail {

inline Aggregate summarize(const std::string& label, const std::map<std::uint64_t, std::vector<double>>& per_seed,
                           int n_undefined) {
  Aggregate a;
  a.task = label;
  a.n_undefined = n_undefined;
  std::vector<double> means;
  for (const auto& [seed, values] : per_seed) {
    a.n_values += static_cast<int>(values.size());
    if (values.empty()) continue;
    double s = 0.0;
    for (double v : values) s += v;
    means.push_back(s / static_cast<double>(values.size()));
  }
  a.n_seeds = static_cast<int>(means.size());
  if (means.empty()) return a;
  double m = 0.0;
  for (double v : means) m += v;
  m /= static_cast<double>(means.size());
  double ss = 0.0;
  for (double v : means) ss += (v - m) * (v - m);
  a.mean = m;
  a.std = std::sqrt(ss / static_cast<double>(means.size()));
  return a;
}

template <typename Job>
void run_jobs(std::size_t n_jobs, unsigned threads, Job&& job) {
  if (threads <= 1 || n_jobs <= 1) {
    for (std::size_t i = 0; i < n_jobs; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n_jobs);
  auto worker = [&]() {
    for (std::size_t i = next++; i < n_jobs; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < std::min<std::size_t>(threads, n_jobs); ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline bool no_ranking_signal(const ScoreTable& scores, std::span<const std::string> tasks,
                              std::span<const std::string> subjects) {
  for (const auto& t : tasks) {
    const double first = scores.at(subjects.front(), t);
    for (const auto& s : subjects)
      if (scores.at(s, t) != first) return false;
  }
  return true;
}

/// fit_ranker, plus an up-front check for fully tied training scores.
inline Ranker fit_checked(const RankerSpec& spec, const FeatureTable& features, const ScoreTable& scores,
                          std::span<const std::string> tasks, std::span<const std::string> subjects) {
  if (no_ranking_signal(scores, tasks, subjects))
    throw DegenerateFitError("scores are tied for every subject on every training task");
  return fit_ranker(spec, features, scores, tasks, subjects);
}

inline void check_coverage(const FeatureTable& features, const ScoreTable& scores) {
  for (const auto& s : scores.subjects())
    for (const auto& t : scores.tasks()) {
      scores.at(s, t);
      features.at(s, t);
    }
}

}  // namespace detail

inline CvReport run_cv(const FeatureTable& features, const ScoreTable& scores, const CvConfig& cfg) {
  detail::check_coverage(features, scores);
  if (cfg.seeds.empty()) throw ValidationError("cv: at least one seed is required");
  CvReport report;
  report.tasks = scores.tasks();
  report.subjects = scores.subjects();
  report.folds = make_folds(report.tasks, cfg.k);
  report.seeds = cfg.seeds;
  report.variant = cfg.ranker.variant;
  if (report.subjects.size() < 2) throw ValidationError("cv: at least 2 subjects are required");

  RankerSpec spec = cfg.ranker;
  const unsigned outer_threads = cfg.threads;
  if (outer_threads > 1) spec.sparse3.threads = 1;

  const std::size_t n_jobs = report.folds.size() * cfg.seeds.size();
  report.records.resize(n_jobs);
  detail::run_jobs(n_jobs, outer_threads, [&](std::size_t job) {
    const std::size_t fold = job / cfg.seeds.size();
    const std::uint64_t seed = cfg.seeds[job % cfg.seeds.size()];
    const auto& fs = report.folds[fold];
    CvRecord rec;
    rec.fold = fold;
    rec.seed = seed;
    rec.heldout = fs.heldout;
    const auto subset = subsample_subjects(report.subjects, cfg.fraction, fold_seed(seed, fold));
    const std::string ctx = "fold " + std::to_string(fold) + ", seed " + std::to_string(seed) + ": ";
    try {
      const Ranker r = detail::fit_checked(spec, features, scores, fs.heldin, subset);
      rec.ranker = r.describe();
      rec.degenerate = r.degenerate;
      if (r.variant == RankerVariant::univariate || r.variant == RankerVariant::sparse3)
        for (std::size_t k = 0; k < r.ids.size(); ++k)
          if (r.coefficients[k] != 0.0) rec.selected.push_back(r.ids[k]);
      for (const auto& t : fs.heldout) {
        const auto pred = score_task(r, features, t, report.subjects);
        const auto truth = detail::task_scores(scores, t, report.subjects);
        rec.rho.push_back(r.degenerate ? std::nullopt : spearman(pred, truth));
      }
    } catch (const DegenerateFitError& e) {
      rec.fit_failed = true;
      rec.ranker = std::string("fit_failed: ") + e.what();
      rec.rho.assign(fs.heldout.size(), std::nullopt);
    } catch (const ValidationError& e) {
      throw ValidationError(ctx + e.what());
    } catch (const Error& e) {
      throw Error(ctx + e.what());
    }
    report.records[job] = std::move(rec);
  });

  std::map<std::string, std::map<std::uint64_t, std::vector<double>>> per_task;
  std::map<std::string, int> undefined_task;
  std::map<std::uint64_t, std::vector<double>> overall;
  int undefined_overall = 0;
  for (const auto& t : report.tasks) {
    undefined_task[t] = 0;
    for (auto s : report.seeds) per_task[t][s];
  }
  for (auto s : report.seeds) overall[s];
  for (const auto& rec : report.records) {
    for (std::size_t i = 0; i < rec.heldout.size(); ++i) {
      if (rec.rho[i]) {
        per_task[rec.heldout[i]][rec.seed].push_back(*rec.rho[i]);
        overall[rec.seed].push_back(*rec.rho[i]);
      } else {
        ++undefined_task[rec.heldout[i]];
        ++undefined_overall;
      }
    }
    for (auto id : rec.selected) ++report.selection_counts[id.index()];
  }
  for (const auto& t : report.tasks)
    report.per_task.push_back(detail::summarize(t, per_task[t], undefined_task[t]));
  report.overall = detail::summarize("overall", overall, undefined_overall);
  return report;
}

struct OracleResult {
  Ranker ranker;
  std::vector<std::string> tasks;
  std::vector<std::optional<double>> rho;  // in-sample, per task
  double mean = std::numeric_limits<double>::quiet_NaN();
};

/// Fit on every task and subject and report in-sample correlations.
inline OracleResult oracle_select(const FeatureTable& features, const ScoreTable& scores, const RankerSpec& spec) {
  detail::check_coverage(features, scores);
  const auto& tasks = scores.tasks();
  const auto& subjects = scores.subjects();
  if (subjects.size() < 2) throw ValidationError("oracle: at least 2 subjects are required");
  bool any_variance = false;
  for (const auto& t : tasks) {
    const auto st = Standardizer::fit(task_rows(features, t, subjects));
    for (double s : st.scale) any_variance = any_variance || s > 0.0;
  }
  if (!any_variance) throw ValidationError("oracle: no feature varies across subjects on any task");
  OracleResult out;
  out.ranker = detail::fit_checked(spec, features, scores, tasks, subjects);
  out.tasks = tasks;
  double s = 0.0;
  int n = 0;
  for (const auto& t : tasks) {
    const auto pred = score_task(out.ranker, features, t, subjects);
    const auto truth = detail::task_scores(scores, t, subjects);
    auto rho = out.ranker.degenerate ? std::nullopt : spearman(pred, truth);
    if (rho) {
      s += *rho;
      ++n;
    }
    out.rho.push_back(rho);
  }
  if (n > 0) out.mean = s / n;
  return out;
}

// ---------------------------------------------------------------------------
// Decision accuracy against compute
// ---------------------------------------------------------------------------

/// Training compute of one run, FLOPs = 6 N D.
struct ComputePoint {
  double n_params = 0.0;
  double d_tokens = 0.0;

  double flops() const { return 6.0 * n_params * d_tokens; }
};

inline double compute_fraction(double n_proxy, double d_proxy, double n_target, double d_target) {
  if (!(n_proxy > 0.0) || !(d_proxy > 0.0) || !(n_target > 0.0) || !(d_target > 0.0))
    throw ValidationError("compute_fraction: parameters and tokens must be positive");
  return (n_proxy * d_proxy) / (n_target * d_target);
}

struct CurvePoint {
  std::string scale;
  double compute_fraction = 0.0;
  double decision_accuracy = 0.0;
  std::size_t pairs = 0;
};

/// Per scale, decision accuracy of the proxy ranking of corpora against the
/// target ranking; points ordered by compute fraction (then scale name).
inline std::vector<CurvePoint> corpus_decision_curve(
    const std::map<std::pair<std::string, std::string>, double>& proxy_values,
    const std::map<std::string, double>& target_scores, const std::map<std::string, ComputePoint>& compute,
    const ComputePoint& target_compute) {
  if (target_scores.size() < 2) throw ValidationError("decision curve: at least 2 corpora are required");
  if (compute.empty()) throw ValidationError("decision curve: no scales given");
  std::vector<CurvePoint> curve;
  for (const auto& [scale, cp] : compute) {
    std::vector<double> pred, truth;
    for (const auto& [corpus, y] : target_scores) {
      auto it = proxy_values.find({corpus, scale});
      if (it == proxy_values.end())
        throw ValidationError("missing proxy value for corpus " + corpus + " at scale " + scale);
      pred.push_back(it->second);
      truth.push_back(y);
    }
    const auto res = decision_accuracy_detail(pred, truth);
    curve.push_back({scale,
                     compute_fraction(cp.n_params, cp.d_tokens, target_compute.n_params, target_compute.d_tokens),
                     res.accuracy, res.comparable_pairs});
  }
  std::sort(curve.begin(), curve.end(), [](const CurvePoint& a, const CurvePoint& b) {
    if (a.compute_fraction != b.compute_fraction) return a.compute_fraction < b.compute_fraction;
    return a.scale < b.scale;
  });
  return curve;
}

}  // namespace proxyrank
