#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The proxyrank Authors

/**
 * @file commands.hpp
 * @brief Configuration and the command bodies behind the proxyrank tool
 *
 * Every command reads its inputs, computes, and returns the report text, so
 * the same code drives the executable and the tests. Writing happens only in
 * the caller.
 *
 * Config file (JSON, every key optional, unknown keys rejected):
 *
 *   {
 *     "truncate_tokens": 1000,
 *     "signs": {"ce_loss": -1, ...},
 *     "ranker": "ranksvm_linear",          // univariate | sparse3 | ranksvm_linear | ranksvm_rbf
 *     "sparse3": {"max_exponent": 3, "include_zero": true, "grid": [..]},
 *     "ranksvm": {"C": 1, "kernel_width": null, "max_iterations": 2000, "tolerance": 1e-6},
 *     "cv": {"k": 2, "fraction": 0.6, "seeds": [0, ..., 19]},
 *     "fit": {"inner_split_fraction": 0.5, "sigmoid_bounded": true},
 *     "threads": 1,
 *     "paths": {"manifests": [..], "features": .., "scores": .., "series": ..,
 *               "proxy_values": .., "target_scores": .., "compute": ..}
 *   }
 */

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <ranges>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "proxyrank/curvefit.hpp"
#include "proxyrank/error.hpp"
#include "proxyrank/format.hpp"
#include "proxyrank/ingest.hpp"
#include "proxyrank/protocols.hpp"
#include "proxyrank/proxylib.hpp"
#include "proxyrank/ranking.hpp"
#include "proxyrank/tokenstats.hpp"

namespace proxyrank {

struct Config {
  std::size_t truncate_tokens = kDefaultTruncation;
  SignTable signs;
  RankerSpec ranker;
  int cv_k = 2;
  double cv_fraction = 0.6;
  std::vector<std::uint64_t> cv_seeds = CvConfig::default_seeds();
  double inner_split_fraction = 0.5;
  bool sigmoid_bounded = true;
  unsigned threads = 1;

  std::vector<std::filesystem::path> manifests;
  std::optional<std::filesystem::path> features;
  std::optional<std::filesystem::path> scores;
  std::optional<std::filesystem::path> series;
  std::optional<std::filesystem::path> proxy_values;
  std::optional<std::filesystem::path> target_scores;
  std::optional<std::filesystem::path> compute;

  CvConfig cv() const {
    CvConfig c;
    c.k = cv_k;
    c.fraction = cv_fraction;
    c.seeds = cv_seeds;
    c.ranker = ranker;
    c.threads = threads;
    c.ranker.sparse3.threads = threads;
    return c;
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> known,
                           const std::string& where) {
  if (!obj.is_object()) throw ValidationError("config: " + where + " must be an object");
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) throw ValidationError("config: unknown key \"" + (where.empty() ? k : where + "." + k) + "\"");
  }
}

inline double config_number(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) throw ValidationError("config: " + key + " must be a number");
  return v.get<double>();
}

inline std::int64_t config_integer(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ValidationError("config: " + key + " must be an integer");
  return v.get<std::int64_t>();
}

inline std::filesystem::path config_path(const nlohmann::json& v, const std::string& key,
                                         const std::filesystem::path& base) {
  if (!v.is_string()) throw ValidationError("config: " + key + " must be a path string");
  std::filesystem::path p(v.get<std::string>());
  return p.is_relative() ? base / p : p;
}

}  // namespace detail

/// Relative paths resolve against `base_dir` (the config file's directory).
inline Config parse_config(const std::string& text, const std::filesystem::path& base_dir = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("config: malformed JSON: ") + e.what());
  }
  detail::reject_unknown(j, {"truncate_tokens", "signs", "ranker", "sparse3", "ranksvm", "cv", "fit", "threads", "paths"},
                         "");
  Config c;
  if (j.contains("truncate_tokens")) {
    const auto t = detail::config_integer(j["truncate_tokens"], "truncate_tokens");
    if (t < 1) throw ValidationError("config: truncate_tokens must be >= 1");
    c.truncate_tokens = static_cast<std::size_t>(t);
  }
  if (j.contains("signs")) {
    const auto& s = j["signs"];
    if (!s.is_object()) throw ValidationError("config: signs must be an object");
    for (const auto& [name, v] : s.items()) {
      int idx = -1;
      for (int i = 0; i < kNumCoreMetrics; ++i)
        if (name == kCoreMetricNames[i]) idx = i;
      if (idx < 0) throw ValidationError("config: unknown key \"signs." + name + "\"");
      const auto sign = detail::config_integer(v, "signs." + name);
      if (sign != 1 && sign != -1) throw ValidationError("config: signs." + name + " must be +1 or -1");
      c.signs.set(static_cast<CoreMetric>(idx), static_cast<int>(sign));
    }
  }
  if (j.contains("ranker")) {
    const auto& v = j["ranker"];
    auto r = v.is_string() ? parse_ranker_variant(v.get<std::string>()) : std::nullopt;
    if (!r) throw ValidationError("config: ranker must be univariate, sparse3, ranksvm_linear or ranksvm_rbf");
    c.ranker.variant = *r;
  }
  if (j.contains("sparse3")) {
    const auto& s = j["sparse3"];
    detail::reject_unknown(s, {"max_exponent", "include_zero", "grid"}, "sparse3");
    if (s.contains("grid") && (s.contains("max_exponent") || s.contains("include_zero")))
      throw ValidationError("config: sparse3.grid excludes max_exponent / include_zero");
    if (s.contains("grid")) {
      const auto& g = s["grid"];
      if (!g.is_array() || g.empty()) throw ValidationError("config: sparse3.grid must be a non-empty array");
      c.ranker.sparse3.grid.values.clear();
      for (const auto& v : g) {
        const double x = detail::config_number(v, "sparse3.grid[]");
        if (!std::isfinite(x)) throw ValidationError("config: sparse3.grid values must be finite");
        c.ranker.sparse3.grid.values.push_back(x);
      }
    } else {
      int e = 3;
      bool zero = true;
      if (s.contains("max_exponent")) {
        const auto v = detail::config_integer(s["max_exponent"], "sparse3.max_exponent");
        if (v < 0 || v > 30) throw ValidationError("config: sparse3.max_exponent must be in [0, 30]");
        e = static_cast<int>(v);
      }
      if (s.contains("include_zero")) {
        if (!s["include_zero"].is_boolean()) throw ValidationError("config: sparse3.include_zero must be a boolean");
        zero = s["include_zero"].get<bool>();
      }
      c.ranker.sparse3.grid = CoefficientGrid::log_spaced(e, zero);
    }
  }
  if (j.contains("ranksvm")) {
    const auto& s = j["ranksvm"];
    detail::reject_unknown(s, {"C", "kernel_width", "max_iterations", "tolerance"}, "ranksvm");
    auto& o = c.ranker.svm;
    if (s.contains("C")) {
      o.regularization = detail::config_number(s["C"], "ranksvm.C");
      if (!(o.regularization >= 0.0)) throw ValidationError("config: ranksvm.C must be >= 0");
    }
    if (s.contains("kernel_width") && !s["kernel_width"].is_null()) {
      o.kernel_width = detail::config_number(s["kernel_width"], "ranksvm.kernel_width");
      if (!(*o.kernel_width > 0.0)) throw ValidationError("config: ranksvm.kernel_width must be > 0");
    }
    if (s.contains("max_iterations")) {
      const auto v = detail::config_integer(s["max_iterations"], "ranksvm.max_iterations");
      if (v < 1) throw ValidationError("config: ranksvm.max_iterations must be >= 1");
      o.max_iterations = static_cast<int>(v);
    }
    if (s.contains("tolerance")) {
      o.tolerance = detail::config_number(s["tolerance"], "ranksvm.tolerance");
      if (!(o.tolerance > 0.0)) throw ValidationError("config: ranksvm.tolerance must be > 0");
    }
  }
  if (j.contains("cv")) {
    const auto& s = j["cv"];
    detail::reject_unknown(s, {"k", "fraction", "seeds"}, "cv");
    if (s.contains("k")) c.cv_k = static_cast<int>(detail::config_integer(s["k"], "cv.k"));
    if (s.contains("fraction")) c.cv_fraction = detail::config_number(s["fraction"], "cv.fraction");
    if (s.contains("seeds")) {
      const auto& v = s["seeds"];
      if (!v.is_array() || v.empty()) throw ValidationError("config: cv.seeds must be a non-empty array");
      c.cv_seeds.clear();
      for (const auto& x : v) {
        if (!x.is_number_unsigned()) throw ValidationError("config: cv.seeds entries must be non-negative integers");
        c.cv_seeds.push_back(x.get<std::uint64_t>());
      }
    }
  }
  if (j.contains("fit")) {
    const auto& s = j["fit"];
    detail::reject_unknown(s, {"inner_split_fraction", "sigmoid_bounded"}, "fit");
    if (s.contains("inner_split_fraction"))
      c.inner_split_fraction = detail::config_number(s["inner_split_fraction"], "fit.inner_split_fraction");
    if (s.contains("sigmoid_bounded")) {
      if (!s["sigmoid_bounded"].is_boolean()) throw ValidationError("config: fit.sigmoid_bounded must be a boolean");
      c.sigmoid_bounded = s["sigmoid_bounded"].get<bool>();
    }
  }
  if (j.contains("threads")) {
    const auto t = detail::config_integer(j["threads"], "threads");
    if (t < 1) throw ValidationError("config: threads must be >= 1");
    c.threads = static_cast<unsigned>(t);
  }
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    detail::reject_unknown(
        p, {"manifests", "features", "scores", "series", "proxy_values", "target_scores", "compute"}, "paths");
    if (p.contains("manifests")) {
      if (!p["manifests"].is_array()) throw ValidationError("config: paths.manifests must be an array");
      for (const auto& m : p["manifests"]) c.manifests.push_back(detail::config_path(m, "paths.manifests[]", base_dir));
    }
    auto opt = [&](const char* key, std::optional<std::filesystem::path>& dst) {
      if (p.contains(key)) dst = detail::config_path(p[key], std::string("paths.") + key, base_dir);
    };
    opt("features", c.features);
    opt("scores", c.scores);
    opt("series", c.series);
    opt("proxy_values", c.proxy_values);
    opt("target_scores", c.target_scores);
    opt("compute", c.compute);
  }
  return c;
}

inline Config read_config(const std::filesystem::path& path) {
  return parse_config(detail::read_text(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

struct MetricsOutcome {
  FeatureFile file;
  std::vector<std::string> warnings;  // permissive-mode skipped lines
};

namespace detail {

struct SubjectFeatures {
  std::vector<ProxyVector> vectors;
  std::map<std::string, std::map<std::string, double>> baselines;  // task -> name -> value
  std::vector<std::string> warnings;
};

inline SubjectFeatures subject_features(const RunManifest& m, const Config& cfg, ReadMode mode) {
  SubjectFeatures out;
  for (const auto& [task, files] : m.files) {
    // instance -> expert documents, in first-seen order
    std::vector<std::string> order;
    std::map<std::string, std::vector<TrajectoryDocument>> by_instance;
    for (const auto& f : files) {
      auto errs = for_each_trajectory(f, mode, [&](TrajectoryDocument&& d) {
        if (d.task != task)
          throw ValidationError(f.string() + ": document task \"" + d.task + "\" does not match manifest task \"" +
                                task + "\"");
        auto [it, fresh] = by_instance.try_emplace(d.instance);
        if (fresh) order.push_back(d.instance);
        for (const auto& e : it->second)
          if (e.expert == d.expert)
            throw ValidationError(f.string() + ": duplicate (instance, expert) = (" + d.instance + ", " + d.expert +
                                  ")");
        it->second.push_back(std::move(d));
      });
      for (const auto& e : errs)
        out.warnings.push_back(f.string() + ": skipped line " + std::to_string(e.line) + ": " + e.message);
    }
    if (order.empty()) throw ValidationError("subject " + m.subject + ", task " + task + ": no valid trajectories");

    FrequencyTable freq;
    for (const auto& inst : order)
      for (const auto& d : by_instance[inst])
        freq.add(truncate_window(d.tokens, cfg.truncate_tokens) | std::views::transform(&TokenRecord::token_id));

    std::vector<std::vector<ProxyVector>> instances;
    instances.reserve(order.size());
    bool has_elp = true;
    double rbridge_sum = 0.0;
    std::size_t rbridge_n = 0;
    for (const auto& inst : order) {
      auto& experts = instances.emplace_back();
      for (const auto& d : by_instance[inst]) {
        const auto window = truncate_window(d.tokens, cfg.truncate_tokens);
        experts.push_back(instance_proxy_vector(window, freq, cfg.signs));
        if (has_elp && std::all_of(window.begin(), window.end(),
                                   [](const TokenRecord& r) { return r.expert_model_logprob.has_value(); })) {
          rbridge_sum += baseline_rbridge(window);
          ++rbridge_n;
        } else {
          has_elp = false;
        }
      }
    }
    ProxyVector v = task_proxy_vector(instances);
    v.subject = m.subject;
    v.task = task;
    out.vectors.push_back(std::move(v));
    if (has_elp && rbridge_n > 0) out.baselines[task][kRbridgeId] = rbridge_sum / static_cast<double>(rbridge_n);
  }
  if (m.generic) {
    std::vector<TokenRecord> stream;
    auto errs = for_each_trajectory(*m.generic, mode, [&](TrajectoryDocument&& d) {
      stream.insert(stream.end(), d.tokens.begin(), d.tokens.end());
    });
    for (const auto& e : errs)
      out.warnings.push_back(m.generic->string() + ": skipped line " + std::to_string(e.line) + ": " + e.message);
    out.baselines["*"][kGenericCeId] = baseline_generic_ce(stream);
  }
  return out;
}

}  // namespace detail

/// Task-level proxy vectors (plus available baselines) for every manifest.
inline MetricsOutcome cmd_metrics(const std::vector<RunManifest>& manifests, const Config& cfg,
                                  ReadMode mode = ReadMode::fail_fast) {
  if (manifests.empty()) throw ValidationError("metrics: no manifests given");
  std::set<std::string> subjects;
  for (const auto& m : manifests)
    if (!subjects.insert(m.subject).second) throw ValidationError("metrics: duplicate subject " + m.subject);
  std::vector<detail::SubjectFeatures> parts(manifests.size());
  detail::run_jobs(manifests.size(), cfg.threads,
                   [&](std::size_t i) { parts[i] = detail::subject_features(manifests[i], cfg, mode); });
  MetricsOutcome out;
  for (std::size_t i = 0; i < manifests.size(); ++i) {
    for (auto& v : parts[i].vectors) out.file.features.insert(std::move(v));
    for (const auto& [task, m] : parts[i].baselines) out.file.baselines[{manifests[i].subject, task}] = m;
    out.warnings.insert(out.warnings.end(), parts[i].warnings.begin(), parts[i].warnings.end());
  }
  return out;
}

inline MetricsOutcome cmd_metrics(const std::vector<std::filesystem::path>& manifest_paths, const Config& cfg,
                                  ReadMode mode = ReadMode::fail_fast) {
  std::vector<RunManifest> manifests;
  for (const auto& p : manifest_paths) manifests.push_back(read_manifest(p));
  return cmd_metrics(manifests, cfg, mode);
}

// ---------------------------------------------------------------------------
// cv / oracle
// ---------------------------------------------------------------------------

namespace detail {

/// Spearman of each baseline (negated: lower CE is better) against the scores, per task.
inline std::string format_baselines(const FeatureFile& f, const ScoreTable& scores) {
  std::set<std::string> names;
  for (const auto& [key, m] : f.baselines)
    for (const auto& [name, v] : m) names.insert(name);
  if (names.empty()) return {};
  std::string out = "\nbaseline,task,rho\n";
  for (const auto& name : names) {
    double sum = 0.0;
    int n = 0;
    for (const auto& task : scores.tasks()) {
      std::vector<double> pred, truth;
      bool complete = true;
      for (const auto& subject : scores.subjects()) {
        const auto y = scores.find(subject, task);
        if (!y) continue;
        auto it = f.baselines.find({subject, name == kGenericCeId ? std::string("*") : task});
        if (it == f.baselines.end() || !it->second.count(name)) {
          complete = false;
          break;
        }
        pred.push_back(-it->second.at(name));
        truth.push_back(*y);
      }
      if (!complete) continue;
      const auto rho = spearman(pred, truth);
      out += name + "," + task + "," + rho_cell(rho) + "\n";
      if (rho) {
        sum += *rho;
        ++n;
      }
    }
    out += name + ",overall," + (n ? format_g6(sum / n) : std::string("nan")) + "\n";
  }
  return out;
}

}  // namespace detail

inline std::string cmd_cv(const FeatureFile& features, const ScoreTable& scores, const Config& cfg) {
  const auto report = run_cv(features.features, scores, cfg.cv());
  return format_cv_report(report) + detail::format_baselines(features, scores);
}

inline std::string cmd_oracle(const FeatureFile& features, const ScoreTable& scores, const Config& cfg) {
  RankerSpec spec = cfg.ranker;
  spec.sparse3.threads = cfg.threads;
  return format_oracle_report(oracle_select(features.features, scores, spec));
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

/// Checkpoint series: rows step,split,name,value with split in {train, holdout}
/// and name in {accuracy, ce_loss, <proxy id>}.
struct FitSeries {
  std::map<std::string, Series> train;
  std::map<std::string, Series> holdout;
};

inline FitSeries parse_fit_series(const std::string& text, const std::string& what = "series") {
  const auto rows = parse_csv(text);
  detail::expect_header(rows, {"step", "split", "name", "value"}, what);
  FitSeries out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    detail::expect_width(r, 4, what);
    const double step = detail::csv_number(r, 0, what);
    const double value = detail::csv_number(r, 3, what);
    const auto& split = r.fields[1];
    const auto& name = r.fields[2];
    if (split != "train" && split != "holdout")
      throw ValidationError(what + ": split must be train or holdout (row " + std::to_string(r.line) + ")");
    if (name != "accuracy" && name != "ce_loss" && !ProxyId::parse(name))
      throw ValidationError(what + ": unknown series name \"" + name + "\" (row " + std::to_string(r.line) + ")");
    auto& s = (split == "train" ? out.train : out.holdout)[name];
    if (!s.x.empty() && !(step > s.x.back()))
      throw ValidationError(what + ": steps must be strictly increasing within " + split + "/" + name + " (row " +
                            std::to_string(r.line) + ")");
    s.x.push_back(step);
    s.y.push_back(value);
    s.x_label = "step";
    s.y_label = name;
  }
  for (const auto& [name, s] : out.holdout)
    if (auto it = out.train.find(name); it != out.train.end() && !s.x.empty() && !(s.x.front() > it->second.x.back()))
      throw ValidationError(what + ": holdout steps of " + name + " must follow its training steps");
  return out;
}

inline FitSeries read_fit_series(const std::filesystem::path& path) {
  return parse_fit_series(detail::read_text(path), path.string());
}

struct PredictorRow {
  std::string predictor;
  CurveFamily family = CurveFamily::power_law;
  std::string selected;  // proxy id, or empty
  FitResult fit;
  double train_r2 = 0.0;
  double holdout_rmse = std::numeric_limits<double>::quiet_NaN();
  double holdout_nmae = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

/// Maps proxy values onto x' = 1 + (x - lo) / range so a power law in the
/// proxy is defined for any sign of the raw values.
struct AffineMap {
  double lo = 0.0, range = 1.0;
  double operator()(double x) const { return 1.0 + (x - lo) / range; }
};

inline void score_holdout(PredictorRow& row, const std::vector<double>& pred, const Series& truth,
                          double train_range) {
  if (truth.size() == 0) return;
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = pred[i] - truth.y[i];
    se += e * e;
    ae += std::abs(e);
  }
  const double n = static_cast<double>(truth.size());
  row.holdout_rmse = std::sqrt(se / n);
  row.holdout_nmae = train_range > 0.0 ? ae / n / train_range : std::numeric_limits<double>::quiet_NaN();
}

inline Series pair_on_steps(const Series& xs, const Series& ys, const std::string& what) {
  if (xs.x != ys.x) throw ValidationError("fit: " + what + " and accuracy must share the same steps");
  Series s;
  s.x = xs.y;
  s.y = ys.y;
  return s;
}

inline Series sorted_by_x(Series s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.x[a] < s.x[b]; });
  Series out;
  for (auto i : idx) {
    out.x.push_back(s.x[i]);
    out.y.push_back(s.y[i]);
  }
  return out;
}

}  // namespace detail

/// Forecasts held-out accuracy three ways (selected proxy, CE loss, compute)
/// from the training checkpoints, plus the selected proxy's own trajectory fit.
inline std::vector<PredictorRow> cmd_fit(const FitSeries& series, const Config& cfg) {
  const auto acc_it = series.train.find("accuracy");
  if (acc_it == series.train.end()) throw ValidationError("fit: no training accuracy series");
  const Series& acc = acc_it->second;
  if (acc.size() < 4)
    throw ValidationError("fit: at least 4 training points are required, got " + std::to_string(acc.size()));
  acc.validate(4, "fit: accuracy");
  for (double s : acc.x)
    if (!(s > 0.0)) throw ValidationError("fit: steps must be positive");
  const Series empty;
  const auto hold_it = series.holdout.find("accuracy");
  const Series& acc_hold = hold_it == series.holdout.end() ? empty : hold_it->second;
  const double acc_range = acc.y_range();

  std::vector<PredictorRow> rows;

  // Proxy: inner-split selection over proxy trajectories, then a power law from proxy value to accuracy.
  std::map<ProxyId, Series> proxies;
  for (const auto& [name, s] : series.train)
    if (auto id = ProxyId::parse(name)) proxies.emplace(*id, s);
  if (!proxies.empty()) {
    const auto sel = inner_split_select(proxies, cfg.inner_split_fraction);
    const Series& traj = proxies.at(sel.id);

    PredictorRow pt;
    pt.predictor = "proxy_trajectory";
    pt.selected = sel.id.str();
    pt.fit = sel.fit;
    pt.train_r2 = sel.fit.r2;
    if (auto h = series.holdout.find(sel.id.str()); h != series.holdout.end()) {
      std::vector<double> pred;
      for (double x : h->second.x) pred.push_back(sel.fit.predict(x));
      detail::score_holdout(pt, pred, h->second, traj.y_range());
    }

    const Series raw = detail::pair_on_steps(traj, acc, sel.id.str());
    const auto [lo, hi] = std::minmax_element(raw.x.begin(), raw.x.end());
    detail::AffineMap map{*lo, *hi - *lo};
    if (!(map.range > 0.0)) throw ValidationError("fit: selected proxy is constant on the training steps");
    Series mapped;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      mapped.x.push_back(map(raw.x[i]));
      mapped.y.push_back(raw.y[i]);
    }
    PredictorRow p;
    p.predictor = "proxy";
    p.selected = sel.id.str();
    p.fit = fit_power_law(detail::sorted_by_x(mapped));
    p.train_r2 = p.fit.r2;
    std::vector<double> pred;
    for (double x : acc_hold.x) pred.push_back(p.fit.predict(map(sel.fit.predict(x))));
    detail::score_holdout(p, pred, acc_hold, acc_range);
    rows.push_back(std::move(p));
    rows.push_back(std::move(pt));
  }

  // CE loss: power-law trajectory of the loss, then an exponential from loss to accuracy.
  if (auto ce_it = series.train.find("ce_loss"); ce_it != series.train.end()) {
    const Series& ce = ce_it->second;
    ce.validate(4, "fit: ce_loss");
    const FitResult ce_traj = fit_power_law(ce);
    PredictorRow p;
    p.predictor = "ce_loss";
    p.family = CurveFamily::exponential;
    p.fit = fit_exponential(detail::sorted_by_x(detail::pair_on_steps(ce, acc, "ce_loss")));
    p.train_r2 = p.fit.r2;
    std::vector<double> pred;
    for (double x : acc_hold.x) pred.push_back(p.fit.predict(ce_traj.predict(x)));
    detail::score_holdout(p, pred, acc_hold, acc_range);
    rows.push_back(std::move(p));
  }

  // Compute: sigmoid in log-step (compute is proportional to step at fixed model size).
  {
    Series logc;
    for (std::size_t i = 0; i < acc.size(); ++i) {
      logc.x.push_back(std::log(acc.x[i]));
      logc.y.push_back(acc.y[i]);
    }
    PredictorRow p;
    p.predictor = "compute";
    p.family = CurveFamily::sigmoid;
    p.fit = fit_sigmoid(logc, SigmoidOptions{cfg.sigmoid_bounded});
    p.train_r2 = p.fit.r2;
    std::vector<double> pred;
    for (double x : acc_hold.x) pred.push_back(p.fit.predict(std::log(x)));
    detail::score_holdout(p, pred, acc_hold, acc_range);
    rows.push_back(std::move(p));
  }
  return rows;
}

/// predictor,family,selected_proxy,params,train_r2,holdout_rmse,holdout_nmae
/// with params as name=value pairs separated by ';'.
inline std::string format_fit_report(const std::vector<PredictorRow>& rows) {
  std::string out = "predictor,family,selected_proxy,params,train_r2,holdout_rmse,holdout_nmae\n";
  for (const auto& r : rows) {
    std::string params;
    const auto names = r.fit.param_names();
    for (std::size_t i = 0; i < r.fit.params.size(); ++i)
      params += (i ? ";" : "") + names[i] + "=" + format_g6(r.fit.params[i]);
    out += r.predictor + "," + to_string(r.family) + "," + r.selected + "," + params + "," + format_g6(r.train_r2) +
           "," + format_g6(r.holdout_rmse) + "," + format_g6(r.holdout_nmae) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// datadecide
// ---------------------------------------------------------------------------

/// corpus,scale,value
inline std::map<std::pair<std::string, std::string>, double> parse_proxy_values(const std::string& text,
                                                                                const std::string& what = "proxy values") {
  const auto rows = parse_csv(text);
  detail::expect_header(rows, {"corpus", "scale", "value"}, what);
  std::map<std::pair<std::string, std::string>, double> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    detail::expect_width(r, 3, what);
    if (!out.emplace(std::make_pair(r.fields[0], r.fields[1]), detail::csv_number(r, 2, what)).second)
      throw ValidationError(what + ": duplicate (" + r.fields[0] + ", " + r.fields[1] + ") (row " +
                            std::to_string(r.line) + ")");
  }
  return out;
}

/// corpus,score
inline std::map<std::string, double> parse_target_scores(const std::string& text,
                                                         const std::string& what = "target scores") {
  const auto rows = parse_csv(text);
  detail::expect_header(rows, {"corpus", "score"}, what);
  std::map<std::string, double> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    detail::expect_width(r, 2, what);
    if (!out.emplace(r.fields[0], detail::csv_number(r, 1, what)).second)
      throw ValidationError(what + ": duplicate corpus " + r.fields[0] + " (row " + std::to_string(r.line) + ")");
  }
  return out;
}

struct ComputeTable {
  std::map<std::string, ComputePoint> scales;
  ComputePoint target;
};

/// scale,n_params,d_tokens; the row whose scale is "target" gives the target run.
inline ComputeTable parse_compute(const std::string& text, const std::string& what = "compute") {
  const auto rows = parse_csv(text);
  detail::expect_header(rows, {"scale", "n_params", "d_tokens"}, what);
  ComputeTable out;
  bool has_target = false;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    detail::expect_width(r, 3, what);
    const ComputePoint cp{detail::csv_number(r, 1, what), detail::csv_number(r, 2, what)};
    if (!(cp.n_params > 0.0 && cp.d_tokens > 0.0))
      throw ValidationError(what + ": n_params and d_tokens must be positive (row " + std::to_string(r.line) + ")");
    if (r.fields[0] == "target") {
      if (has_target) throw ValidationError(what + ": duplicate target row");
      out.target = cp;
      has_target = true;
    } else if (!out.scales.emplace(r.fields[0], cp).second) {
      throw ValidationError(what + ": duplicate scale " + r.fields[0]);
    }
  }
  if (!has_target) throw ValidationError(what + ": missing \"target\" row");
  return out;
}

inline std::string cmd_datadecide(const std::map<std::pair<std::string, std::string>, double>& proxy_values,
                                  const std::map<std::string, double>& target, const ComputeTable& compute) {
  return format_decision_curve(corpus_decision_curve(proxy_values, target, compute.scales, compute.target));
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

struct ValidationSummary {
  std::size_t documents = 0;
  std::size_t tokens = 0;
  std::vector<std::string> errors;

  std::string text() const {
    std::string out = "documents=" + std::to_string(documents) + " tokens=" + std::to_string(tokens) +
                      " errors=" + std::to_string(errors.size()) + "\n";
    for (const auto& e : errors) out += e + "\n";
    return out;
  }
};

/// Checks trajectory files (or manifests, which expand to their files). All
/// errors are collected; callers decide the exit status from `errors`.
inline ValidationSummary cmd_validate(const std::vector<std::filesystem::path>& paths) {
  ValidationSummary out;
  auto check = [&](const std::filesystem::path& p) {
    auto errs = for_each_trajectory(p, ReadMode::permissive, [&](TrajectoryDocument&& d) {
      ++out.documents;
      out.tokens += d.tokens.size();
    });
    for (const auto& e : errs) out.errors.push_back(p.string() + ": " + e.message);
  };
  for (const auto& p : paths) {
    if (p.extension() == ".json") {
      try {
        const auto m = read_manifest(p);
        for (const auto& [task, files] : m.files)
          for (const auto& f : files) check(f);
        if (m.generic) check(*m.generic);
      } catch (const ValidationError& e) {
        out.errors.push_back(e.what());
      }
    } else {
      try {
        check(p);
      } catch (const ValidationError& e) {
        out.errors.push_back(e.what());
      }
    }
  }
  return out;
}

}  // namespace proxyrank
