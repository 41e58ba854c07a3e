#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The proxyrank Authors

/**
 * @file proxylib.hpp
 * @brief The 80-entry proxy library: (weighting x core metric) aggregates
 *
 * Instance level: entry j = s_j * sum_t m_{j,t} w_{j,t} / sum_t w_{j,t} over the
 * truncated window of one trajectory. Task level: experts are averaged within
 * each instance first, then instances are averaged with equal weight.
 * Entries whose weight mass is zero are marked undefined and skipped by the
 * averages; the number of skipped instances is kept per entry.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "proxyrank/error.hpp"
#include "proxyrank/tokenstats.hpp"

namespace proxyrank {

inline constexpr int kNumProxies = kNumCoreMetrics * kNumWeightings;
inline constexpr std::size_t kDefaultTruncation = 1000;

/// One (weighting, core metric) pair. Canonical index is
/// weighting * 10 + core, which is also the tie-break order everywhere.
class ProxyId {
 public:
  constexpr ProxyId() = default;
  constexpr ProxyId(Weighting w, CoreMetric c) : index_(static_cast<int>(w) * kNumCoreMetrics + static_cast<int>(c)) {}

  static constexpr ProxyId from_index(int index) {
    ProxyId id;
    id.index_ = index;
    return id;
  }

  static std::optional<ProxyId> parse(std::string_view s) {
    const auto slash = s.find('/');
    if (slash == std::string_view::npos) return std::nullopt;
    const auto ws = s.substr(0, slash);
    const auto cs = s.substr(slash + 1);
    int wi = -1, ci = -1;
    for (int i = 0; i < kNumWeightings; ++i)
      if (ws == kWeightingNames[i]) wi = i;
    for (int i = 0; i < kNumCoreMetrics; ++i)
      if (cs == kCoreMetricNames[i]) ci = i;
    if (wi < 0 || ci < 0) return std::nullopt;
    return ProxyId(static_cast<Weighting>(wi), static_cast<CoreMetric>(ci));
  }

  constexpr int index() const { return index_; }
  constexpr Weighting weighting() const { return static_cast<Weighting>(index_ / kNumCoreMetrics); }
  constexpr CoreMetric core() const { return static_cast<CoreMetric>(index_ % kNumCoreMetrics); }

  std::string str() const {
    return std::string(kWeightingNames[static_cast<int>(weighting())]) + "/" +
           kCoreMetricNames[static_cast<int>(core())];
  }

  constexpr auto operator<=>(const ProxyId&) const = default;

 private:
  int index_ = 0;
};

inline std::vector<ProxyId> all_proxy_ids() {
  std::vector<ProxyId> ids;
  ids.reserve(kNumProxies);
  for (int i = 0; i < kNumProxies; ++i) ids.push_back(ProxyId::from_index(i));
  return ids;
}

/// Orientation per core metric so that higher means better.
class SignTable {
 public:
  SignTable() {
    signs_.fill(+1);
    for (auto c : {CoreMetric::ce_loss, CoreMetric::entropy, CoreMetric::rank, CoreMetric::margin,
                   CoreMetric::wrong_confidence})
      signs_[static_cast<int>(c)] = -1;
  }

  int sign(CoreMetric c) const { return signs_[static_cast<int>(c)]; }

  void set(CoreMetric c, int s) {
    if (s != 1 && s != -1) throw ValidationError("sign must be +1 or -1");
    signs_[static_cast<int>(c)] = s;
  }

 private:
  std::array<int, kNumCoreMetrics> signs_{};
};

struct ProxyVector {
  std::string subject;
  std::string task;
  std::array<double, kNumProxies> values{};
  std::array<bool, kNumProxies> defined{};
  // Instances that contributed to / were skipped for each entry.
  std::array<int, kNumProxies> n_contributing{};
  std::array<int, kNumProxies> n_undefined{};
  int n_instances = 0;
  int n_experts = 0;

  double operator[](ProxyId id) const { return values[id.index()]; }
  bool is_defined(ProxyId id) const { return defined[id.index()]; }

  int undefined_count() const {
    return static_cast<int>(std::count(defined.begin(), defined.end(), false));
  }
};

/// Last min(len, max_tokens) records, in order.
inline std::span<const TokenRecord> truncate_window(std::span<const TokenRecord> trajectory,
                                                    std::size_t max_tokens = kDefaultTruncation) {
  if (trajectory.empty()) throw ValidationError("truncate_window: empty trajectory");
  if (max_tokens < 1) throw ValidationError("truncate_window: max_tokens must be >= 1");
  const std::size_t n = std::min(trajectory.size(), max_tokens);
  return trajectory.subspan(trajectory.size() - n, n);
}

/// Weighted per-window aggregation from precomputed per-position metrics
/// and weights. Entries with zero weight mass come back undefined.
inline ProxyVector aggregate_window(std::span<const CoreMetrics> metrics,
                                    std::span<const WeightVector> weights,
                                    const SignTable& signs = SignTable{}) {
  if (metrics.empty() || metrics.size() != weights.size())
    throw ValidationError("aggregate_window: metrics and weights must be non-empty and equal length");
  std::array<double, kNumProxies> num{};
  std::array<double, kNumWeightings> den{};
  for (std::size_t t = 0; t < metrics.size(); ++t) {
    const auto m = metrics[t].as_array();
    const auto w = weights[t].as_array();
    for (int wi = 0; wi < kNumWeightings; ++wi) {
      den[wi] += w[wi];
      for (int ci = 0; ci < kNumCoreMetrics; ++ci) num[wi * kNumCoreMetrics + ci] += m[ci] * w[wi];
    }
  }

  ProxyVector out;
  out.n_instances = 1;
  out.n_experts = 1;
  for (int wi = 0; wi < kNumWeightings; ++wi) {
    for (int ci = 0; ci < kNumCoreMetrics; ++ci) {
      const int j = wi * kNumCoreMetrics + ci;
      if (den[wi] > 0.0) {
        out.values[j] = signs.sign(static_cast<CoreMetric>(ci)) * (num[j] / den[wi]) + 0.0;
        out.defined[j] = true;
        out.n_contributing[j] = 1;
      } else {
        out.values[j] = 0.0;
        out.defined[j] = false;
        out.n_undefined[j] = 1;
      }
    }
  }
  return out;
}

/// Instance vector over an already-truncated window. Loss statistics for the
/// Gaussian-NLL weight are taken over the same window.
inline ProxyVector instance_proxy_vector(std::span<const TokenRecord> window,
                                         const FrequencyTable& freq,
                                         const SignTable& signs = SignTable{}) {
  if (window.empty()) throw ValidationError("instance_proxy_vector: empty window");
  const LossStats stats = loss_stats(window);
  std::vector<CoreMetrics> metrics;
  std::vector<WeightVector> weights;
  metrics.reserve(window.size());
  weights.reserve(window.size());
  for (const auto& r : window) {
    metrics.push_back(core_metrics(r));
    weights.push_back(weight_vector(r, freq, stats));
  }
  return aggregate_window(metrics, weights, signs);
}

/// Reduces per-instance groups of per-expert vectors to one task vector.
/// `instances[i]` holds the vectors of every expert available for instance i.
inline ProxyVector task_proxy_vector(const std::vector<std::vector<ProxyVector>>& instances) {
  if (instances.empty()) throw ValidationError("task_proxy_vector: no instances");
  ProxyVector out;
  std::array<double, kNumProxies> sum{};
  int max_experts = 0;
  for (const auto& experts : instances) {
    if (experts.empty()) throw ValidationError("task_proxy_vector: instance with no experts");
    max_experts = std::max(max_experts, static_cast<int>(experts.size()));
    for (int j = 0; j < kNumProxies; ++j) {
      double s = 0.0;
      int n = 0;
      for (const auto& v : experts) {
        if (v.defined[j]) {
          s += v.values[j];
          ++n;
        }
      }
      if (n > 0) {
        sum[j] += s / n;
        ++out.n_contributing[j];
      } else {
        ++out.n_undefined[j];
      }
    }
  }
  for (int j = 0; j < kNumProxies; ++j) {
    out.defined[j] = out.n_contributing[j] > 0;
    out.values[j] = out.defined[j] ? sum[j] / out.n_contributing[j] : 0.0;
  }
  out.n_instances = static_cast<int>(instances.size());
  out.n_experts = max_experts;
  out.subject = instances.front().front().subject;
  out.task = instances.front().front().task;
  return out;
}

/// Mean CE over a generic-text token stream, no weighting or truncation.
inline double baseline_generic_ce(std::span<const TokenRecord> records) {
  if (records.empty()) throw ValidationError("baseline_generic_ce: empty token stream");
  double s = 0.0;
  for (const auto& r : records) s += -r.expert_logprob;
  return s / static_cast<double>(records.size()) + 0.0;
}

/// CE weighted by the expert model's own probability of each token.
inline double baseline_rbridge(std::span<const TokenRecord> window) {
  if (window.empty()) throw ValidationError("baseline_rbridge: empty window");
  double num = 0.0, den = 0.0;
  for (const auto& r : window) {
    if (!r.expert_model_logprob)
      throw ValidationError("rbridge baseline requires expert logprobs (elp) on every token");
    const double w = std::exp(*r.expert_model_logprob);
    num += w * -r.expert_logprob;
    den += w;
  }
  if (!(den > 0.0)) throw ValidationError("rbridge baseline: expert probabilities sum to zero");
  return num / den + 0.0;
}

}  // namespace proxyrank
