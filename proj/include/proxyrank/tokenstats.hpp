#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The proxyrank Authors

/**
 * @file tokenstats.hpp
 * @brief Per-token statistics of a candidate model's next-token distribution
 *
 * A TokenRecord summarizes the candidate's distribution at one position of an
 * expert trajectory with five numbers: the expert token's log-probability and
 * competition rank, the distribution's max probability and normalized entropy.
 * These are sufficient to reconstruct the ten core metrics and, together with
 * a corpus frequency table and per-window loss statistics, the eight weights.
 *
 * All logarithms are natural.
 */

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "proxyrank/error.hpp"

namespace proxyrank {

inline constexpr double kProbTolerance = 1e-9;

struct TokenRecord {
  std::int64_t token_id = 0;
  double expert_logprob = 0.0;  // log p(y_t), <= 0
  std::int64_t rank = 1;        // competition rank, 1 = argmax
  double max_prob = 1.0;
  double entropy_norm = 0.0;    // H / log|V|
  std::optional<double> expert_model_logprob;

  bool operator==(const TokenRecord&) const = default;
};

/// Returns an empty string when the record is valid, otherwise a message
/// naming the offending field(s).
inline std::string check_record(const TokenRecord& r) {
  if (r.token_id < 0) return "id must be >= 0";
  if (!std::isfinite(r.expert_logprob) || r.expert_logprob > 0.0)
    return "lp must be finite and <= 0";
  if (r.rank < 1) return "rank must be ≥ 1";
  if (!std::isfinite(r.max_prob) || r.max_prob <= 0.0 || r.max_prob > 1.0)
    return "maxp must be in (0, 1]";
  if (!std::isfinite(r.entropy_norm) || r.entropy_norm < 0.0 || r.entropy_norm > 1.0)
    return "ent must be in [0, 1]";
  const double p = std::exp(r.expert_logprob);
  if (p > r.max_prob + kProbTolerance) return "exp(lp) exceeds maxp (lp, maxp inconsistent)";
  if (r.rank == 1 && std::abs(p - r.max_prob) > kProbTolerance)
    return "rank 1 requires exp(lp) == maxp (rank, lp, maxp inconsistent)";
  if (r.expert_model_logprob &&
      (!std::isfinite(*r.expert_model_logprob) || *r.expert_model_logprob > 0.0))
    return "elp must be finite and <= 0";
  return {};
}

inline void validate_record(const TokenRecord& r) {
  if (auto msg = check_record(r); !msg.empty()) throw ValidationError(msg);
}

// Order matches the canonical ProxyId layout.
enum class CoreMetric : int {
  ce_loss,
  top_1_accuracy,
  top_2_accuracy,
  top_3_accuracy,
  top_5_accuracy,
  entropy,
  rank,
  reciprocal_rank,
  margin,
  wrong_confidence,
};
inline constexpr int kNumCoreMetrics = 10;

enum class Weighting : int {
  uniform,
  probability,
  expert_disagreement,
  entropy,
  inverse_entropy,
  frequency,
  inverse_frequency,
  gaussian_nll,
};
inline constexpr int kNumWeightings = 8;

inline constexpr std::array<const char*, kNumCoreMetrics> kCoreMetricNames = {
    "ce_loss", "top_1_accuracy", "top_2_accuracy", "top_3_accuracy", "top_5_accuracy",
    "entropy", "rank",           "reciprocal_rank", "margin",        "wrong_confidence"};

inline constexpr std::array<const char*, kNumWeightings> kWeightingNames = {
    "uniform",         "probability", "expert_disagreement", "entropy",
    "inverse_entropy", "frequency",   "inverse_frequency",   "gaussian_nll"};

struct CoreMetrics {
  double ce_loss = 0.0;
  double top_1_accuracy = 0.0;
  double top_2_accuracy = 0.0;
  double top_3_accuracy = 0.0;
  double top_5_accuracy = 0.0;
  double entropy = 0.0;
  double rank = 1.0;
  double reciprocal_rank = 1.0;
  double margin = 0.0;
  double wrong_confidence = 0.0;

  std::array<double, kNumCoreMetrics> as_array() const {
    return {ce_loss, top_1_accuracy, top_2_accuracy, top_3_accuracy, top_5_accuracy,
            entropy, rank,           reciprocal_rank, margin,        wrong_confidence};
  }
};

struct WeightVector {
  double uniform = 1.0;
  double probability = 0.0;
  double expert_disagreement = 0.0;
  double entropy = 0.0;
  double inverse_entropy = 0.0;
  double frequency = 0.0;
  double inverse_frequency = 0.0;
  double gaussian_nll = 1.0;

  std::array<double, kNumWeightings> as_array() const {
    return {uniform,         probability, expert_disagreement, entropy,
            inverse_entropy, frequency,   inverse_frequency,   gaussian_nll};
  }
};

inline CoreMetrics core_metrics(const TokenRecord& r) {
  validate_record(r);
  const double p = std::exp(r.expert_logprob);
  const auto rank = static_cast<double>(r.rank);
  CoreMetrics m;
  m.ce_loss = -r.expert_logprob + 0.0;
  m.top_1_accuracy = r.rank <= 1 ? 1.0 : 0.0;
  m.top_2_accuracy = r.rank <= 2 ? 1.0 : 0.0;
  m.top_3_accuracy = r.rank <= 3 ? 1.0 : 0.0;
  m.top_5_accuracy = r.rank <= 5 ? 1.0 : 0.0;
  m.entropy = r.entropy_norm;
  m.rank = rank;
  m.reciprocal_rank = 1.0 / rank;
  // exp(lp) may exceed maxp by up to the tolerance.
  m.margin = r.rank == 1 ? 0.0 : std::max(0.0, r.max_prob - p);
  m.wrong_confidence = r.rank > 1 ? r.max_prob : 0.0;
  return m;
}

/// Relative token frequencies over an expert-trajectory corpus.
class FrequencyTable {
 public:
  FrequencyTable() = default;

  template <typename Range>
  void add(const Range& token_ids) {
    for (auto id : token_ids) {
      ++counts_[static_cast<std::int64_t>(id)];
      ++total_;
    }
  }

  /// Relative frequency; 0 for tokens never observed.
  double frequency(std::int64_t token_id) const {
    if (total_ == 0) return 0.0;
    auto it = counts_.find(token_id);
    if (it == counts_.end()) return 0.0;
    return static_cast<double>(it->second) / static_cast<double>(total_);
  }

  std::uint64_t total() const { return total_; }
  std::size_t distinct() const { return counts_.size(); }

 private:
  std::unordered_map<std::int64_t, std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

inline FrequencyTable build_frequency_table(
    std::span<const std::vector<std::int64_t>> trajectories) {
  FrequencyTable table;
  for (const auto& t : trajectories) table.add(t);
  if (table.total() == 0) throw ValidationError("frequency table: corpus has no tokens");
  return table;
}

struct LossStats {
  double mean_ce = 0.0;
  double std_ce = 0.0;
};

/// Population mean and standard deviation of ce_loss over a window.
inline LossStats loss_stats(std::span<const TokenRecord> window) {
  if (window.empty()) throw ValidationError("loss_stats: empty window");
  double sum = 0.0;
  for (const auto& r : window) sum += -r.expert_logprob;
  const double n = static_cast<double>(window.size());
  const double mean = sum / n;
  double ss = 0.0;
  for (const auto& r : window) {
    const double d = -r.expert_logprob - mean;
    ss += d * d;
  }
  return {mean + 0.0, std::sqrt(ss / n)};
}

inline constexpr double kDegenerateSigma = 1e-12;

inline WeightVector weight_vector(const TokenRecord& r, const FrequencyTable& freq,
                                  const LossStats& stats) {
  validate_record(r);
  WeightVector w;
  w.uniform = 1.0;
  w.probability = std::exp(r.expert_logprob);
  w.expert_disagreement = 1.0 - w.probability;
  w.entropy = r.entropy_norm;
  w.inverse_entropy = 1.0 - r.entropy_norm;
  w.frequency = freq.frequency(r.token_id);
  w.inverse_frequency = 1.0 - w.frequency;
  if (stats.std_ce < kDegenerateSigma) {
    w.gaussian_nll = 1.0;
  } else {
    const double z = (-r.expert_logprob - stats.mean_ce) / stats.std_ce;
    w.gaussian_nll = std::exp(-0.5 * z * z);
  }
  return w;
}

}  // namespace proxyrank
