#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The proxyrank Authors

// Synthetic data for tests: random predictive distributions and a planted
// population whose token streams agree more with the expert as skill grows.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "proxyrank/ingest.hpp"
#include "proxyrank/tokenstats.hpp"

namespace synth {

using proxyrank::TokenRecord;
using proxyrank::TrajectoryDocument;

// Box-Muller on the raw engine so draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) { return lo + static_cast<int>(uniform() * (hi - lo + 1)); }
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * uniform());
  }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

struct Distribution {
  std::vector<double> p;
  std::int64_t expert = 0;
};

inline std::vector<double> softmax(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - m));
  for (auto& v : p) v /= s;
  return p;
}

/// Random distribution over 2..max_vocab tokens. Logits are sometimes
/// quantized so exact probability ties occur.
inline Distribution random_distribution(Rng& rng, int max_vocab = 50) {
  const int V = rng.integer(2, max_vocab);
  const double scale = rng.uniform(0.1, 6.0);
  const bool quantize = rng.uniform() < 0.3;
  std::vector<double> z(V);
  for (auto& v : z) {
    v = scale * rng.normal();
    if (quantize) v = std::round(v);
  }
  Distribution d;
  d.p = softmax(z);
  d.expert = rng.integer(0, V - 1);
  return d;
}

/// Summary record of a full distribution; rank by counting strictly larger entries.
inline TokenRecord record_from(const Distribution& d) {
  TokenRecord r;
  r.token_id = d.expert;
  const double py = d.p[d.expert];
  r.expert_logprob = std::log(py);
  std::int64_t larger = 0;
  double maxp = 0.0, h = 0.0;
  for (double v : d.p) {
    if (v > py) ++larger;
    maxp = std::max(maxp, v);
    if (v > 0.0) h -= v * std::log(v);
  }
  r.rank = 1 + larger;
  r.max_prob = r.rank == 1 ? py : maxp;
  r.entropy_norm = std::clamp(h / std::log(static_cast<double>(d.p.size())), 0.0, 1.0);
  return r;
}

/// Random valid window of 1..max_len records over a small vocabulary, so
/// frequencies repeat.
inline std::vector<TokenRecord> random_window(Rng& rng, int max_len = 20) {
  const int n = rng.integer(1, max_len);
  std::vector<TokenRecord> w;
  for (int i = 0; i < n; ++i) {
    auto d = random_distribution(rng, 12);
    w.push_back(record_from(d));
  }
  return w;
}

// ---------------------------------------------------------------------------
// Planted population
// ---------------------------------------------------------------------------

struct PopulationSpec {
  int subjects = 20;
  int tasks = 6;
  int instances = 4;
  int experts = 1;
  int tokens = 40;
  int vocab = 50;
  int generic_tokens = 400;
  double score_noise = 0.2;
  std::uint64_t seed = 20260917;
};

struct Population {
  std::vector<std::string> subjects;
  std::vector<std::string> tasks;
  std::vector<double> skill;     // latent
  std::vector<double> nuisance;  // drives generic-text CE, independent of skill
  proxyrank::ScoreTable scores;
  // docs[subject][task] : one document per (instance, expert)
  std::vector<std::vector<std::vector<TrajectoryDocument>>> docs;
  std::vector<std::vector<TokenRecord>> generic;  // per subject
};

inline std::string name(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%02d", prefix, i);
  return buf;
}

/// Expert tokens (and their per-position difficulty) are shared by every
/// subject; each subject's logits favour the expert token by an amount that
/// grows with skill.
inline Population make_population(const PopulationSpec& spec) {
  Rng rng(spec.seed);
  Rng nuisance_rng(spec.seed ^ 0xA5A5A5A5ULL);
  Population pop;
  for (int i = 0; i < spec.subjects; ++i) {
    pop.subjects.push_back(name("m", i));
    pop.skill.push_back(rng.normal());
    pop.nuisance.push_back(nuisance_rng.normal());
  }
  for (int t = 0; t < spec.tasks; ++t) pop.tasks.push_back(name("task", t));

  // Zipf-like expert token distribution
  std::vector<double> zipf(spec.vocab);
  for (int v = 0; v < spec.vocab; ++v) zipf[v] = 1.0 / (v + 1.0);
  double zs = 0.0;
  for (double v : zipf) zs += v;
  auto draw_token = [&](Rng& r) {
    double u = r.uniform() * zs;
    for (int v = 0; v < spec.vocab; ++v) {
      u -= zipf[v];
      if (u <= 0.0) return v;
    }
    return spec.vocab - 1;
  };

  struct Slot {
    std::vector<int> ids;
    std::vector<double> difficulty;
    std::vector<double> elp;
  };
  // slots[task][instance * experts + expert]
  std::vector<std::vector<Slot>> slots(spec.tasks);
  for (auto& task : slots)
    for (int k = 0; k < spec.instances * spec.experts; ++k) {
      Slot s;
      const int len = spec.tokens + rng.integer(-spec.tokens / 4, spec.tokens / 4);
      for (int j = 0; j < len; ++j) {
        s.ids.push_back(draw_token(rng));
        s.difficulty.push_back(rng.normal());
        s.elp.push_back(std::log(rng.uniform(0.05, 1.0)));
      }
      task.push_back(std::move(s));
    }

  auto token = [&](Rng& r, int expert_id, double boost) {
    std::vector<double> z(spec.vocab);
    for (auto& v : z) v = 1.5 * r.normal();
    z[expert_id] += boost;
    Distribution d{softmax(z), expert_id};
    return record_from(d);
  };

  pop.docs.resize(spec.subjects);
  for (int i = 0; i < spec.subjects; ++i) {
    pop.docs[i].resize(spec.tasks);
    for (int t = 0; t < spec.tasks; ++t) {
      for (int inst = 0; inst < spec.instances; ++inst)
        for (int e = 0; e < spec.experts; ++e) {
          const Slot& s = slots[t][inst * spec.experts + e];
          TrajectoryDocument doc;
          doc.task = pop.tasks[t];
          doc.instance = name("q", inst);
          doc.expert = name("x", e);
          doc.answer_correct = ((inst + e) % 3) != 0;
          for (std::size_t j = 0; j < s.ids.size(); ++j) {
            auto r = token(rng, s.ids[j], 1.0 + 1.2 * pop.skill[i] - 0.5 * s.difficulty[j]);
            r.expert_model_logprob = s.elp[j];
            doc.tokens.push_back(r);
          }
          pop.docs[i][t].push_back(std::move(doc));
        }
      pop.scores.insert(pop.subjects[i], pop.tasks[t], pop.skill[i] + spec.score_noise * rng.normal());
    }
    std::vector<TokenRecord> g;
    for (int j = 0; j < spec.generic_tokens; ++j)
      g.push_back(token(nuisance_rng, draw_token(nuisance_rng), 1.0 + 0.5 * pop.nuisance[i]));
    pop.generic.push_back(std::move(g));
  }
  return pop;
}

/// Writes one JSONL file per (subject, task), a generic-text file and a
/// manifest per subject, plus scores.csv. Returns the manifest paths.
inline std::vector<std::filesystem::path> write_population(const Population& pop, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<fs::path> manifests;
  for (std::size_t i = 0; i < pop.subjects.size(); ++i) {
    const auto& s = pop.subjects[i];
    nlohmann::ordered_json files;
    for (std::size_t t = 0; t < pop.tasks.size(); ++t) {
      const auto file = s + "_" + pop.tasks[t] + ".jsonl";
      proxyrank::write_trajectories(dir / file, pop.docs[i][t]);
      files[pop.tasks[t]] = file;
    }
    TrajectoryDocument g;
    g.task = "generic";
    g.instance = "web";
    g.expert = "text";
    g.tokens = pop.generic[i];
    proxyrank::write_trajectories(dir / (s + "_generic.jsonl"), {g});
    nlohmann::ordered_json m;
    m["subject"] = s;
    m["kind"] = "model";
    m["n_params"] = 1e8 * (i + 1);
    m["d_tokens"] = 2e9;
    m["files"] = files;
    m["generic"] = s + "_generic.jsonl";
    const auto mp = dir / (s + ".json");
    std::ofstream(mp) << m.dump(2) << "\n";
    manifests.push_back(mp);
  }
  std::ofstream sc(dir / "scores.csv");
  sc << "subject,task,score\n";
  for (const auto& s : pop.subjects)
    for (const auto& t : pop.tasks)
      sc << s << "," << t << "," << proxyrank::format_shortest(pop.scores.at(s, t)) << "\n";
  return manifests;
}

}  // namespace synth
