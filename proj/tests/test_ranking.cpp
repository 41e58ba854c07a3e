// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The proxyrank Authors

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "bundle.hpp"
#include "oracles.hpp"
#include "proxyrank/ranking.hpp"

using namespace proxyrank;

namespace {

using synth::Bundle;
using synth::names;
using synth::random_bundle;

using synth::brute_sparse3;

}  // namespace

// ---------------------------------------------------------------------------

TEST(Spearman, Examples) {
  std::vector<double> x = {1, 2, 3};
  EXPECT_EQ(*spearman(x, std::vector<double>{10, 20, 30}), 1.0);
  EXPECT_DOUBLE_EQ(*spearman(x, std::vector<double>{3, 1, 2}), -0.5);
  EXPECT_EQ(*spearman(x, std::vector<double>{3, 2, 1}), -1.0);
}

TEST(Spearman, UndefinedCases) {
  EXPECT_FALSE(spearman(std::vector<double>{1}, std::vector<double>{2}));
  EXPECT_FALSE(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}));
  EXPECT_THROW(spearman(std::vector<double>{1, 2}, std::vector<double>{1}), ValidationError);
}

TEST(Spearman, MatchesPairwiseOracleExhaustively) {
  // every permutation of n <= 6 against value patterns with ties
  for (int n = 2; n <= 6; ++n) {
    std::vector<std::vector<double>> patterns;
    std::vector<double> distinct(n), tied(n), heavy(n);
    for (int i = 0; i < n; ++i) {
      distinct[i] = i;
      tied[i] = i / 2;
      heavy[i] = i < n / 2 ? 0.0 : 1.0;
    }
    patterns = {distinct, tied, heavy};
    for (const auto& x : patterns)
      for (const auto& base : patterns) {
        auto y = base;
        std::sort(y.begin(), y.end());
        do {
          const auto got = spearman(x, y);
          const auto want = oracle::spearman(x, y);
          ASSERT_EQ(got.has_value(), want.has_value());
          if (got) { ASSERT_EQ(*got, *want); }
        } while (std::next_permutation(y.begin(), y.end()));
      }
  }
}

TEST(Spearman, RandomTiesUpToTen) {
  synth::Rng rng(31);
  for (int trial = 0; trial < 5000; ++trial) {
    const int n = rng.integer(2, 10);
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = rng.integer(0, 4);
    for (auto& v : y) v = rng.integer(0, 4);
    const auto got = spearman(x, y);
    const auto want = oracle::spearman(x, y);
    ASSERT_EQ(got.has_value(), want.has_value());
    if (got) { ASSERT_EQ(*got, *want); }
  }
}

TEST(Spearman, MonotoneTransformInvariance) {
  synth::Rng rng(32);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.integer(2, 40);
    std::vector<double> x(n), y(n), tx(n);
    for (int i = 0; i < n; ++i) {
      x[i] = rng.integer(-5, 5) + 0.5 * rng.uniform();
      y[i] = rng.normal();
      tx[i] = std::exp(x[i]) * 3.0 - 7.0;
    }
    const auto a = spearman(x, y), b = spearman(tx, y);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (a) { EXPECT_EQ(*a, *b); }
  }
}

TEST(DecisionAccuracy, Examples) {
  std::map<std::string, double> truth = {{"a", 1}, {"b", 3}, {"c", 2}};
  std::map<std::string, double> pred = {{"a", 0.1}, {"b", 0.2}, {"c", 0.3}};
  EXPECT_DOUBLE_EQ(decision_accuracy(pred, truth), 2.0 / 3.0);
  EXPECT_EQ(decision_accuracy(truth, truth), 1.0);
  std::map<std::string, double> rev = {{"a", -1}, {"b", -3}, {"c", -2}};
  EXPECT_EQ(decision_accuracy(rev, truth), 0.0);
  std::map<std::string, double> tied = {{"a", 5}, {"b", 5}};
  EXPECT_THROW(decision_accuracy(tied, tied), ValidationError);
  std::map<std::string, double> other = {{"a", 1}, {"x", 3}, {"c", 2}};
  EXPECT_THROW(decision_accuracy(other, truth), ValidationError);
}

TEST(DecisionAccuracy, MatchesPairOracleExhaustively) {
  for (int n = 2; n <= 6; ++n) {
    std::vector<double> tied(n), distinct(n);
    for (int i = 0; i < n; ++i) {
      tied[i] = i / 2;
      distinct[i] = i;
    }
    for (const auto& truth : {distinct, tied})
      for (const auto& base : {distinct, tied}) {
        auto pred = base;
        do {
          const auto want = oracle::decision_accuracy(pred, truth);
          if (std::isnan(want)) continue;
          ASSERT_EQ(decision_accuracy(pred, truth), want);
        } while (std::next_permutation(pred.begin(), pred.end()));
      }
  }
}

TEST(DecisionAccuracy, SelfAndNegation) {
  synth::Rng rng(33);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(rng.integer(2, 30));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i) + rng.uniform();
    std::vector<double> neg(x.size());
    std::transform(x.begin(), x.end(), neg.begin(), [](double v) { return -v; });
    EXPECT_EQ(decision_accuracy(x, x), 1.0);
    EXPECT_EQ(decision_accuracy(neg, x), 0.0);
  }
}

TEST(ScoreTable, Invariants) {
  ScoreTable t;
  t.insert("a", "t1", 1.0);
  EXPECT_THROW(t.insert("a", "t1", 2.0), ValidationError);
  EXPECT_THROW(t.insert("b", "t1", std::nan("")), ValidationError);
  EXPECT_THROW(t.at("b", "t1"), ValidationError);
  EXPECT_EQ(t.size(), 1u);
}

TEST(PreferencePairs, Examples) {
  ScoreTable s;
  s.insert("a", "t", 1);
  s.insert("b", "t", 2);
  s.insert("c", "t", 3);
  std::vector<std::string> t1 = {"t"}, abc = {"a", "b", "c"};
  const auto p = preference_pairs(s, t1, abc);
  EXPECT_EQ(p.size(), 3u);
  for (const auto& q : p) EXPECT_GT(s.at(q.winner, q.task), s.at(q.loser, q.task));

  ScoreTable tie;
  tie.insert("a", "t", 1);
  tie.insert("b", "t", 1);
  std::vector<std::string> ab = {"a", "b"};
  EXPECT_TRUE(preference_pairs(tie, t1, ab).empty());

  ScoreTable two;
  two.insert("a", "x", 1);
  two.insert("b", "x", 2);
  two.insert("a", "y", 4);
  two.insert("b", "y", 3);
  std::vector<std::string> xy = {"x", "y"};
  EXPECT_EQ(preference_pairs(two, xy, ab).size(), 2u);

  std::vector<std::string> abz = {"a", "b", "z"};
  try {
    preference_pairs(two, xy, abz);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("z"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------

TEST(Univariate, PlantedFeatureAndOrientation) {
  for (double sign : {1.0, -1.0}) {
    auto b = random_bundle(10, 3, 41, [&](const ProxyVector& v, synth::Rng&) { return sign * v.values[23]; });
    const auto r = select_univariate(b.features, b.scores, b.tasks, b.subjects);
    ASSERT_EQ(r.ids.size(), 1u);
    EXPECT_EQ(r.ids[0].index(), 23);
    EXPECT_EQ(r.coefficients[0], sign);
    EXPECT_EQ(r.selection_objective, 1.0);
    for (const auto& t : b.tasks) {
      const auto pred = score_task(r, b.features, t, b.subjects);
      EXPECT_EQ(*spearman(pred, detail::task_scores(b.scores, t, b.subjects)), 1.0);
    }
  }
}

TEST(Univariate, TwoSubjectsTieToLowestId) {
  auto b = random_bundle(2, 2, 42, [](const ProxyVector&, synth::Rng& rng) { return rng.normal(); });
  // force every feature to agree in sign on both tasks by construction: any |rho| is 1 per task
  const auto r = select_univariate(b.features, b.scores, b.tasks, b.subjects);
  int expected = -1;
  for (int j = 0; j < kNumProxies && expected < 0; ++j) {
    double m = 0;
    for (const auto& t : b.tasks) {
      std::vector<double> x, y;
      for (const auto& s : b.subjects) {
        x.push_back(b.features.at(s, t).values[j]);
        y.push_back(b.scores.at(s, t));
      }
      m += *oracle::spearman(x, y);
    }
    if (std::abs(m / 2) == 1.0) expected = j;
  }
  ASSERT_GE(expected, 0);
  EXPECT_EQ(r.ids[0].index(), expected);
}

TEST(Univariate, AllUndefinedIsDegenerate) {
  auto b = random_bundle(4, 2, 43, [](const ProxyVector&, synth::Rng&) { return 1.0; });
  EXPECT_THROW(select_univariate(b.features, b.scores, b.tasks, b.subjects), DegenerateFitError);
}

TEST(Sparse3, GridAndTriplets) {
  const auto g = CoefficientGrid::log_spaced();
  ASSERT_EQ(g.values.size(), 15u);
  EXPECT_EQ(g.values.front(), -1000.0);
  EXPECT_EQ(g.values[7], 0.0);
  EXPECT_EQ(g.values.back(), 1000.0);
  EXPECT_TRUE(std::is_sorted(g.values.begin(), g.values.end()));
  EXPECT_EQ(enumerate_triplets(80).size(), 82160u);
  const auto t = enumerate_triplets(5);
  EXPECT_EQ(t.size(), 10u);
  EXPECT_EQ(t[0].i, 0);
  EXPECT_EQ(t[0].k, 2);
  EXPECT_EQ(t.back().i, 2);
}

TEST(Sparse3, MatchesBruteForceOnTenFeatures) {
  const auto grid = CoefficientGrid::log_spaced().values;
  for (std::uint64_t inst = 0; inst < 6; ++inst) {
    auto b = random_bundle(6, 2, 100 + inst, [](const ProxyVector& v, synth::Rng& rng) {
      return v.values[1] - 0.3 * v.values[4] + 0.5 * rng.normal();
    });
    Sparse3Options opt;
    opt.library_size = 10;
    const auto r = select_sparse3(b.features, b.scores, b.tasks, b.subjects, opt);
    const auto want = brute_sparse3(b, 10, grid);
    const double o = want.mean >= 0 ? 1.0 : -1.0;
    EXPECT_EQ(r.ids[0].index(), want.i);
    EXPECT_EQ(r.ids[1].index(), want.j);
    EXPECT_EQ(r.ids[2].index(), want.k);
    EXPECT_EQ(r.coefficients[0], o);
    EXPECT_EQ(r.coefficients[1], o * want.c2 + 0.0);
    EXPECT_EQ(r.coefficients[2], o * want.c3 + 0.0);
    EXPECT_EQ(r.selection_objective, want.abs_mean);
  }
}

TEST(Sparse3, ThreadCountDoesNotChangeResult) {
  auto b = random_bundle(8, 3, 51, [](const ProxyVector& v, synth::Rng& rng) {
    return v.values[2] + v.values[9] + rng.normal();
  });
  Sparse3Options opt;
  opt.library_size = 16;
  const auto one = select_sparse3(b.features, b.scores, b.tasks, b.subjects, opt);
  opt.threads = 4;
  const auto four = select_sparse3(b.features, b.scores, b.tasks, b.subjects, opt);
  EXPECT_EQ(one.ids, four.ids);
  EXPECT_EQ(one.coefficients, four.coefficients);
  EXPECT_EQ(one.selection_objective, four.selection_objective);
}

TEST(Sparse3, RecoversPlantedTriplet) {
  std::array<double, kNumProxies> scales;
  scales.fill(1.0);
  scales[17] = 0.1;  // 10 * Phi_17 ~ unit variance
  scales[42] = 10.0;  // 0.1 * Phi_42 ~ unit variance
  auto b = random_bundle(
      12, 4, 52, [](const ProxyVector& v, synth::Rng&) { return v.values[3] + 10.0 * v.values[17] - 0.1 * v.values[42]; },
      &scales);
  Sparse3Options opt;
  opt.library_size = 43;
  const auto r = select_sparse3(b.features, b.scores, b.tasks, b.subjects, opt);
  ASSERT_EQ(r.ids.size(), 3u);
  EXPECT_EQ(r.ids[0].index(), 3);
  EXPECT_EQ(r.ids[1].index(), 17);
  EXPECT_EQ(r.ids[2].index(), 42);
  EXPECT_EQ(r.coefficients[0], 1.0);
  EXPECT_EQ(r.coefficients[1], 10.0);
  EXPECT_DOUBLE_EQ(r.coefficients[2], -0.1);
  EXPECT_EQ(r.selection_objective, 1.0);

  ProxyVector v = b.features.at(b.subjects[0], b.tasks[0]);
  EXPECT_DOUBLE_EQ(score_model(r, v), v.values[3] + 10.0 * v.values[17] - 0.1 * v.values[42]);
}

TEST(Sparse3, SingleSubjectPairTiesToFirst) {
  auto b = random_bundle(2, 1, 53, [](const ProxyVector& v, synth::Rng&) { return v.values[0]; });
  Sparse3Options opt;
  opt.library_size = 6;
  const auto r = select_sparse3(b.features, b.scores, b.tasks, b.subjects, opt);
  EXPECT_EQ(r.selection_objective, 1.0);
  const auto want = brute_sparse3(b, 6, opt.grid.values);
  EXPECT_EQ(r.ids[0].index(), want.i);
  EXPECT_EQ(r.ids[1].index(), want.j);
  EXPECT_EQ(r.ids[2].index(), want.k);
  EXPECT_EQ(r.coefficients[1], (want.mean >= 0 ? 1.0 : -1.0) * want.c2 + 0.0);
}

// ---------------------------------------------------------------------------

namespace {

// Feature 0 carries the score; the rest are noise.
Bundle one_d_bundle(int n_subjects, int n_tasks, std::uint64_t seed) {
  return random_bundle(n_subjects, n_tasks, seed, [](const ProxyVector& v, synth::Rng&) { return v.values[0]; });
}

std::vector<PreferencePair> all_pairs(const Bundle& b) { return preference_pairs(b.scores, b.tasks, b.subjects); }

double train_rho(const Ranker& r, const Bundle& b) {
  double s = 0;
  for (const auto& t : b.tasks)
    s += *spearman(score_task(r, b.features, t, b.subjects), detail::task_scores(b.scores, t, b.subjects));
  return s / static_cast<double>(b.tasks.size());
}

}  // namespace

TEST(RankSvmLinear, SeparableOneDimensional) {
  auto b = one_d_bundle(10, 2, 61);
  // keep only the informative feature by zeroing the rest
  FeatureTable only;
  for (const auto& [key, v] : b.features) {
    auto c = v;
    for (int j = 1; j < kNumProxies; ++j) c.values[j] = 0.0;
    only.insert(c);
  }
  b.features = only;
  const auto r = fit_ranksvm_linear(all_pairs(b), b.features, b.subjects);
  EXPECT_FALSE(r.degenerate);
  EXPECT_EQ(train_rho(r, b), 1.0);
  EXPECT_GT(r.linear.weights[0], 0.0);
}

TEST(RankSvmLinear, ObjectiveIsMonotone) {
  auto b = random_bundle(12, 3, 62, [](const ProxyVector& v, synth::Rng& rng) {
    return v.values[0] + 0.5 * v.values[5] + rng.normal();
  });
  const auto r = fit_ranksvm_linear(all_pairs(b), b.features, b.subjects);
  const auto& h = r.linear.trace.objective;
  ASSERT_GE(h.size(), 2u);
  for (std::size_t i = 1; i < h.size(); ++i) EXPECT_LE(h[i], h[i - 1] + 1e-9);
  EXPECT_LT(h.back(), h.front());
}

TEST(RankSvmLinear, ZeroRegularizationIsDegenerate) {
  auto b = one_d_bundle(6, 2, 63);
  SvmOptions opt;
  opt.regularization = 0.0;
  const auto r = fit_ranksvm_linear(all_pairs(b), b.features, b.subjects, opt);
  EXPECT_TRUE(r.degenerate);
  for (double w : r.linear.weights) EXPECT_EQ(w, 0.0);
  ProxyVector v = b.features.at(b.subjects[0], b.tasks[0]);
  EXPECT_EQ(score_model(r, v), 0.0);
}

TEST(RankSvmLinear, DuplicatedFeatureGivesSameRanking) {
  auto b = one_d_bundle(10, 2, 64);
  FeatureTable single, twin;
  for (const auto& [key, v] : b.features) {
    auto s = v, d = v;
    for (int j = 1; j < kNumProxies; ++j) s.values[j] = d.values[j] = 0.0;
    d.values[1] = d.values[0];
    single.insert(s);
    twin.insert(d);
  }
  const auto pairs = all_pairs(b);
  const auto a = fit_ranksvm_linear(pairs, single, b.subjects);
  const auto c = fit_ranksvm_linear(pairs, twin, b.subjects);
  for (const auto& t : b.tasks) {
    const auto sa = score_task(a, single, t, b.subjects);
    const auto sc = score_task(c, twin, t, b.subjects);
    EXPECT_EQ(*spearman(sa, sc), 1.0);
  }
}

TEST(RankSvmLinear, NoPairsIsAnError) {
  auto b = one_d_bundle(4, 1, 65);
  EXPECT_THROW(fit_ranksvm_linear({}, b.features, b.subjects), DegenerateFitError);
}

TEST(RankSvmLinear, PerTaskScalingInvariance) {
  auto b = random_bundle(10, 3, 66, [](const ProxyVector& v, synth::Rng& rng) {
    return v.values[0] - v.values[7] + 0.7 * rng.normal();
  });
  FeatureTable scaled;
  for (const auto& [key, v] : b.features) {
    auto c = v;
    const double k = key.second == b.tasks[1] ? 250.0 : 1.0;
    for (auto& x : c.values) x *= k;
    scaled.insert(c);
  }
  const auto pairs = all_pairs(b);
  for (auto variant : {RankerVariant::ranksvm_linear, RankerVariant::ranksvm_rbf, RankerVariant::univariate}) {
    RankerSpec spec;
    spec.variant = variant;
    const auto a = fit_ranker(spec, b.features, b.scores, b.tasks, b.subjects);
    const auto c = fit_ranker(spec, scaled, b.scores, b.tasks, b.subjects);
    for (const auto& t : b.tasks) {
      const auto sa = score_task(a, b.features, t, b.subjects);
      const auto sc = score_task(c, scaled, t, b.subjects);
      for (std::size_t i = 0; i < sa.size(); ++i)
        for (std::size_t j = 0; j < sa.size(); ++j)
          if (std::abs(sa[i] - sa[j]) > 1e-9) { EXPECT_EQ(sa[i] < sa[j], sc[i] < sc[j]) << to_string(variant); }
    }
  }
}

TEST(RankSvmRbf, PlantedMonotoneSignal) {
  auto b = one_d_bundle(10, 2, 67);
  FeatureTable only;
  for (const auto& [key, v] : b.features) {
    auto c = v;
    for (int j = 1; j < kNumProxies; ++j) c.values[j] = 0.0;
    only.insert(c);
  }
  b.features = only;
  const auto r = fit_ranksvm_rbf(all_pairs(b), b.features, b.subjects);
  EXPECT_FALSE(r.degenerate);
  EXPECT_EQ(train_rho(r, b), 1.0);
  const auto& h = r.rbf.trace.objective;
  for (std::size_t i = 1; i < h.size(); ++i) EXPECT_LE(h[i], h[i - 1] + 1e-9);

  const auto lin = fit_ranksvm_linear(all_pairs(b), b.features, b.subjects);
  for (const auto& t : b.tasks)
    EXPECT_EQ(*spearman(score_task(r, b.features, t, b.subjects), score_task(lin, b.features, t, b.subjects)), 1.0);
}

TEST(RankSvmRbf, HugeWidthIsDegenerate) {
  auto b = one_d_bundle(8, 2, 68);
  SvmOptions opt;
  opt.kernel_width = 1e12;
  const auto r = fit_ranksvm_rbf(all_pairs(b), b.features, b.subjects, opt);
  EXPECT_TRUE(r.degenerate);
}

TEST(RankSvmRbf, MedianWidth) {
  std::vector<std::vector<double>> pts = {{0.0}, {1.0}, {3.0}};
  // distances 1, 2, 3
  EXPECT_DOUBLE_EQ(median_distance(pts), 2.0);
  std::vector<std::vector<double>> same = {{1.0}, {1.0}};
  EXPECT_EQ(median_distance(same), 1.0);
}

TEST(Ranker, ScoringContracts) {
  Ranker unfitted;
  ProxyVector v;
  EXPECT_THROW(score_model(unfitted, v), Error);

  auto b = one_d_bundle(6, 2, 69);
  const auto r = select_univariate(b.features, b.scores, b.tasks, b.subjects);
  const auto& pv = b.features.at(b.subjects[2], b.tasks[1]);
  EXPECT_EQ(score_model(r, pv), pv.values[0]);

  // undefined entries take the fit-time task mean
  auto hole = pv;
  hole.defined[0] = false;
  EXPECT_EQ(score_model(r, hole), r.task_state.at(b.tasks[1]).mean[0]);
}

TEST(Ranker, ParseAndDescribe) {
  EXPECT_EQ(parse_ranker_variant("sparse3"), RankerVariant::sparse3);
  EXPECT_FALSE(parse_ranker_variant("lasso"));
  Ranker r;
  r.variant = RankerVariant::sparse3;
  r.ids = {ProxyId::from_index(0), ProxyId::from_index(14), ProxyId::from_index(61)};
  r.coefficients = {1.0, 10.0, -0.1};
  EXPECT_EQ(r.describe(), "sparse3:+1*uniform/ce_loss +10*probability/top_5_accuracy -0.1*inverse_frequency/top_1_accuracy");
}
