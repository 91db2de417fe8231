#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "selfj/calibrate.hpp"

using namespace selfj;

namespace {

std::vector<int> counts(const std::vector<int>& classes) {
  std::vector<int> c(kNumClasses, 0);
  for (int k : classes) ++c[k - 1];
  return c;
}

// Argmax over the eleven grid points with ties to the larger alpha.
double exhaustive_alpha(const std::vector<DevRecord>& dev) {
  std::vector<double> se, cs, gold;
  for (const auto& d : dev) {
    se.push_back(d.self_eval);
    cs.push_back(d.cosine);
    gold.push_back(d.gold_score);
  }
  const auto z1 = oracle::zscore(se), z2 = oracle::zscore(cs);
  double best = -2, best_alpha = -1;
  for (int k = 0; k <= 10; ++k) {
    const double a = k / 10.0;
    std::vector<double> mix;
    for (std::size_t i = 0; i < dev.size(); ++i) mix.push_back(a * z1[i] + (1 - a) * z2[i]);
    const double r = oracle::pearson(mix, gold);
    if (r >= best - 1e-12) {
      best = std::max(best, r);
      best_alpha = a;
    }
  }
  return best_alpha;
}

}  // namespace

TEST(Calibrate, ZscoreExamples) {
  const auto z = zscore(std::vector<double>{1, 2, 3});
  EXPECT_NEAR(z[0], -1.0, 1e-15);
  EXPECT_NEAR(z[1], 0.0, 1e-15);
  EXPECT_NEAR(z[2], 1.0, 1e-15);
  EXPECT_THROW(zscore(std::vector<double>{5, 5, 5}), Error);
  EXPECT_THROW(zscore(std::vector<double>{5}), Error);
  std::mt19937_64 rng(3);
  const auto v = oracle::random_vector(rng, 40, -3, 8);
  const auto once = zscore(v);
  const auto twice = zscore(once);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(once[i], twice[i], 1e-9);
}

TEST(Calibrate, ZscoreUsesSampleStandardDeviation) {
  // [1,2,3] has sample sd 1, so the z-scores are -1, 0, 1.
  const auto z = zscore(std::vector<double>{10, 20, 30});
  EXPECT_NEAR(z[0], -1.0, 1e-15);
}

TEST(Calibrate, CombineEndpoints) {
  EXPECT_DOUBLE_EQ(combine(4, 8, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(combine(4, 8, 0.0), 8.0);
  EXPECT_DOUBLE_EQ(combine(4, 8, 0.5), 6.0);
  EXPECT_THROW(combine(4, 8, 1.5), Error);
  EXPECT_THROW(combine(4, 8, -0.1), Error);
}

TEST(Calibrate, AlphaGridIsExact) {
  const auto g = alpha_grid(0.1);
  ASSERT_EQ(g.size(), 11u);
  EXPECT_EQ(g.front(), 0.0);
  EXPECT_EQ(g.back(), 1.0);
  EXPECT_EQ(g[3], 0.3);
  EXPECT_THROW(alpha_grid(0.3), Error);
  EXPECT_THROW(alpha_grid(0.0), Error);
}

TEST(Calibrate, AlphaEndpoints) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  std::vector<DevRecord> self_only, cos_only;
  std::vector<double> se, cs;
  for (int i = 0; i < 150; ++i) {
    se.push_back(1 + static_cast<int>(rng() % 10));
    cs.push_back(std::tanh(n(rng)));
  }
  const auto zs = oracle::zscore(se), zc = oracle::zscore(cs);
  for (int i = 0; i < 150; ++i) {
    self_only.push_back({se[i], cs[i], zs[i]});
    cos_only.push_back({se[i], cs[i], zc[i]});
  }
  EXPECT_EQ(search_alpha(self_only).alpha_star, 1.0);
  EXPECT_EQ(search_alpha(cos_only).alpha_star, 0.0);
}

TEST(Calibrate, AlphaMatchesExhaustiveGridOnMixedSignal) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> se, cs;
  for (int i = 0; i < 150; ++i) {
    se.push_back(n(rng));
    cs.push_back(n(rng));
  }
  const auto z1 = oracle::zscore(se), z2 = oracle::zscore(cs);
  std::vector<DevRecord> dev;
  for (int i = 0; i < 150; ++i) dev.push_back({se[i], cs[i], 0.7 * z1[i] + 0.3 * z2[i] + 0.05 * n(rng)});
  const auto r = search_alpha(dev);
  EXPECT_EQ(r.alpha_star, exhaustive_alpha(dev));
  EXPECT_NEAR(r.alpha_star, 0.7, 0.1 + 1e-12);
  ASSERT_EQ(r.per_alpha_correlations.size(), 11u);
  for (const auto& [a, c] : r.per_alpha_correlations)
    if (a == r.alpha_star) {
      for (const auto& [a2, c2] : r.per_alpha_correlations) EXPECT_GE(c, c2);
    }
}

TEST(Calibrate, AlphaTieGoesToLargerAlpha) {
  // Identical columns make every alpha equally good.
  std::vector<DevRecord> dev;
  for (int i = 0; i < 10; ++i) dev.push_back({double(i), double(i) / 10.0, double(i * i)});
  EXPECT_EQ(search_alpha(dev).alpha_star, 1.0);
}

TEST(Calibrate, AlphaRejectsDegenerateDev) {
  std::vector<DevRecord> constant_gold{{1, 0.1, 5}, {2, 0.2, 5}, {3, 0.4, 5}};
  EXPECT_THROW(search_alpha(constant_gold), Error);
  std::vector<DevRecord> tiny{{1, 0.1, 5}, {2, 0.2, 6}};
  EXPECT_THROW(search_alpha(tiny), Error);
}

TEST(Calibrate, DiscretizeTenDistinct) {
  const std::vector<double> raw{0.9, -0.5, 0.1, 0.3, -0.9, 0.7, 0.0, 0.5, -0.2, 0.2};
  const auto c = discretize_cosine(raw);
  std::vector<std::size_t> order(raw.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return raw[i] < raw[j]; });
  for (std::size_t r = 0; r < order.size(); ++r) EXPECT_EQ(c[order[r]], static_cast<int>(r) + 1);
}

TEST(Calibrate, DiscretizeAllIdenticalShareOneClass) {
  const std::vector<double> raw(17, 0.42);
  const auto c = discretize_cosine(raw);
  for (int k : c) EXPECT_EQ(k, c[0]);
}

TEST(Calibrate, DiscretizeTwentySpacedMatchesSliceOracle) {
  std::vector<double> raw;
  for (int i = 0; i < 20; ++i) raw.push_back(-0.95 + 0.1 * ((i * 7) % 20));
  const auto c = discretize_cosine(raw);
  EXPECT_EQ(c, oracle::slice_classes(raw));
  for (int k : counts(c)) EXPECT_EQ(k, 2);
}

TEST(Calibrate, DiscretizeRejectsOutOfRange) {
  EXPECT_THROW(discretize_cosine(std::vector<double>{0.5, 1.5}), Error);
  EXPECT_THROW(discretize_cosine(std::vector<double>{}), Error);
}

TEST(Calibrate, EqualWidthMode) {
  const auto c = discretize_cosine(std::vector<double>{-1.0, -0.05, 0.05, 0.99, 1.0}, BinningMode::equal_width);
  EXPECT_EQ(c, (std::vector<int>{1, 5, 6, 10, 10}));
  EXPECT_EQ(parse_binning_mode(to_string(BinningMode::equal_width)), BinningMode::equal_width);
  EXPECT_THROW(parse_binning_mode("quantile"), Error);
}

TEST(Calibrate, UniformizeCounts) {
  std::mt19937_64 rng(13);
  std::vector<double> hundred = oracle::random_vector(rng, 100, -5, 5);
  for (int k : counts(uniformize(hundred))) EXPECT_EQ(k, 10);
  const auto c13 = counts(uniformize(oracle::random_vector(rng, 13, 0, 1)));
  EXPECT_LE(*std::max_element(c13.begin(), c13.end()) - *std::min_element(c13.begin(), c13.end()), 1);
  const auto v57 = oracle::random_vector(rng, 57, 0, 1);
  EXPECT_EQ(uniformize(v57), oracle::slice_classes(v57));
}

TEST(Calibrate, UniformizeBreaksTiesByIndex) {
  const std::vector<double> v(30, 3.0);
  const auto c = uniformize(v);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(c[i], static_cast<int>(i / 3) + 1);
}

TEST(Calibrate, ShiftLabels) {
  EXPECT_EQ(shift_labels(std::vector<int>{1}), std::vector<int>{0});
  EXPECT_EQ(shift_labels(std::vector<int>{10}), std::vector<int>{9});
  std::vector<int> all(10), expect(10);
  std::iota(all.begin(), all.end(), 1);
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(shift_labels(all), expect);
  EXPECT_THROW(shift_labels(std::vector<int>{0}), Error);
  EXPECT_THROW(shift_labels(std::vector<int>{11}), Error);
}

TEST(Calibrate, TrainingSetSingleRecord) {
  Dataset<RatingRecord> ds;
  RatingRecord r;
  r.instruction_id = "a";
  r.model_id = "m";
  r.self_eval = 7;
  r.cosine_raw = 0.3;
  r.cosine_class = 7;
  ds.records.push_back(r);
  for (double a : {0.0, 0.3, 1.0}) {
    const auto t = build_training_set(ds, a);
    ASSERT_EQ(t.records.size(), 1u);
    EXPECT_DOUBLE_EQ(*t.records.records[0].combined, 7.0);
  }
}

TEST(Calibrate, TrainingSetAlphaOneFollowsSelfEval) {
  Dataset<RatingRecord> ds;
  std::mt19937_64 rng(21);
  for (int i = 0; i < 30; ++i) {
    RatingRecord r;
    r.instruction_id = "q" + std::to_string(i);
    r.model_id = "m";
    r.self_eval = 1 + (i * 7) % 10;
    r.cosine_raw = 0.5;
    r.cosine_class = 1 + static_cast<int>(rng() % 10);
    ds.records.push_back(r);
  }
  const auto t = build_training_set(ds, 1.0);
  for (std::size_t i = 0; i < t.records.size(); ++i)
    for (std::size_t j = 0; j < t.records.size(); ++j) {
      const auto& a = t.records.records[i];
      const auto& b = t.records.records[j];
      if (*a.self_eval < *b.self_eval) { EXPECT_LE(*a.final_class, *b.final_class); }
    }
  for (int k : class_histogram<int>(std::vector<int>([&] {
         std::vector<int> f;
         for (const auto& r : t.records) f.push_back(*r.final_class);
         return f;
       }()),
                                    0))
    EXPECT_EQ(k, 3);
}

TEST(Calibrate, TrainingSetExcludesIncompleteRecords) {
  Dataset<RatingRecord> ds;
  RatingRecord full;
  full.instruction_id = "a";
  full.model_id = "m";
  full.self_eval = 3;
  full.cosine_raw = 0.1;
  full.cosine_class = 4;
  RatingRecord missing = full;
  missing.instruction_id = "b";
  missing.self_eval.reset();
  ds.records = {full, missing};
  const auto t = build_training_set(ds, 0.5);
  EXPECT_EQ(t.records.size(), 1u);
  ASSERT_EQ(t.excluded.size(), 1u);
  EXPECT_EQ(t.excluded[0].id, "b|m|0");
}

TEST(Calibrate, AssignCosineClassesSkipsIncomplete) {
  Dataset<RatingRecord> ds;
  for (int i = 0; i < 11; ++i) {
    RatingRecord r;
    r.instruction_id = "q" + std::to_string(i);
    r.model_id = "m";
    r.cosine_raw = -0.5 + 0.1 * i;
    if (i != 5) r.self_eval = 5;
    ds.records.push_back(r);
  }
  assign_cosine_classes(ds, BinningMode::equal_frequency);
  EXPECT_FALSE(ds.records[5].cosine_class);
  for (int i = 0; i < 11; ++i)
    if (i != 5) { EXPECT_TRUE(ds.records[i].cosine_class); }
  EXPECT_EQ(*ds.records[0].cosine_class, 1);
  EXPECT_EQ(*ds.records[10].cosine_class, 10);
}
