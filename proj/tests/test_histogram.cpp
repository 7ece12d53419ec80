#include "anglseg/histogram.hpp"
#include "histogram_invariants.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace anglseg;
using namespace anglseg::testing;

TEST(ConcentratedRange, MatchesLinearInterpolationQuantiles) {
  std::vector<float> v(100);
  std::iota(v.begin(), v.end(), 1.0f);
  std::mt19937_64 rng(1);
  std::shuffle(v.begin(), v.end(), rng);
  const auto r = concentrated_range(v, 0.05, 0.95);
  // position q*(n-1): 4.95 -> 5.95, 94.05 -> 95.05
  EXPECT_NEAR(r.lo, 5.95, 1e-9);
  EXPECT_NEAR(r.hi, 95.05, 1e-9);
}

TEST(ConcentratedRange, DegenerateRangeIsWidened) {
  std::vector<float> v(50, 0.4f);
  const auto r = concentrated_range(v, 0.05, 0.95);
  EXPECT_NEAR(r.lo, 0.4 - kRangeEpsilon, 1e-7);
  EXPECT_NEAR(r.hi, 0.4 + kRangeEpsilon, 1e-7);
  EXPECT_THROW(concentrated_range(std::span<const float>{}, 0.05, 0.95), std::invalid_argument);
}

TEST(BinCounts, OutOfRangeSamplesClampToEdgeBins) {
  std::vector<float> v{-5.0f, 0.0f, 0.49f, 0.5f, 0.99f, 1.0f, 7.0f};
  const auto c = bin_counts(v, 2, {0.0, 1.0});
  EXPECT_EQ(c[0], 3.0);
  EXPECT_EQ(c[1], 4.0);
  EXPECT_EQ(c.sum(), static_cast<double>(v.size()));
}

TEST(HistogramRow, BlocksNormalizedSeparately) {
  HistogramConfig cfg;
  cfg.coarse_bins = 4;
  cfg.fine_bins = 2;
  std::vector<float> v{0.1f, 0.2f, 0.7f, 1.1f};
  bool empty = true;
  const auto row = histogram_row(v, cfg, {0.0, 0.4}, &empty);
  EXPECT_FALSE(empty);
  ASSERT_EQ(row.size(), 6);
  // coarse bins of width 0.3 over [0, 1.2]
  EXPECT_FLOAT_EQ(row[0], 0.5f);
  EXPECT_FLOAT_EQ(row[2], 0.25f);
  EXPECT_FLOAT_EQ(row[3], 0.25f);
  // fine range [0, 0.4): 0.1 -> bin 0, 0.2 -> bin 1, others clamp to bin 1
  EXPECT_FLOAT_EQ(row[4], 0.25f);
  EXPECT_FLOAT_EQ(row[5], 0.75f);
}

TEST(HistogramRow, EmptySuperpixelIsUniformAndFlagged) {
  HistogramConfig cfg;
  bool empty = false;
  const auto row = histogram_row({}, cfg, {0.0, 1.0}, &empty);
  EXPECT_TRUE(empty);
  EXPECT_TRUE((row.array() == 1.0f / 16.0f).all());
}

TEST(BuildHistograms, FlagsEmptySuperpixelsAndRecordsCoverage) {
  LabelMap ids(1, 3);
  ids << 0, 1, 2;
  const std::vector<std::vector<float>> pooled{{0.1f, 0.2f}, {}, {0.5f}};
  const auto f = build_histograms(pooled, HistogramConfig{}, {0.0, 1.0}, ids);
  EXPECT_EQ(f.coverage, (std::vector<std::uint32_t>{2, 0, 1}));
  EXPECT_EQ(f.empty, (std::vector<bool>{false, true, false}));
  EXPECT_EQ(f.bins(), 32u);
  EXPECT_THROW(build_histograms(pooled, HistogramConfig{}, {1.0, 1.0}, ids), std::invalid_argument);
}

TEST(HistogramInvariants, HoldOnRandomFixtures) {
  const auto rep = run_histogram_invariants(25, 77);
  EXPECT_LE(rep.max_normalization_error, 1e-6);
  EXPECT_EQ(rep.permutation_failures, 0u);
  EXPECT_EQ(rep.dense_failures, 0u);
  EXPECT_EQ(rep.additivity_failures, 0u);
}

TEST(NearestCandidate, PicksSmallestL1DistanceWithLowestIndexTies) {
  HistogramMatrix cand(3, 2);
  cand << 1, 0, 0, 1, 1, 0;
  HistogramMatrix feat(3, 2);
  feat << 0.9f, 0.1f, 0.2f, 0.8f, 0.5f, 0.5f;
  const auto labels = nearest_candidate_classify(feat, cand);
  EXPECT_EQ(labels, (std::vector<std::int32_t>{0, 1, 0}));
  EXPECT_THROW(nearest_candidate_classify(feat, HistogramMatrix(2, 3)), std::invalid_argument);
}

TEST(ReferenceHistograms, SeparateLambertianFromSpecular) {
  SceneSpec scene;
  scene.num_classes = 2;
  scene.view_angles = spread_views(8, 0.6);
  scene.sun = Direction::make(0.5, 0.0);
  std::vector<BrdfModel> table{{0, BrdfKind::lambertian, 0.4, 0, 1, "L"}, {1, BrdfKind::phong_specular, 0.2, 0.3, 8, "S"}};
  HistogramConfig cfg;
  const auto refs = reference_histograms(scene, table, cfg, {0.0, 1.0}, 5);
  ASSERT_EQ(refs.rows(), 2);
  EXPECT_GT((refs.row(0) - refs.row(1)).cwiseAbs().sum(), 0.5f);
}
