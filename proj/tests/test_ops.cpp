#include "anglseg/ops.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace anglseg;
using namespace anglseg::testing;

TEST(Conv2d, MatchesDirectLoopOracle) {
  std::mt19937_64 rng(11);
  for (std::size_t trial = 0; trial < 30; ++trial) {
    const std::size_t cin = 1 + rng() % 3, cout = 1 + rng() % 4;
    const std::size_t k = (rng() % 2) ? 3 : 1;
    const std::size_t stride = 1 + rng() % 2, dilation = 1 + rng() % 3, pad = rng() % 3;
    ConvSpec s{cin, cout, k, k, stride, dilation, pad};
    const std::size_t h = 5 + rng() % 5, w = 5 + rng() % 5;
    if (s.output_height(h) == 0 || s.output_width(w) == 0) continue;
    auto x = random_tensor({2, cin, h, w}, rng, -1, 1, false);
    auto wt = random_tensor({cout, cin, k, k}, rng, -1, 1, false);
    auto b = random_tensor({cout}, rng, -1, 1, false);
    const bool with_bias = trial % 2;
    auto y = conv2d(x, wt, with_bias ? b : DTensor(), s);
    const auto expect = conv_oracle(x, wt, with_bias ? &b : nullptr, s);
    ASSERT_EQ(y.numel(), expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(y.values()[static_cast<Eigen::Index>(i)], expect[i], 1e-12);
  }
}

TEST(Conv2d, OutputExtents) {
  EXPECT_EQ(conv3x3(1, 1, 2).output_height(64), 32u);
  EXPECT_EQ(conv3x3(1, 1, 1, 2).output_height(16), 16u);
  EXPECT_EQ(conv3x3(1, 1, 1, 4).output_width(8), 8u);
  EXPECT_EQ(conv1x1(1, 1).output_height(7), 7u);
  EXPECT_EQ((ConvSpec{1, 1, 3, 3, 1, 1, 0}).output_height(2), 0u);
}

TEST(Conv2d, ShapeErrorsNameTheDimension) {
  auto x = Tensor::zeros({1, 3, 8, 8});
  auto w = Tensor::zeros({4, 2, 3, 3});
  try {
    conv2d(x, w, Tensor(), conv3x3(2, 4));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.dimension(), "input channels");
  }
  try {
    conv2d(Tensor::zeros({1, 2, 8, 8}), Tensor::zeros({4, 2, 3, 1}), Tensor(), conv3x3(2, 4));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.dimension(), "kernel width");
  }
  EXPECT_THROW(conv2d(Tensor::zeros({3, 8, 8}), w, Tensor(), conv3x3(2, 4)), ShapeError);
  EXPECT_THROW(conv2d(Tensor::zeros({1, 2, 8, 8}), Tensor::zeros({4, 2, 3, 3}), Tensor::zeros({3}), conv3x3(2, 4)),
               ShapeError);
}

TEST(BatchNorm, TrainModeNormalizesAndUpdatesRunningStats) {
  std::mt19937_64 rng(5);
  auto x = random_tensor({4, 3, 5, 5}, rng, -2.0, 3.0, false);
  BatchNormState<double> st(3);
  auto y = batch_norm(x, DTensor::full({3}, 1.0), DTensor::full({3}, 0.0), st, BatchNormMode::train);
  const std::size_t m = 4 * 25;
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, sq = 0, xm = 0, xsq = 0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 25; ++i) {
        const auto idx = static_cast<Eigen::Index>((b * 3 + c) * 25 + i);
        mean += y.values()[idx];
        sq += y.values()[idx] * y.values()[idx];
        xm += x.values()[idx];
        xsq += x.values()[idx] * x.values()[idx];
      }
    mean /= m;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq / m, 1.0, 1e-4);  // eps shrinks the variance slightly
    xm /= m;
    const double biased = xsq / m - xm * xm;
    const double unbiased = biased * m / (m - 1);
    EXPECT_NEAR(st.running_mean[static_cast<Eigen::Index>(c)], 0.1 * xm, 1e-12);
    EXPECT_NEAR(st.running_var[static_cast<Eigen::Index>(c)], 0.9 + 0.1 * unbiased, 1e-12);
  }
}

TEST(BatchNorm, EvalWithUnitStatsIsIdentity) {
  Tensor::Array v(2 * 2 * 3 * 3);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = (i % 2) ? 1.0f : -1.0f;
  auto x = Tensor::from({2, 2, 3, 3}, v);
  BatchNormState<float> st(2);
  auto y = batch_norm(x, Tensor::full({2}, 1.0f), Tensor::full({2}, 0.0f), st, BatchNormMode::eval);
  EXPECT_LE((y.values() - x.values()).abs().maxCoeff(), 1e-5f);
  EXPECT_FLOAT_EQ(st.running_mean[0], 0.0f);
}

TEST(BatchNorm, TrainModeNeedsTwoValues) {
  BatchNormState<float> st(1);
  EXPECT_THROW(batch_norm(Tensor::zeros({1, 1, 1, 1}), Tensor::full({1}, 1.0f), Tensor::zeros({1}), st,
                          BatchNormMode::train),
               ShapeError);
}

TEST(BilinearUpsample, HalfPixelCentersWithEdgeClamp) {
  auto x = Tensor::from({1, 1, 2, 2}, std::vector<float>{0, 1, 2, 3});
  auto y = bilinear_upsample(x, 2);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  // first row: x coordinates clamp to 0, then 0.25, 0.75, clamp to 1
  const std::vector<float> row0{0.0f, 0.25f, 0.75f, 1.0f};
  for (std::size_t j = 0; j < 4; ++j) EXPECT_FLOAT_EQ(y.values()[static_cast<Eigen::Index>(j)], row0[j]);
  // second row sits at y = 0.25 -> +0.5
  for (std::size_t j = 0; j < 4; ++j) EXPECT_FLOAT_EQ(y.values()[static_cast<Eigen::Index>(4 + j)], row0[j] + 0.5f);
  EXPECT_FLOAT_EQ(y.values()[15], 3.0f);
}

TEST(BilinearUpsample, ConstantsStayConstantAndFactorOneIsIdentity) {
  auto c = Tensor::full({1, 2, 3, 5}, 0.7f);
  for (std::size_t f : {2u, 4u, 8u}) {
    auto y = bilinear_upsample(c, f);
    EXPECT_EQ(y.shape(), (Shape{1, 2, 3 * f, 5 * f}));
    EXPECT_LE((y.values() - 0.7f).abs().maxCoeff(), 1e-6f);
  }
  auto same = bilinear_upsample(c, 1);
  EXPECT_EQ(same.node(), c.node());
}

TEST(AvgPool, PartialBorderWindowsAverageInBoundsPixels) {
  auto x = Tensor::from({1, 1, 3, 3}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto y = avg_pool2d(x, 2);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_FLOAT_EQ(y.values()[0], 3.0f);
  EXPECT_FLOAT_EQ(y.values()[1], 4.5f);
  EXPECT_FLOAT_EQ(y.values()[2], 7.5f);
  EXPECT_FLOAT_EQ(y.values()[3], 9.0f);
}

TEST(ConcatChannels, LayoutAndErrors) {
  auto a = Tensor::from({1, 1, 1, 2}, std::vector<float>{1, 2});
  auto b = Tensor::from({1, 2, 1, 2}, std::vector<float>{3, 4, 5, 6});
  auto y = concat_channels<float>({a, b});
  EXPECT_EQ(y.shape(), (Shape{1, 3, 1, 2}));
  for (int i = 0; i < 6; ++i) EXPECT_FLOAT_EQ(y.values()[i], static_cast<float>(i + 1));
  try {
    concat_channels<float>({a, Tensor::zeros({1, 1, 2, 2})});
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.dimension(), "height");
  }
  EXPECT_THROW(add(a, b), ShapeError);
}

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  auto logits = Tensor::zeros({2, 5, 3, 3});
  std::vector<std::int32_t> labels(18, 3);
  auto r = softmax_cross_entropy(logits, labels);
  EXPECT_NEAR(r.loss.item(), std::log(5.0), 1e-6);
  EXPECT_EQ(r.counted, 18u);
}

TEST(CrossEntropy, MatchesPerPixelOracleAndIgnoresLabels) {
  std::mt19937_64 rng(3);
  auto logits = random_tensor({2, 4, 2, 3}, rng, -3, 3, false);
  std::vector<std::int32_t> labels(12);
  for (auto& l : labels) l = static_cast<std::int32_t>(rng() % 5) - 1;
  double total = 0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 6; ++i) {
      const auto l = labels[b * 6 + i];
      if (l < 0) continue;
      double z = 0;
      for (std::size_t c = 0; c < 4; ++c) z += std::exp(logits.values()[static_cast<Eigen::Index>((b * 4 + c) * 6 + i)]);
      total += std::log(z) - logits.values()[static_cast<Eigen::Index>((b * 4 + static_cast<std::size_t>(l)) * 6 + i)];
      ++n;
    }
  auto r = softmax_cross_entropy(logits, labels);
  EXPECT_EQ(r.counted, n);
  EXPECT_NEAR(r.loss.item(), total / static_cast<double>(n), 1e-12);
}

TEST(CrossEntropy, AllIgnoredIsZeroAndFlagged) {
  auto logits = Tensor::zeros({1, 3, 2, 2}, true);
  std::vector<std::int32_t> labels(4, -1);
  auto r = softmax_cross_entropy(logits, labels);
  EXPECT_TRUE(r.all_ignored());
  EXPECT_EQ(r.loss.item(), 0.0f);
  r.loss.backward();
  EXPECT_TRUE((logits.grad() == 0.0f).all());
}

TEST(CrossEntropy, StableForLargeLogitsAndRejectsBadLabels) {
  auto logits = Tensor::from({1, 2, 1, 1}, std::vector<float>{1000.0f, -1000.0f});
  std::vector<std::int32_t> labels{1};
  auto r = softmax_cross_entropy(logits, labels);
  EXPECT_TRUE(std::isfinite(r.loss.item()));
  EXPECT_NEAR(r.loss.item(), 2000.0f, 1e-2f);
  std::vector<std::int32_t> bad{2};
  EXPECT_THROW(softmax_cross_entropy(logits, bad), std::out_of_range);
  std::vector<std::int32_t> short_labels;
  EXPECT_THROW(softmax_cross_entropy(logits, short_labels), ShapeError);
}

TEST(Argmax, TiesResolveToLowestClass) {
  auto logits = Tensor::from({1, 3, 1, 2}, std::vector<float>{1, 0, 1, 5, 1, 5});
  const auto a = argmax_channels(logits);
  EXPECT_EQ(a[0], 0);
  EXPECT_EQ(a[1], 1);
}
