#include "anglseg/scene.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace anglseg;

namespace {

SceneSpec two_class_spec(std::size_t h, std::size_t w, std::vector<Direction> views) {
  SceneSpec s;
  s.height = h;
  s.width = w;
  s.num_classes = 2;
  s.material_map = LabelMap::Zero(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(w));
  s.material_map.rightCols(static_cast<Eigen::Index>(w / 2)).setConstant(1);
  s.view_angles = std::move(views);
  s.sun = Direction::make(0.5, 0.3);
  s.seed = 42;
  return s;
}

}  // namespace

TEST(Render, LambertianMatchesClosedForm) {
  auto spec = two_class_spec(6, 8, spread_views(5, 0.6));
  spec.ambient = 0.15;
  std::vector<BrdfModel> table{{0, BrdfKind::lambertian, 0.3, 0, 1, "a"}, {1, BrdfKind::lambertian, 0.7, 0, 1, "b"}};
  const auto stack = render_stack(spec, table);
  for (std::size_t p = 0; p < stack.num_pixels(); ++p) {
    const double rho = spec.material_map.data()[p] == 0 ? 0.3 : 0.7;
    const double expect = 3.0 * rho / std::numbers::pi * std::cos(0.5) + 0.15 * rho;
    for (Eigen::Index j = 0; j < 5; ++j) EXPECT_NEAR(stack.data(j, static_cast<Eigen::Index>(p)), expect, 1e-4);
  }
  EXPECT_TRUE(stack.valid.all());
  EXPECT_TRUE((stack.labels.array() == spec.material_map.array()).all());
}

TEST(Render, SpecularViewsFollowTheMirrorLobe) {
  std::vector<Direction> views{Direction::make(0.5, 0.3 + std::numbers::pi), Direction::make(0.5, 0.3),
                               Direction::make(0.2, 1.0)};
  auto spec = two_class_spec(4, 4, views);
  spec.ambient = 0.0;
  const BrdfModel phong{1, BrdfKind::phong_specular, 0.2, 0.3, 6, "p"};
  std::vector<BrdfModel> table{{0, BrdfKind::lambertian, 0.5, 0, 1, "a"}, phong};
  const auto stack = render_stack(spec, table);
  const auto l = spec.sun.vector();
  for (std::size_t j = 0; j < views.size(); ++j) {
    const auto v = views[j].vector();
    const double rv = std::max(0.0, -l.x() * v.x() - l.y() * v.y() + l.z() * v.z());
    const double f = 0.2 / std::numbers::pi + 0.3 * 8.0 / (2 * std::numbers::pi) * std::pow(rv, 6.0);
    EXPECT_NEAR(stack.data(static_cast<Eigen::Index>(j), 3), 3.0 * f * std::cos(0.5), 1e-5);
  }
  // the mirror view is the brightest sample of the specular half
  EXPECT_GT(stack.data(0, 3), stack.data(1, 3));
  EXPECT_GT(stack.data(0, 3), stack.data(2, 3));
}

TEST(Render, DeterministicUnderSeedAndNoiseHasRequestedSpread) {
  auto spec = two_class_spec(32, 32, spread_views(4, 0.4));
  spec.noise_sigma = 0.05;
  const auto table = default_brdf_table(2);
  const auto a = render_stack(spec, table);
  const auto b = render_stack(spec, table);
  EXPECT_TRUE((a.data == b.data).all());
  auto clean_spec = spec;
  clean_spec.noise_sigma = 0.0;
  const auto clean = render_stack(clean_spec, table);
  const Eigen::ArrayXXd diff = (a.data - clean.data).cast<double>();
  const double sd = std::sqrt((diff - diff.mean()).square().mean());
  EXPECT_NEAR(sd, 0.05, 0.005);
  spec.seed = 43;
  EXPECT_FALSE((render_stack(spec, table).data == a.data).all());
  EXPECT_GE(a.data.minCoeff(), 0.0f);
}

TEST(Render, InvalidSamplesAreZeroAndCounted) {
  auto spec = two_class_spec(40, 40, spread_views(8, 0.5));
  spec.invalid_fraction = 0.2;
  const auto stack = render_stack(spec, default_brdf_table(2));
  const double frac = 1.0 - stack.valid.cast<double>().mean();
  EXPECT_NEAR(frac, 0.2, 0.02);
  for (Eigen::Index p = 0; p < stack.data.cols(); ++p) {
    for (Eigen::Index j = 0; j < stack.data.rows(); ++j) {
      if (!stack.valid(j, p)) {
        EXPECT_EQ(stack.data(j, p), 0.0f);
      }
    }
    EXPECT_EQ(stack.valid_count[p], stack.valid.col(p).count());
  }
}

TEST(IntensityStack, ViewImageFillsInvalidSamplesWithTheReference) {
  IntensityStack s;
  s.height = 1;
  s.width = 2;
  s.data.resize(3, 2);
  s.data << 1, 4, 2, 0, 3, 6;
  s.valid.resize(3, 2);
  s.valid << true, true, true, false, true, true;
  const auto ref = s.reference_image();
  EXPECT_FLOAT_EQ(ref(0, 0), 2.0f);
  EXPECT_FLOAT_EQ(ref(0, 1), 5.0f);
  const auto v1 = s.view_image(1);
  EXPECT_FLOAT_EQ(v1(0, 0), 2.0f);
  EXPECT_FLOAT_EQ(v1(0, 1), 5.0f);
}

TEST(Render, MissingBrdfClassIsNamed) {
  auto spec = two_class_spec(4, 4, spread_views(2, 0.3));
  std::vector<BrdfModel> table{{0, BrdfKind::lambertian, 0.5, 0, 1, "a"}};
  try {
    render_stack(spec, table);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("class id 1"), std::string::npos);
  }
}

TEST(Render, InvalidSpecsRejected) {
  auto spec = two_class_spec(4, 4, {});
  EXPECT_THROW(render_stack(spec, default_brdf_table(2)), std::invalid_argument);
  spec = two_class_spec(4, 4, spread_views(2, 0.3));
  spec.material_map(0, 0) = 5;
  EXPECT_THROW(render_stack(spec, default_brdf_table(2)), std::invalid_argument);
}

TEST(Voronoi, TilesTheImageWithUniformCells) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SceneGenOptions o;
    o.height = 48;
    o.width = 40;
    o.num_classes = 6;
    o.albedo_jitter = 0.1;
    const auto spec = random_scene_spec(o, seed);
    ASSERT_EQ(spec.material_map.rows(), 48);
    ASSERT_EQ(spec.material_map.cols(), 40);
    EXPECT_GE(spec.material_map.minCoeff(), 0);
    EXPECT_LT(spec.material_map.maxCoeff(), 6);
    EXPECT_GE(spec.cell_albedo_scale.size(), 20u);
    EXPECT_LE(spec.cell_albedo_scale.size(), 60u);
    std::vector<int> cell_class(spec.cell_albedo_scale.size(), -1);
    for (Eigen::Index i = 0; i < spec.cell_map.size(); ++i) {
      auto& c = cell_class[static_cast<std::size_t>(spec.cell_map.data()[i])];
      if (c < 0) c = spec.material_map.data()[i];
      EXPECT_EQ(c, spec.material_map.data()[i]);
    }
    for (double s : spec.cell_albedo_scale) {
      EXPECT_GE(s, 0.9);
      EXPECT_LE(s, 1.1);
    }
    EXPECT_EQ(spec.num_views(), 8u);
    for (const auto& v : spec.view_angles) EXPECT_LE(v.theta, o.view_theta_max);
  }
}
