#include "anglseg/brdf.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace anglseg;

namespace {
Direction random_direction(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> t(0.0, std::numbers::pi / 2), p(0.0, 2 * std::numbers::pi);
  return Direction::make(t(rng), p(rng));
}
const auto unit_light = [](const Direction&) { return 1.0; };
}  // namespace

TEST(Direction, ValidatesAndWraps) {
  EXPECT_THROW(Direction::make(-0.1, 0.0), std::domain_error);
  EXPECT_THROW(Direction::make(1.6, 0.0), std::domain_error);
  EXPECT_NEAR(Direction::make(0.3, 7.0).phi, 7.0 - 2 * std::numbers::pi, 1e-12);
  EXPECT_NEAR(Direction::make(0.3, -1.0).phi, 2 * std::numbers::pi - 1.0, 1e-12);
  const auto v = Direction::make(0.0, 1.0).vector();
  EXPECT_NEAR(v.z(), 1.0, 1e-15);
}

TEST(Brdf, KindNamesRoundTrip) {
  for (auto k : {BrdfKind::lambertian, BrdfKind::phong_specular, BrdfKind::two_lobe}) {
    EXPECT_EQ(brdf_kind_from_string(to_string(k)), k);
  }
  EXPECT_THROW(brdf_kind_from_string("glossy"), std::invalid_argument);
}

TEST(Brdf, LambertianQuadratureMatchesClosedForm) {
  for (double rho : {0.2, 0.5, 0.9}) {
    BrdfModel m{0, BrdfKind::lambertian, rho, 0.0, 1.0, "L"};
    const double L0 = 2.0;
    const double r = integrate_radiance(m, [L0](const Direction&) { return L0; }, Direction::make(0.4, 1.0), {64, 128});
    EXPECT_NEAR(r / (rho * L0), 1.0, 1e-3) << rho;
  }
}

TEST(Brdf, NormalizedPhongLobeIntegratesToItsStrengthAtNormalView) {
  // with v on the normal, r.v = cos(theta_l) and the lobe integrates to ks
  for (double n : {1.0, 4.0, 12.0}) {
    BrdfModel m{0, BrdfKind::phong_specular, 0.1, 0.3, n, "P"};
    const double r = integrate_radiance(m, unit_light, Direction::make(0.0, 0.0), {256, 64});
    EXPECT_NEAR(r, 0.1 + 0.3, 1e-3) << n;
  }
}

TEST(Brdf, ReciprocityHoldsForEveryKind) {
  std::mt19937_64 rng(4);
  for (const auto& m : default_brdf_table(10)) {
    for (int i = 0; i < 200; ++i) {
      const auto l = random_direction(rng), v = random_direction(rng);
      EXPECT_NEAR(eval_brdf(m, l, v), eval_brdf(m, v, l), 1e-12) << m.name;
    }
  }
}

TEST(Brdf, NonNegativeAndEnergyConserving) {
  std::mt19937_64 rng(9);
  for (const auto& m : default_brdf_table(12)) {
    for (int i = 0; i < 8; ++i) {
      const auto v = random_direction(rng);
      EXPECT_GE(eval_brdf(m, random_direction(rng), v), 0.0);
      // directional albedo under unit light
      EXPECT_LE(integrate_radiance(m, unit_light, v, {64, 128}), 1.0 + 1e-3) << m.name;
    }
  }
}

TEST(Brdf, PeakBoundsEveryEvaluation) {
  std::mt19937_64 rng(10);
  for (const auto& m : default_brdf_table(10)) {
    for (int i = 0; i < 500; ++i) EXPECT_LE(eval_brdf(m, random_direction(rng), random_direction(rng)), m.peak() + 1e-12);
  }
}

TEST(Brdf, CoarseQuadratureGridRejected) {
  BrdfModel m;
  EXPECT_THROW(integrate_radiance(m, unit_light, Direction::make(0.1, 0.0), {8, 32}), std::invalid_argument);
  EXPECT_THROW(integrate_radiance(m, unit_light, Direction::make(0.1, 0.0), {16, 16}), std::invalid_argument);
}

TEST(BrdfTable, TenNamedClassesWithinWhitePoint) {
  const auto table = default_brdf_table(10);
  ASSERT_EQ(table.size(), 10u);
  std::set<std::string> names;
  std::set<BrdfKind> kinds;
  for (std::size_t c = 0; c < table.size(); ++c) {
    EXPECT_EQ(table[c].class_id, static_cast<int>(c));
    EXPECT_LE(white_point(table[c], 3.0, 0.1), 1.2 + 1e-9) << table[c].name;
    EXPECT_LE(table[c].albedo + table[c].specular, 1.0 + 1e-12);
    names.insert(table[c].name);
    kinds.insert(table[c].kind);
  }
  EXPECT_EQ(names.size(), 10u);
  EXPECT_EQ(kinds.size(), 3u);
  const auto big = default_brdf_table(14);
  EXPECT_EQ(big[12].kind, BrdfKind::lambertian);
  EXPECT_EQ(big[12].name, "Class 12");
}

TEST(BrdfModel, ValidateRejectsBadParameters) {
  EXPECT_THROW((BrdfModel{0, BrdfKind::lambertian, 1.2, 0, 1, "x"}).validate(), std::invalid_argument);
  EXPECT_THROW((BrdfModel{0, BrdfKind::phong_specular, 0.2, -0.1, 1, "x"}).validate(), std::invalid_argument);
  EXPECT_THROW((BrdfModel{0, BrdfKind::phong_specular, 0.2, 0.1, 0.5, "x"}).validate(), std::invalid_argument);
}

TEST(Brdf, RadianceIsLinearInIllumination) {
  const auto m = default_brdf_table(10)[3];
  const auto v = Direction::make(0.3, 2.0);
  EXPECT_EQ(integrate_radiance(m, [](const Direction&) { return 0.0; }, v), 0.0);
  const double one = integrate_radiance(m, [](const Direction& l) { return 1.0 + l.theta; }, v);
  const double two = integrate_radiance(m, [](const Direction& l) { return 2.0 * (1.0 + l.theta); }, v);
  EXPECT_NEAR(two / one, 2.0, 1e-9);
}

TEST(Brdf, MirrorDirectionOutshinesThirtyDegreesOff) {
  const auto l = Direction::make(0.4, 0.0);
  const auto mirror = Direction::make(0.4, std::numbers::pi);
  const auto off = Direction::make(0.4 + std::numbers::pi / 6, std::numbers::pi);
  for (double n : {8.0, 16.0, 64.0}) {
    const BrdfModel m{0, BrdfKind::phong_specular, 0.3, 0.2, n, "p"};
    EXPECT_GT(eval_brdf(m, l, mirror), eval_brdf(m, l, off)) << n;
  }
}

TEST(Brdf, SpecularSamplesVaryMoreThanEqualMeanLambertian) {
  std::mt19937_64 rng(31);
  const auto sun = Direction::make(0.5, 0.0);
  const BrdfModel phong{0, BrdfKind::phong_specular, 0.3, 0.3, 8.0, "p"};
  for (int set = 0; set < 50; ++set) {
    std::vector<double> spec;
    for (int j = 0; j < 8; ++j) spec.push_back(eval_brdf(phong, sun, random_direction(rng)));
    double mean = 0.0;
    for (double x : spec) mean += x / 8.0;
    const BrdfModel matte{1, BrdfKind::lambertian, mean * std::numbers::pi, 0.0, 1.0, "l"};
    double var_spec = 0.0, var_matte = 0.0;
    for (int j = 0; j < 8; ++j) {
      var_spec += (spec[static_cast<std::size_t>(j)] - mean) * (spec[static_cast<std::size_t>(j)] - mean);
      const double x = eval_brdf(matte, sun, random_direction(rng));
      var_matte += (x - mean) * (x - mean);
    }
    EXPECT_GT(var_spec, var_matte);
  }
}
