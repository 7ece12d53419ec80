#include "anglseg/config.hpp"
#include "anglseg/io.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace anglseg;
using namespace anglseg::testing;

TEST(Luminance, CodesRoundTripWithinHalfStep) {
  const double step = kPgmFullScale / 65534.0;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 1.5f);
  for (int i = 0; i < 1000; ++i) {
    const float x = u(rng);
    EXPECT_NEAR(decode_luminance(encode_luminance(x)), x, step / 2 + 1e-7);
  }
  EXPECT_EQ(encode_luminance(0.0f), 1);
  EXPECT_EQ(encode_luminance(1.5f), 65535);
  EXPECT_EQ(encode_luminance(7.0f), 65535);
  EXPECT_EQ(encode_luminance(-1.0f), 1);
  EXPECT_EQ(decode_luminance(0), 0.0f);
}

TEST(Pgm16, EncodeDecodeRoundTrip) {
  PgmImage img{3, 5, {}};
  for (std::uint16_t i = 0; i < 15; ++i) img.pixels.push_back(static_cast<std::uint16_t>(i * 4000 + 7));
  const auto bytes = encode_pgm16(img);
  EXPECT_EQ(bytes.substr(0, 3), "P5\n");
  const auto back = decode_pgm16(bytes, "mem.pgm");
  EXPECT_EQ(back.height, 3u);
  EXPECT_EQ(back.width, 5u);
  EXPECT_EQ(back.pixels, img.pixels);
  // big-endian samples
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 2]), (14 * 4000 + 7) >> 8);
}

TEST(Pgm16, MalformedInputNamesTheFile) {
  EXPECT_THROW(decode_pgm16("P2\n2 2\n65535\n", "x.pgm"), IoError);
  EXPECT_THROW(decode_pgm16("P5\n2 2\n255\n\x01\x02\x03\x04", "x.pgm"), IoError);
  EXPECT_THROW(decode_pgm16("P5\n2 2\n65535\n\x01\x02", "x.pgm"), IoError);
  try {
    read_pgm16("/nonexistent/dir/view_000.pgm");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_EQ(e.path().filename(), "view_000.pgm");
  }
}

TEST(Png, LabelAndRgbRoundTrip) {
  TempDir dir;
  LabelMap labels(4, 6);
  for (Eigen::Index i = 0; i < labels.size(); ++i) labels.data()[i] = static_cast<std::int32_t>(i % 5);
  const auto legend = ColorLegend::make({"a", "b", "c", "d", "e"});
  write_label_png(dir / "labels.png", labels, legend.colors);
  EXPECT_EQ(read_label_png(dir / "labels.png"), labels);

  std::vector<std::uint8_t> rgb(2 * 3 * 3);
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<std::uint8_t>(i * 13);
  write_rgb_png(dir / "rgb.png", 2, 3, rgb);
  std::size_t h = 0, w = 0;
  EXPECT_EQ(read_rgb_png(dir / "rgb.png", h, w), rgb);
  EXPECT_EQ(h, 2u);
  EXPECT_EQ(w, 3u);
  write_file(dir / "junk.png", "not a png");
  EXPECT_THROW(read_label_png(dir / "junk.png"), IoError);
}

TEST(ColorLegend, DistinctDeterministicColors) {
  std::vector<std::string> names;
  for (int i = 0; i < 30; ++i) names.push_back("class" + std::to_string(i));
  const auto a = ColorLegend::make(names), b = ColorLegend::make(names);
  EXPECT_EQ(a.colors, b.colors);
  EXPECT_EQ(std::set<Rgb>(a.colors.begin(), a.colors.end()).size(), 30u);
  EXPECT_NE(ColorLegend::make(names, 7).colors, a.colors);
  std::size_t h = 0, w = 0;
  const auto strip = legend_strip(a, 4, h, w);
  EXPECT_EQ(h, 4u);
  EXPECT_EQ(w, 120u);
  EXPECT_EQ(strip.size(), h * w * 3);
  const auto rgb = colorize({0, 29}, a);
  EXPECT_EQ(rgb[3], a.colors[29][0]);
}

TEST(KeyValues, CommentsDuplicatesAndMalformedLines) {
  const auto kv = parse_key_values("# header\na = 1\n\n b=two # trailing\n", "t.toml");
  EXPECT_EQ(kv.at("a"), "1");
  EXPECT_EQ(kv.at("b"), "two");
  EXPECT_THROW(parse_key_values("a = 1\na = 2\n", "t.toml"), IoError);
  EXPECT_THROW(parse_key_values("just words\n", "t.toml"), IoError);
}

TEST(SceneDirectory, RoundTripsThroughFiles) {
  auto cfg = tiny_config();
  cfg.dataset.generation.invalid_fraction = 0.1;
  const auto g = generate_scene(cfg, 0);
  TempDir dir;
  write_scene(dir / g.name, g.spec, g.stack, legend_for(cfg));
  for (const char* f : {"view_000.pgm", "view_003.pgm", "labels.png", "angles.csv", "scene.toml"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / g.name / f)) << f;
  }
  const auto rec = read_scene(dir / g.name);
  EXPECT_EQ(rec.name, g.name);
  EXPECT_EQ(rec.stack.labels, g.stack.labels);
  EXPECT_TRUE((rec.stack.valid == g.stack.valid).all());
  const double step = kPgmFullScale / 65534.0;
  EXPECT_LE((rec.stack.data - g.stack.data).abs().maxCoeff(), step / 2 + 1e-6);
  ASSERT_EQ(rec.spec.num_views(), 4u);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_EQ(rec.spec.view_angles[j].theta, g.spec.view_angles[j].theta);
    EXPECT_EQ(rec.spec.view_angles[j].phi, g.spec.view_angles[j].phi);
  }
  EXPECT_EQ(rec.spec.sun.theta, g.spec.sun.theta);
  EXPECT_EQ(rec.spec.noise_sigma, g.spec.noise_sigma);
  EXPECT_EQ(rec.spec.seed, g.spec.seed);
  EXPECT_EQ(rec.spec.num_classes, 3u);
}

TEST(SceneDirectory, MissingOrInconsistentFilesAreNamed) {
  const auto cfg = tiny_config();
  const auto g = generate_scene(cfg, 1);
  TempDir dir;
  const auto scene = dir / g.name;
  write_scene(scene, g.spec, g.stack, legend_for(cfg));
  std::filesystem::remove(scene / "view_002.pgm");
  try {
    read_scene(scene);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("view_002.pgm"), std::string::npos) << e.what();
  }
  write_pgm16(scene / "view_002.pgm", PgmImage{8, 8, std::vector<std::uint16_t>(64, 1)});
  try {
    read_scene(scene);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("view_002.pgm"), std::string::npos) << e.what();
  }
}

TEST(FeatureCache, RoundTripAndHashCheck) {
  const auto cfg = tiny_config();
  const auto g = generate_scene(cfg, 2);
  const auto feat = compute_features(g.stack, cfg);
  const auto bytes = encode_feature_cache(feat);
  EXPECT_EQ(bytes.substr(0, 4), "AHIS");
  const auto back = decode_feature_cache(bytes, "mem.ahis");
  EXPECT_EQ(back.per_superpixel, feat.per_superpixel);
  EXPECT_EQ(back.ids, feat.ids);
  EXPECT_EQ(back.dense_chw(), feat.dense_chw());

  TempDir dir;
  write_feature_cache(dir / "s.ahis", feat, cfg.feature_hash());
  EXPECT_EQ(read_feature_cache_hash(dir / "s.ahis"), cfg.feature_hash());
  EXPECT_EQ(read_feature_cache(dir / "s.ahis", cfg.feature_hash()).per_superpixel, feat.per_superpixel);
  auto changed = cfg;
  changed.slic.compactness += 1.0;
  EXPECT_NE(changed.feature_hash(), cfg.feature_hash());
  EXPECT_THROW(read_feature_cache(dir / "s.ahis", changed.feature_hash()), IoError);
  EXPECT_THROW(decode_feature_cache(bytes.substr(0, bytes.size() - 3), "cut.ahis"), IoError);
}

TEST(FeatureHash, CoversOnlyFeatureSettings) {
  const auto cfg = tiny_config();
  auto other = cfg;
  other.train.epochs = 99;
  other.network.use_stack2 = false;
  other.paths.output = "elsewhere";
  EXPECT_EQ(other.feature_hash(), cfg.feature_hash());
  other.histogram.q_high = 0.9;
  EXPECT_NE(other.feature_hash(), cfg.feature_hash());
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Config, SerializeParseRoundTrip) {
  auto cfg = tiny_config();
  cfg.train.base_lr = 0.1 + 0.2;
  cfg.dataset.generation.view_theta_max = 1.0 / 3.0;
  cfg.network.use_stack2 = false;
  cfg.paths.scenes = "data/scenes";
  const auto text = serialize_config(cfg);
  const auto back = parse_config(text);
  EXPECT_TRUE(back == cfg);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(parse_config("").feature_hash(), ExperimentConfig{}.feature_hash());
}

TEST(Config, UnknownKeysAndBadValuesAreErrors) {
  EXPECT_THROW(parse_config("train.learning_rate = 0.1\n"), ConfigError);
  EXPECT_THROW(parse_config("train.epochs = many\n"), ConfigError);
  EXPECT_THROW(parse_config("train.crop = 60\n").validate(), ConfigError);
  EXPECT_NO_THROW(parse_config("train.crop = 56\n").validate());
  EXPECT_THROW(parse_config("network.use_histogram = maybe\n"), ConfigError);
  ExperimentConfig cfg;
  apply_override(cfg, "train.epochs=3");
  EXPECT_EQ(cfg.train.epochs, 3u);
  EXPECT_THROW(apply_override(cfg, "nope.key=1"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "train.epochs"), ConfigError);
  const auto keys = config_keys();
  EXPECT_EQ(std::set<std::string>(keys.begin(), keys.end()).size(), keys.size());
}

TEST(Config, ResolvedNetworkTakesDatasetAndHistogramSizes) {
  auto cfg = tiny_config();
  const auto net = cfg.resolved_network();
  EXPECT_EQ(net.num_classes, 3u);
  EXPECT_EQ(net.histogram_bins, 16u);
  EXPECT_GT(cfg.resolved_slic(64, 64).num_superpixels, cfg.resolved_slic(32, 32).num_superpixels);
}
