#include "anglseg/cli.hpp"
#include "anglseg/config.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <map>
#include <regex>

using namespace anglseg;
using namespace anglseg::testing;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = 0;
  std::string out, err;
};

CliResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

std::size_t count_matching(const fs::path& dir, const std::regex& pattern) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += std::regex_match(e.path().filename().string(), pattern);
  return n;
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    auto cfg = tiny_config();
    cfg.paths.scenes = (*dir_ / "scenes").string();
    cfg.paths.features = (*dir_ / "features").string();
    cfg.paths.output = (*dir_ / "run").string();
    write_file(config_path(), serialize_config(cfg));
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string config_path() { return (*dir_ / "experiment.txt").string(); }
  static fs::path path(const std::string& name) { return *dir_ / name; }

  static TempDir* dir_;
};

TempDir* CliPipeline::dir_ = nullptr;

}  // namespace

TEST_F(CliPipeline, GenerateIsDeterministicAndCountsEveryPixel) {
  const auto a = run({"--config", config_path(), "generate"});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto first = tree_contents(path("scenes"));
  const auto b = run({"--config", config_path(), "generate", "--out", path("scenes_again").string()});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(first, tree_contents(path("scenes_again")));
  EXPECT_TRUE(first.count("legend.csv"));

  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(count_matching(path("scenes") / scene_name(i), std::regex(R"(view_\d{3}\.pgm)")), 4u);
  }
  std::istringstream lines(a.out);
  std::string line;
  std::size_t scenes = 0;
  const std::regex count_re(R"((\d+)=(\d+))");
  while (std::getline(lines, line)) {
    ++scenes;
    std::size_t sum = 0;
    for (std::sregex_iterator it(line.begin(), line.end(), count_re), end; it != end; ++it) sum += std::stoul((*it)[2]);
    EXPECT_NE(line.find("total=1024"), std::string::npos) << line;
    EXPECT_EQ(sum, 1024u) << line;
  }
  EXPECT_EQ(scenes, 4u);

  const auto other = run({"--config", config_path(), "--seed", "9", "generate", "--out", path("scenes_seed9").string()});
  ASSERT_EQ(other.code, 0);
  EXPECT_NE(tree_contents(path("scenes_seed9")), first);
}

TEST_F(CliPipeline, FeaturesTrainEvalSegment) {
  ASSERT_EQ(run({"--config", config_path(), "generate"}).code, 0);
  const auto f1 = run({"--config", config_path(), "features"});
  ASSERT_EQ(f1.code, 0) << f1.err;
  const auto cache = tree_contents(path("features"));
  EXPECT_EQ(cache.size(), 8u);
  EXPECT_TRUE(cache.count("scene_000.ahis.meta"));
  ASSERT_EQ(run({"--config", config_path(), "features"}).code, 0);
  EXPECT_EQ(tree_contents(path("features")), cache);

  const auto t = run({"--config", config_path(), "train", "--features", path("features").string()});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("epoch 2: loss"), std::string::npos);
  for (const char* f : {"model.angw", "config.txt", "epoch_001.angw", "epoch_002.angw", "loss_curve.csv"}) {
    EXPECT_TRUE(fs::exists(path("run") / f)) << f;
  }
  const auto ckpt = (path("run") / "model.angw").string();

  const auto all = run({"eval", "--checkpoint", ckpt, "--fuse"});
  ASSERT_EQ(all.code, 0) << all.err;
  EXPECT_TRUE(std::regex_search(all.out, std::regex(R"(pixAcc / mIoU: \d+\.\d / \d+\.\d)"))) << all.out;
  EXPECT_NE(all.out.find("view 3: "), std::string::npos);
  EXPECT_NE(all.out.find("fused: "), std::string::npos);
  const auto one = run({"eval", "--checkpoint", ckpt, "--views", "1"});
  ASSERT_EQ(one.code, 0) << one.err;
  EXPECT_EQ(one.out.find("view "), std::string::npos);

  const auto seg = run({"segment", "--checkpoint", ckpt, "--scenes", (path("scenes") / "scene_00[12]").string(), "--out",
                        path("seg").string(), "--panel"});
  ASSERT_EQ(seg.code, 0) << seg.err;
  EXPECT_EQ(count_matching(path("seg"), std::regex(R"(scene_00[12]_view_\d{3}\.png)")), 8u);
  EXPECT_EQ(count_matching(path("seg"), std::regex(R"(scene_00[12]_fused\.png)")), 2u);
  EXPECT_EQ(count_matching(path("seg"), std::regex(R"(scene_00[12]_panel\.png)")), 2u);
  EXPECT_TRUE(fs::exists(path("seg") / "legend.png"));
  std::size_t h = 0, w = 0;
  read_rgb_png(path("seg") / "scene_001_fused.png", h, w);
  EXPECT_EQ(h, 32u);
  EXPECT_EQ(w, 32u);

  const auto stale = run({"--config", config_path(), "--set", "slic.compactness=3", "train", "--features",
                          path("features").string(), "--out", path("run_stale").string()});
  EXPECT_EQ(stale.code, 1);
  EXPECT_NE(stale.err.find("error: io:"), std::string::npos) << stale.err;
  EXPECT_NE(stale.err.find("hash mismatch"), std::string::npos) << stale.err;
}

TEST(Cli, ErrorsAreOneLineWithExitCodes) {
  auto r = run({});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error: usage:", 0), 0u) << r.err;
  r = run({"frobnicate"});
  EXPECT_EQ(r.code, 2);
  r = run({"--config", "/nonexistent/cfg.txt", "generate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: io:", 0), 0u) << r.err;
  EXPECT_NE(r.err.find("cfg.txt"), std::string::npos);
  r = run({"--set", "train.speed=3", "generate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: config:", 0), 0u) << r.err;
  r = run({"eval", "--checkpoint", "/nonexistent/model.angw"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: checkpoint:", 0), 0u) << r.err;
  r = run({"ablate", "--seeds", "0"});
  EXPECT_EQ(r.code, 2);
  for (const auto& e : {r.err}) EXPECT_EQ(std::count(e.begin(), e.end(), '\n'), 1);
}

TEST(Cli, HelpListsSubcommands) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* cmd : {"generate", "features", "train", "eval", "ablate", "segment"}) {
    EXPECT_NE(r.out.find(cmd), std::string::npos) << cmd;
  }
}
