#pragma once

#include "anglseg/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace anglseg::testing {

/// Small but complete experiment: 32x32 scenes, 4 views, 3 classes.
inline ExperimentConfig tiny_config() {
  ExperimentConfig c;
  auto& g = c.dataset.generation;
  g.height = 32;
  g.width = 32;
  g.num_views = 4;
  g.num_classes = 3;
  g.min_cells = 4;
  g.max_cells = 10;
  c.dataset.num_scenes = 4;
  c.dataset.test_scenes = 1;
  c.histogram.coarse_bins = 8;
  c.histogram.fine_bins = 8;
  c.network.backbone_widths = {8, 16, 16, 16};
  c.network.pah_channels = 8;
  c.network.stack1_channels = 16;
  c.network.stack2_channels = 8;
  c.train.epochs = 2;
  c.train.batch_size = 4;
  c.train.crop = 32;
  c.seed = 5;
  return c;
}

inline std::vector<SceneData> tiny_scenes(const ExperimentConfig& config) {
  std::vector<SceneData> out;
  for (auto& g : generate_dataset(config)) out.push_back(prepare_scene(g.name, g.stack, config));
  return out;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("anglseg_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace anglseg::testing
