#pragma once

#include "anglseg/histogram.hpp"
#include "anglseg/model.hpp"
#include "anglseg/scene.hpp"
#include "anglseg/superpixel.hpp"
#include "anglseg/train.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace anglseg {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  SceneGenOptions generation;
  std::size_t num_scenes = 40;
  std::size_t test_scenes = 10;  // the last `test_scenes` scenes form the test split
};

struct PathConfig {
  std::string scenes = "scenes";
  std::string features = "features";
  std::string output = "runs";
};

/// Every experiment knob, read from "section.key = value" text.
/// slic.num_superpixels = 0 scales the count to the image size.
struct ExperimentConfig {
  DatasetConfig dataset;
  SlicConfig slic{0};
  HistogramConfig histogram;
  NetworkConfig network;
  TrainConfig train;
  PathConfig paths;
  std::uint64_t seed = 1;

  /// Network config with class and bin counts taken from the dataset and
  /// histogram sections.
  NetworkConfig resolved_network() const;
  /// SLIC config with the superpixel count resolved for an H x W image.
  SlicConfig resolved_slic(std::size_t height, std::size_t width) const;
  /// Hash of every setting that affects feature extraction.
  std::uint64_t feature_hash() const;

  void validate() const;
};

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& config);

/// Applies one "section.key=value" override; unknown keys throw ConfigError.
void apply_override(ExperimentConfig& config, const std::string& assignment);

/// All recognised keys, in serialization order.
std::vector<std::string> config_keys();

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace anglseg
