#pragma once

#include "anglseg/histogram.hpp"
#include "anglseg/metrics.hpp"
#include "anglseg/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace anglseg {

struct TrainConfig {
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double poly_power = 0.9;
  double alpha = 0.2;
  std::size_t crop = 64;
  bool flip_horizontal = true;
  bool flip_vertical = true;
  std::uint64_t seed = 1;

  void validate() const;
};

/// One scene ready for the network: per-view luminance, the dense histogram
/// map shared by all views, and ground truth.
struct SceneData {
  std::string name;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Image> views;
  std::size_t bins = 0;
  std::vector<float> histogram;      // bins x H x W
  std::vector<std::int32_t> labels;  // H*W

  std::size_t num_views() const { return views.size(); }
};

SceneData make_scene_data(std::string name, const IntensityStack& stack, const AngularHistogramFeature& feature);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochStats {
  std::size_t epoch = 0;        // 1-based
  std::size_t iterations = 0;   // cumulative
  double mean_loss = 0.0;
  double final_lr = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  std::vector<double> iteration_loss;
};

struct TrainOutput {
  std::filesystem::path directory;  // empty: no files written
  std::function<void(const EpochStats&)> on_epoch;
};

/// Momentum SGD with poly decay over (scene, view) samples: random crops and
/// flips, deterministic under `config.seed`. Writes epoch_###.angw and
/// loss_curve.csv into `output.directory` when set.
TrainResult train(AngLNet& model, const std::vector<SceneData>& scenes, const TrainConfig& config,
                  const TrainOutput& output = {});

/// Fine logits of one view (K x H*W), computed in eval mode without a graph.
Eigen::ArrayXXf predict_logits(AngLNet& model, const SceneData& scene, std::size_t view);
Eigen::ArrayXXf softmax_columns(const Eigen::ArrayXXf& logits);
std::vector<std::int32_t> argmax_columns(const Eigen::ArrayXXf& scores);

struct EvaluationReport {
  Metrics overall;                 // every (scene, view) prediction
  std::vector<Metrics> per_view;   // by view index, when requested
  std::optional<Metrics> fused;    // multi-view vote, when requested
};

EvaluationReport evaluate(AngLNet& model, const std::vector<SceneData>& scenes, bool per_view, bool fuse);

}  // namespace anglseg
