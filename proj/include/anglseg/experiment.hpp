#pragma once

#include "anglseg/config.hpp"
#include "anglseg/io.hpp"
#include "anglseg/train.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace anglseg {

/// splitmix64 of (base, index): independent per-scene seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);
std::string scene_name(std::size_t index);

std::vector<BrdfModel> brdf_table_for(const ExperimentConfig& config);
ColorLegend legend_for(const ExperimentConfig& config);

struct GeneratedScene {
  std::string name;
  SceneSpec spec;
  IntensityStack stack;
};

GeneratedScene generate_scene(const ExperimentConfig& config, std::size_t index);
std::vector<GeneratedScene> generate_dataset(const ExperimentConfig& config);

AngularHistogramFeature compute_features(const IntensityStack& stack, const ExperimentConfig& config);
SceneData prepare_scene(const std::string& name, const IntensityStack& stack, const ExperimentConfig& config);

/// Scene directories matching a glob whose wildcards (*, ?, [..]) sit in the
/// last path component; a plain directory without scene.toml expands to its
/// scene subdirectories. Sorted by path.
std::vector<std::filesystem::path> expand_scene_glob(const std::string& pattern);

/// Reads scene directories; features come from `<features_dir>/<name>.ahis`
/// when `features_dir` is set (hash-checked), else are computed.
std::vector<SceneData> load_scene_data(const std::vector<std::filesystem::path>& dirs, const ExperimentConfig& config,
                                       const std::filesystem::path& features_dir = {});

// ---- ablation ---------------------------------------------------------------

struct AblationVariant {
  std::string name;
  bool use_histogram = false;
  bool use_stack2 = false;
};

/// baseline, +histogram, +stacking.
std::vector<AblationVariant> ablation_variants();

struct AblationRun {
  std::uint64_t seed = 0;
  EvaluationReport report;
  double seconds = 0.0;
};

struct AblationRow {
  AblationVariant variant;
  std::vector<AblationRun> runs;

  double mean_pix_acc() const;
  double mean_miou() const;
  double mean_fused_pix_acc() const;
  double mean_fused_miou() const;
  /// Per seed: the best and the average per-view mIoU, averaged over seeds.
  double mean_best_view_miou() const;
  double mean_view_miou() const;
};

struct AblationTable {
  std::vector<AblationRow> rows;
};

using AblationProgress = std::function<void(const AblationVariant&, const AblationRun&)>;

/// Trains every variant for every seed on `train_scenes` and evaluates on
/// `test_scenes` (per view and fused). Data and seeds are shared across variants.
AblationTable run_ablation(const std::vector<SceneData>& train_scenes, const std::vector<SceneData>& test_scenes,
                           const ExperimentConfig& config, const std::vector<std::uint64_t>& seeds,
                           const AblationProgress& progress = {});

/// Aligned plain-text table: one row per variant, pixAcc / mIoU per seed,
/// the seed mean, and the fused mean.
std::string format_ablation_table(const AblationTable& table);
std::string ablation_csv(const AblationTable& table);

}  // namespace anglseg
