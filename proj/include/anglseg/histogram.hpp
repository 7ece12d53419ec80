#pragma once

#include "anglseg/scene.hpp"
#include "anglseg/superpixel.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace anglseg {

using HistogramMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct HistogramConfig {
  std::size_t coarse_bins = 16;
  double coarse_lo = 0.0;
  double coarse_hi = 1.2;
  std::size_t fine_bins = 16;
  double q_low = 0.05;
  double q_high = 0.95;

  std::size_t total_bins() const { return coarse_bins + fine_bins; }
  void validate() const;
};

struct ValueRange {
  double lo = 0.0;
  double hi = 1.0;
};

inline constexpr double kRangeEpsilon = 1e-3;

/// Empirical (q_low, q_high) quantiles (linear interpolation between order
/// statistics). A range narrower than eps is widened to (mid - eps, mid + eps).
ValueRange concentrated_range(std::span<const float> samples, double q_low, double q_high, double eps = kRangeEpsilon);

/// Concentrated range of every valid sample of a stack.
ValueRange concentrated_range(const IntensityStack& stack, const HistogramConfig& config);

/// Unnormalized counts; samples outside [lo, hi) clamp to the edge bins.
Eigen::VectorXd bin_counts(std::span<const float> samples, std::size_t bins, ValueRange range);

/// Per-superpixel [coarse | fine] histogram, each block L1-normalized.
struct AngularHistogramFeature {
  HistogramMatrix per_superpixel;          // S x b
  std::vector<std::uint32_t> coverage;     // valid samples per superpixel
  std::vector<bool> empty;                 // coverage == 0 -> uniform blocks
  LabelMap ids;                            // H x W superpixel ids
  ValueRange fine_range;

  std::size_t num_superpixels() const { return static_cast<std::size_t>(per_superpixel.rows()); }
  std::size_t bins() const { return static_cast<std::size_t>(per_superpixel.cols()); }
  std::size_t height() const { return static_cast<std::size_t>(ids.rows()); }
  std::size_t width() const { return static_cast<std::size_t>(ids.cols()); }

  /// Histogram of pixel (r, c): the row of its superpixel.
  Eigen::RowVectorXf dense_at(std::size_t r, std::size_t c) const {
    return per_superpixel.row(ids(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
  }
  /// Dense b x H x W map (channel-major, ready for the network).
  std::vector<float> dense_chw() const;
};

/// One normalized [coarse | fine] row for a single sample list.
Eigen::RowVectorXf histogram_row(std::span<const float> samples, const HistogramConfig& config, ValueRange fine_range,
                                 bool* empty = nullptr);

AngularHistogramFeature build_histograms(const std::vector<std::vector<float>>& pooled, const HistogramConfig& config,
                                         ValueRange fine_range, const LabelMap& ids);

/// Reference image -> SLIC -> pooling -> scene-wide range -> histograms.
AngularHistogramFeature extract_features(const IntensityStack& stack, const SlicConfig& slic, const HistogramConfig& config);

/// Argmin over candidates of the L1 distance; ties resolve to the lowest row.
std::vector<std::int32_t> nearest_candidate_classify(const HistogramMatrix& features, const HistogramMatrix& candidates);

/// One reference histogram per class, binned from a uniform patch of that
/// class rendered under the scene's views and sun with a held-out noise seed.
HistogramMatrix reference_histograms(const SceneSpec& scene, const std::vector<BrdfModel>& brdf_table,
                                     const HistogramConfig& config, ValueRange fine_range, std::uint64_t seed,
                                     std::size_t patch_side = 8);

}  // namespace anglseg
