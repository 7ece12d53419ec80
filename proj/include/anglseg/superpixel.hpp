#pragma once

#include "anglseg/scene.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace anglseg {

struct SlicConfig {
  std::size_t num_superpixels = 2000;
  double compactness = 10.0;
  std::size_t max_iters = 10;
  double min_region_frac = 0.25;
  double intensity_scale = 255.0;  // image values are multiplied by this before distances

  void validate() const;
};

/// round(full_count * H*W / reference_side^2), at least 1.
std::size_t scaled_superpixel_count(std::size_t height, std::size_t width, std::size_t full_count = 2000,
                                    std::size_t reference_side = 500);

struct SuperpixelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  LabelMap ids;                                        // H x W, values in [0, size())
  std::vector<std::vector<std::uint32_t>> members;     // row-major pixel indices per superpixel
  Eigen::Matrix<double, Eigen::Dynamic, 3> centroids;  // (row, col, mean intensity) per superpixel
  std::vector<double> residuals;                       // k-means center movement per iteration

  std::size_t size() const { return members.size(); }
};

/// SLIC on a single-channel image: grid-initialized k-means in
/// (intensity, row/S, col/S) with 2S x 2S search windows, then
/// connectivity enforcement that absorbs small fragments.
SuperpixelMap slic_segment(const Image& image, const SlicConfig& config);

/// Builds ids/members/centroids from an arbitrary label image (labels are
/// renumbered densely in first-appearance order).
SuperpixelMap superpixels_from_labels(const LabelMap& labels, const Image& image);

/// Multiset of valid samples over each superpixel's pixels and all views.
std::vector<std::vector<float>> pool_over_superpixels(const IntensityStack& stack, const SuperpixelMap& map);

}  // namespace anglseg
