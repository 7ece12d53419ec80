#pragma once

#include "anglseg/brdf.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace anglseg {

using LabelMap = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Image = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SceneSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t num_classes = 10;
  LabelMap material_map;                 // class id per pixel
  LabelMap cell_map;                     // layout cell per pixel (may be empty)
  std::vector<double> cell_albedo_scale; // per cell multiplier on the class albedo
  std::vector<Direction> view_angles;
  Direction sun;
  double light_intensity = 3.0;
  double ambient = 0.1;
  double noise_sigma = 0.0;
  double invalid_fraction = 0.0;
  std::uint64_t seed = 0;

  std::size_t num_views() const { return view_angles.size(); }
  void validate() const;
};

/// Aligned per-pixel luminance samples. Column p of `data`/`valid` holds the
/// V angular samples of pixel p (row-major pixel index r*W + c). Invalid
/// samples are stored as 0 and must be ignored by every statistic.
struct IntensityStack {
  std::size_t height = 0;
  std::size_t width = 0;
  Eigen::ArrayXXf data;                                      // V x (H*W)
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> valid;  // V x (H*W)
  LabelMap labels;                                           // H x W
  Eigen::ArrayXi valid_count;                                // per pixel

  std::size_t num_views() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t num_pixels() const { return height * width; }

  /// Per-pixel mean over valid views (0 where no view is valid).
  Image reference_image() const;
  /// View j with invalid samples replaced by the reference image.
  Image view_image(std::size_t j) const;
  void recount_valid();
};

struct SceneGenOptions {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t num_views = 8;
  std::size_t num_classes = 10;
  std::size_t min_cells = 20;
  std::size_t max_cells = 60;
  double view_theta_max = 0.70;              // radians
  double sun_theta_min = 0.35;
  double sun_theta_max = 0.70;
  double light_intensity = 3.0;
  double ambient = 0.1;
  double noise_sigma = 0.01;
  double invalid_fraction = 0.0;
  double albedo_jitter = 0.0;                // cell albedo scale uniform in [1-j, 1+j]
};

/// Seeded Voronoi layout: uniform seed points, each cell a uniform class.
void voronoi_layout(std::size_t height, std::size_t width, std::size_t num_cells, std::size_t num_classes,
                    std::uint64_t seed, LabelMap& cell_map, LabelMap& material_map);

/// Random scene: Voronoi layout with [min_cells, max_cells] cells, random
/// view and sun directions, all drawn from `seed`.
SceneSpec random_scene_spec(const SceneGenOptions& options, std::uint64_t seed);

/// V views evenly spaced in azimuth at a common polar angle.
std::vector<Direction> spread_views(std::size_t count, double theta);

/// data[j,p] = I * f(sun, v_j) * cos(sun.theta) + ambient * R(v_j) + N(0, sigma),
/// clamped at 0, where R is the hemispherical reflectance under unit
/// uniform light. A fraction of samples is marked invalid.
IntensityStack render_stack(const SceneSpec& spec, const std::vector<BrdfModel>& brdf_table);

}  // namespace anglseg
