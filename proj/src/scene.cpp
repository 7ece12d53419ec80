#include "anglseg/scene.hpp"

#include "anglseg/parallel.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace anglseg {

void SceneSpec::validate() const {
  if (height == 0 || width == 0) throw std::invalid_argument("scene: empty image");
  if (view_angles.empty()) throw std::invalid_argument("scene: at least one view required");
  if (static_cast<std::size_t>(material_map.rows()) != height || static_cast<std::size_t>(material_map.cols()) != width) {
    throw std::invalid_argument("scene: material map does not match height/width");
  }
  if (material_map.size() && (material_map.minCoeff() < 0 || static_cast<std::size_t>(material_map.maxCoeff()) >= num_classes)) {
    throw std::invalid_argument("scene: material map class id outside [0, num_classes)");
  }
  if (cell_map.size()) {
    if (cell_map.rows() != material_map.rows() || cell_map.cols() != material_map.cols()) {
      throw std::invalid_argument("scene: cell map does not match height/width");
    }
    if (cell_map.minCoeff() < 0 || static_cast<std::size_t>(cell_map.maxCoeff()) >= cell_albedo_scale.size()) {
      throw std::invalid_argument("scene: cell map references a cell without an albedo scale");
    }
  }
  if (light_intensity <= 0.0) throw std::invalid_argument("scene: light intensity must be positive");
  if (noise_sigma < 0.0) throw std::invalid_argument("scene: negative noise sigma");
  if (invalid_fraction < 0.0 || invalid_fraction >= 1.0) throw std::invalid_argument("scene: invalid fraction outside [0, 1)");
}

Image IntensityStack::reference_image() const {
  Image out(height, width);
  for (std::size_t p = 0; p < num_pixels(); ++p) {
    const auto col = static_cast<Eigen::Index>(p);
    double sum = 0.0;
    int n = 0;
    for (Eigen::Index j = 0; j < data.rows(); ++j) {
      if (valid(j, col)) {
        sum += data(j, col);
        ++n;
      }
    }
    out(static_cast<Eigen::Index>(p / width), static_cast<Eigen::Index>(p % width)) = n ? static_cast<float>(sum / n) : 0.0f;
  }
  return out;
}

Image IntensityStack::view_image(std::size_t j) const {
  Image out(height, width);
  const Image* ref = nullptr;
  Image reference;
  if ((!valid.row(static_cast<Eigen::Index>(j))).any()) {
    reference = reference_image();
    ref = &reference;
  }
  for (std::size_t p = 0; p < num_pixels(); ++p) {
    const auto r = static_cast<Eigen::Index>(p / width), c = static_cast<Eigen::Index>(p % width);
    const auto col = static_cast<Eigen::Index>(p);
    out(r, c) = valid(static_cast<Eigen::Index>(j), col) ? data(static_cast<Eigen::Index>(j), col) : (*ref)(r, c);
  }
  return out;
}

void IntensityStack::recount_valid() { valid_count = valid.cast<int>().colwise().sum().transpose(); }

void voronoi_layout(std::size_t height, std::size_t width, std::size_t num_cells, std::size_t num_classes,
                    std::uint64_t seed, LabelMap& cell_map, LabelMap& material_map) {
  if (num_cells == 0 || num_classes == 0) throw std::invalid_argument("voronoi_layout: need cells and classes");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ur(0.0, static_cast<double>(height));
  std::uniform_real_distribution<double> uc(0.0, static_cast<double>(width));
  std::uniform_int_distribution<int> cls(0, static_cast<int>(num_classes) - 1);
  std::vector<double> sr(num_cells), sc(num_cells);
  std::vector<int> sclass(num_cells);
  for (std::size_t i = 0; i < num_cells; ++i) {
    sr[i] = ur(rng);
    sc[i] = uc(rng);
    sclass[i] = cls(rng);
  }
  cell_map.resize(static_cast<Eigen::Index>(height), static_cast<Eigen::Index>(width));
  material_map.resize(static_cast<Eigen::Index>(height), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t i = 0; i < num_cells; ++i) {
        const double dr = static_cast<double>(r) + 0.5 - sr[i], dc = static_cast<double>(c) + 0.5 - sc[i];
        const double d = dr * dr + dc * dc;
        if (d < best) {
          best = d;
          arg = i;
        }
      }
      cell_map(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = static_cast<std::int32_t>(arg);
      material_map(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = sclass[arg];
    }
  }
}

SceneSpec random_scene_spec(const SceneGenOptions& o, std::uint64_t seed) {
  if (o.min_cells == 0 || o.max_cells < o.min_cells) throw std::invalid_argument("scene options: bad cell range");
  std::mt19937_64 rng(seed);
  SceneSpec spec;
  spec.height = o.height;
  spec.width = o.width;
  spec.num_classes = o.num_classes;
  spec.light_intensity = o.light_intensity;
  spec.ambient = o.ambient;
  spec.noise_sigma = o.noise_sigma;
  spec.invalid_fraction = o.invalid_fraction;
  spec.seed = seed;

  std::uniform_int_distribution<std::size_t> ncells(o.min_cells, o.max_cells);
  const auto cells = ncells(rng);
  voronoi_layout(o.height, o.width, cells, o.num_classes, rng(), spec.cell_map, spec.material_map);
  std::uniform_real_distribution<double> jitter(1.0 - o.albedo_jitter, 1.0 + o.albedo_jitter);
  spec.cell_albedo_scale.resize(cells);
  for (auto& s : spec.cell_albedo_scale) s = jitter(rng);

  std::uniform_real_distribution<double> azimuth(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> sun_theta(o.sun_theta_min, o.sun_theta_max);
  spec.sun = Direction::make(sun_theta(rng), azimuth(rng));
  std::uniform_real_distribution<double> view_theta(0.0, o.view_theta_max);
  for (std::size_t j = 0; j < o.num_views; ++j) {
    const double t = view_theta(rng);
    spec.view_angles.push_back(Direction::make(t, azimuth(rng)));
  }
  return spec;
}

std::vector<Direction> spread_views(std::size_t count, double theta) {
  std::vector<Direction> out;
  for (std::size_t j = 0; j < count; ++j) {
    out.push_back(Direction::make(theta, 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(count)));
  }
  return out;
}

IntensityStack render_stack(const SceneSpec& spec, const std::vector<BrdfModel>& brdf_table) {
  spec.validate();
  const auto h = spec.height, w = spec.width, v = spec.num_views();
  const auto npix = h * w;

  // class id -> table entry
  std::vector<const BrdfModel*> by_class(spec.num_classes, nullptr);
  for (const auto& m : brdf_table) {
    if (m.class_id >= 0 && static_cast<std::size_t>(m.class_id) < spec.num_classes) by_class[static_cast<std::size_t>(m.class_id)] = &m;
  }
  for (Eigen::Index i = 0; i < spec.material_map.size(); ++i) {
    const auto c = spec.material_map.data()[i];
    if (!by_class[static_cast<std::size_t>(c)]) {
      throw std::invalid_argument("render_stack: no BRDF entry for class id " + std::to_string(c));
    }
  }

  // a "cell" is a (class, albedo scale) pair; without a cell map every class is one cell
  const bool has_cells = spec.cell_map.size() != 0;
  const auto ncells = has_cells ? spec.cell_albedo_scale.size() : spec.num_classes;
  std::vector<int> cell_class(ncells, -1);
  for (std::size_t p = 0; p < npix; ++p) {
    const auto cell = has_cells ? static_cast<std::size_t>(spec.cell_map.data()[p]) : static_cast<std::size_t>(spec.material_map.data()[p]);
    cell_class[cell] = spec.material_map.data()[p];
  }

  // per-(cell, view) noiseless radiance
  Eigen::ArrayXXd radiance = Eigen::ArrayXXd::Zero(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(ncells));
  const double sun_cos = std::cos(spec.sun.theta);
  parallel_for(0, ncells, [&](std::size_t cell) {
    if (cell_class[cell] < 0) return;
    BrdfModel m = *by_class[static_cast<std::size_t>(cell_class[cell])];
    if (has_cells) m.albedo = std::clamp(m.albedo * spec.cell_albedo_scale[cell], 0.0, 1.0);
    for (std::size_t j = 0; j < v; ++j) {
      const auto& view = spec.view_angles[j];
      const double direct = spec.light_intensity * eval_brdf(m, spec.sun, view) * sun_cos;
      const double ambient =
          spec.ambient == 0.0 ? 0.0 : spec.ambient * integrate_radiance(m, [](const Direction&) { return 1.0; }, view, {32, 64});
      radiance(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(cell)) = direct + ambient;
    }
  });

  IntensityStack out;
  out.height = h;
  out.width = w;
  out.labels = spec.material_map;
  out.data.resize(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(npix));
  out.valid.setConstant(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(npix), true);

  // noise and validity draws are sequential so the result is independent of worker count
  std::mt19937_64 rng(spec.seed ^ 0x9E3779B97F4A7C15ull);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t p = 0; p < npix; ++p) {
    const auto cell = has_cells ? static_cast<std::size_t>(spec.cell_map.data()[p]) : static_cast<std::size_t>(spec.material_map.data()[p]);
    for (std::size_t j = 0; j < v; ++j) {
      double value = radiance(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(cell));
      if (spec.noise_sigma > 0.0) value += spec.noise_sigma * noise(rng);
      out.data(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(p)) = static_cast<float>(std::max(value, 0.0));
    }
  }
  if (spec.invalid_fraction > 0.0) {
    for (std::size_t p = 0; p < npix; ++p) {
      for (std::size_t j = 0; j < v; ++j) {
        if (u01(rng) < spec.invalid_fraction) {
          out.valid(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(p)) = false;
          out.data(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(p)) = 0.0f;
        }
      }
    }
  }
  out.recount_valid();
  return out;
}

}  // namespace anglseg
