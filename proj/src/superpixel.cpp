#include "anglseg/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

namespace anglseg {

void SlicConfig::validate() const {
  if (num_superpixels < 1) throw std::invalid_argument("slic: num_superpixels must be >= 1");
  if (!(compactness > 0.0)) throw std::invalid_argument("slic: compactness must be > 0");
  if (min_region_frac < 0.0 || min_region_frac >= 1.0) throw std::invalid_argument("slic: min_region_frac outside [0, 1)");
}

std::size_t scaled_superpixel_count(std::size_t height, std::size_t width, std::size_t full_count,
                                    std::size_t reference_side) {
  const double ratio = static_cast<double>(height * width) / static_cast<double>(reference_side * reference_side);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(full_count) * ratio)));
}

namespace {

struct Center {
  double row, col, value;
};

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

/// 4-connected components of equal labels; returns component id per pixel.
std::vector<std::size_t> connected_components(const std::vector<std::int32_t>& labels, std::size_t h, std::size_t w,
                                              std::size_t& count) {
  constexpr auto unset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> comp(h * w, unset);
  std::vector<std::size_t> queue;
  count = 0;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (comp[start] != unset) continue;
    comp[start] = count;
    queue.assign(1, start);
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const auto p = queue[q];
      const auto r = p / w, c = p % w;
      const std::size_t nbrs[4] = {r > 0 ? p - w : unset, r + 1 < h ? p + w : unset, c > 0 ? p - 1 : unset,
                                   c + 1 < w ? p + 1 : unset};
      for (auto n : nbrs) {
        if (n != unset && comp[n] == unset && labels[n] == labels[p]) {
          comp[n] = count;
          queue.push_back(n);
        }
      }
    }
    ++count;
  }
  return comp;
}

SuperpixelMap build_map(const std::vector<std::size_t>& dense_ids, std::size_t count, const Image& image) {
  const auto h = static_cast<std::size_t>(image.rows()), w = static_cast<std::size_t>(image.cols());
  SuperpixelMap out;
  out.height = h;
  out.width = w;
  out.ids.resize(image.rows(), image.cols());
  out.members.assign(count, {});
  out.centroids = Eigen::Matrix<double, Eigen::Dynamic, 3>::Zero(static_cast<Eigen::Index>(count), 3);
  for (std::size_t p = 0; p < h * w; ++p) {
    const auto id = dense_ids[p];
    out.ids.data()[p] = static_cast<std::int32_t>(id);
    out.members[id].push_back(static_cast<std::uint32_t>(p));
    out.centroids(static_cast<Eigen::Index>(id), 0) += static_cast<double>(p / w);
    out.centroids(static_cast<Eigen::Index>(id), 1) += static_cast<double>(p % w);
    out.centroids(static_cast<Eigen::Index>(id), 2) += image.data()[p];
  }
  for (std::size_t i = 0; i < count; ++i) {
    out.centroids.row(static_cast<Eigen::Index>(i)) /= static_cast<double>(out.members[i].size());
  }
  return out;
}

/// Renumbers arbitrary ids densely in raster first-appearance order.
std::vector<std::size_t> densify(const std::vector<std::size_t>& ids, std::size_t& count) {
  constexpr auto unset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> remap(*std::max_element(ids.begin(), ids.end()) + 1, unset);
  std::vector<std::size_t> out(ids.size());
  count = 0;
  for (std::size_t p = 0; p < ids.size(); ++p) {
    if (remap[ids[p]] == unset) remap[ids[p]] = count++;
    out[p] = remap[ids[p]];
  }
  return out;
}

}  // namespace

SuperpixelMap superpixels_from_labels(const LabelMap& labels, const Image& image) {
  if (labels.rows() != image.rows() || labels.cols() != image.cols()) {
    throw std::invalid_argument("superpixels_from_labels: label map and image sizes differ");
  }
  if (labels.size() == 0) throw std::invalid_argument("superpixels_from_labels: empty map");
  if (labels.minCoeff() < 0) throw std::invalid_argument("superpixels_from_labels: negative id");
  std::vector<std::size_t> ids(static_cast<std::size_t>(labels.size()));
  for (Eigen::Index i = 0; i < labels.size(); ++i) ids[static_cast<std::size_t>(i)] = static_cast<std::size_t>(labels.data()[i]);
  std::size_t count = 0;
  auto dense = densify(ids, count);
  return build_map(dense, count, image);
}

SuperpixelMap slic_segment(const Image& image, const SlicConfig& config) {
  config.validate();
  const auto h = static_cast<std::size_t>(image.rows()), w = static_cast<std::size_t>(image.cols());
  if (h == 0 || w == 0) throw std::invalid_argument("slic: empty image");
  if (config.num_superpixels > h * w) {
    throw std::invalid_argument("slic: requested " + std::to_string(config.num_superpixels) +
                                " superpixels for only " + std::to_string(h * w) + " pixels");
  }
  const double step = std::sqrt(static_cast<double>(h * w) / static_cast<double>(config.num_superpixels));
  const auto ny = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(static_cast<double>(h) / step)), 1, h);
  const auto nx = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(static_cast<double>(w) / step)), 1, w);
  const double scale = config.intensity_scale;
  auto pixel = [&](std::size_t r, std::size_t c) { return static_cast<double>(image(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))) * scale; };

  std::vector<Center> centers;
  centers.reserve(ny * nx);
  for (std::size_t i = 0; i < ny; ++i) {
    for (std::size_t j = 0; j < nx; ++j) {
      const double r = (static_cast<double>(i) + 0.5) * static_cast<double>(h) / static_cast<double>(ny) - 0.5;
      const double c = (static_cast<double>(j) + 0.5) * static_cast<double>(w) / static_cast<double>(nx) - 0.5;
      const auto ri = static_cast<std::size_t>(std::clamp(std::lround(r), 0L, static_cast<long>(h) - 1));
      const auto ci = static_cast<std::size_t>(std::clamp(std::lround(c), 0L, static_cast<long>(w) - 1));
      centers.push_back({r, c, pixel(ri, ci)});
    }
  }

  std::vector<std::int32_t> labels(h * w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      labels[r * w + c] = static_cast<std::int32_t>((r * ny / h) * nx + (c * nx / w));

  const double spatial_weight = (config.compactness / step) * (config.compactness / step);
  std::vector<double> dist(h * w);
  std::vector<double> residuals;
  for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const auto& ctr = centers[k];
      const auto r0 = static_cast<std::size_t>(std::max(0.0, std::ceil(ctr.row - step)));
      const auto r1 = static_cast<std::size_t>(std::min(static_cast<double>(h) - 1, std::floor(ctr.row + step)));
      const auto c0 = static_cast<std::size_t>(std::max(0.0, std::ceil(ctr.col - step)));
      const auto c1 = static_cast<std::size_t>(std::min(static_cast<double>(w) - 1, std::floor(ctr.col + step)));
      for (std::size_t r = r0; r <= r1; ++r) {
        for (std::size_t c = c0; c <= c1; ++c) {
          const double dv = pixel(r, c) - ctr.value;
          const double dr = static_cast<double>(r) - ctr.row, dc = static_cast<double>(c) - ctr.col;
          const double d = dv * dv + (dr * dr + dc * dc) * spatial_weight;
          if (d < dist[r * w + c]) {
            dist[r * w + c] = d;
            labels[r * w + c] = static_cast<std::int32_t>(k);
          }
        }
      }
    }
    std::vector<Center> sums(centers.size(), {0.0, 0.0, 0.0});
    std::vector<std::size_t> counts(centers.size(), 0);
    for (std::size_t p = 0; p < h * w; ++p) {
      const auto k = static_cast<std::size_t>(labels[p]);
      sums[k].row += static_cast<double>(p / w);
      sums[k].col += static_cast<double>(p % w);
      sums[k].value += pixel(p / w, p % w);
      ++counts[k];
    }
    double moved = 0.0;
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (counts[k] == 0) continue;
      const double n = static_cast<double>(counts[k]);
      const Center next{sums[k].row / n, sums[k].col / n, sums[k].value / n};
      moved += std::hypot(next.row - centers[k].row, next.col - centers[k].col);
      centers[k] = next;
    }
    residuals.push_back(moved);
  }

  // connectivity enforcement
  std::size_t ncomp = 0;
  auto comp = connected_components(labels, h, w, ncomp);
  std::vector<std::size_t> size(ncomp, 0);
  std::vector<double> total(ncomp, 0.0);
  std::vector<std::set<std::size_t>> adjacent(ncomp);
  for (std::size_t p = 0; p < h * w; ++p) {
    ++size[comp[p]];
    total[comp[p]] += pixel(p / w, p % w);
    const auto c = p % w;
    if (c + 1 < w && comp[p + 1] != comp[p]) {
      adjacent[comp[p]].insert(comp[p + 1]);
      adjacent[comp[p + 1]].insert(comp[p]);
    }
    if (p + w < h * w && comp[p + w] != comp[p]) {
      adjacent[comp[p]].insert(comp[p + w]);
      adjacent[comp[p + w]].insert(comp[p]);
    }
  }
  const double min_size = config.min_region_frac * static_cast<double>(h * w) / static_cast<double>(centers.size());
  std::vector<std::size_t> parent(ncomp);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<std::size_t> order(ncomp);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return size[a] < size[b]; });
  bool merged = true;
  while (merged) {
    merged = false;
    for (auto i : order) {
      if (find_root(parent, i) != i) continue;
      if (static_cast<double>(size[i]) >= min_size || adjacent[i].empty()) continue;
      // absorb into the adjacent region with the closest mean intensity
      const double mean = total[i] / static_cast<double>(size[i]);
      std::size_t best = i;
      double best_d = std::numeric_limits<double>::infinity();
      for (auto n : adjacent[i]) {
        const double d = std::abs(total[n] / static_cast<double>(size[n]) - mean);
        if (d < best_d || (d == best_d && (size[n] > size[best] || (size[n] == size[best] && n < best)))) {
          best_d = d;
          best = n;
        }
      }
      parent[i] = best;
      size[best] += size[i];
      total[best] += total[i];
      adjacent[best].erase(i);
      for (auto n : adjacent[i]) {
        if (n == best) continue;
        adjacent[n].erase(i);
        adjacent[n].insert(best);
        adjacent[best].insert(n);
      }
      adjacent[i].clear();
      merged = true;
    }
  }
  for (auto& c : comp) c = find_root(parent, c);
  std::size_t count = 0;
  auto dense = densify(comp, count);
  auto out = build_map(dense, count, image);
  out.residuals = std::move(residuals);
  return out;
}

std::vector<std::vector<float>> pool_over_superpixels(const IntensityStack& stack, const SuperpixelMap& map) {
  if (stack.height != map.height || stack.width != map.width) {
    throw std::invalid_argument("pool_over_superpixels: stack and superpixel map sizes differ");
  }
  std::vector<std::vector<float>> out(map.size());
  const auto v = static_cast<Eigen::Index>(stack.num_views());
  for (std::size_t s = 0; s < map.size(); ++s) {
    auto& samples = out[s];
    for (auto p : map.members[s]) {
      const auto col = static_cast<Eigen::Index>(p);
      for (Eigen::Index j = 0; j < v; ++j) {
        if (stack.valid(j, col)) samples.push_back(stack.data(j, col));
      }
    }
  }
  return out;
}

}  // namespace anglseg
