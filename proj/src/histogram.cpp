#include "anglseg/histogram.hpp"

#include "anglseg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace anglseg {

void HistogramConfig::validate() const {
  if (coarse_bins + fine_bins == 0) throw std::invalid_argument("histogram: total bin count must be > 0");
  if (!(coarse_hi > coarse_lo)) throw std::invalid_argument("histogram: coarse range must satisfy lo < hi");
  if (!(q_low >= 0.0 && q_low < q_high && q_high <= 1.0)) {
    throw std::invalid_argument("histogram: quantiles must satisfy 0 <= q_low < q_high <= 1");
  }
}

ValueRange concentrated_range(std::span<const float> samples, double q_low, double q_high, double eps) {
  if (samples.empty()) throw std::invalid_argument("concentrated_range: no valid samples");
  std::vector<float> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const auto j = std::min(i + 1, sorted.size() - 1);
    return static_cast<double>(sorted[i]) + (pos - static_cast<double>(i)) * (static_cast<double>(sorted[j]) - sorted[i]);
  };
  ValueRange r{quantile(q_low), quantile(q_high)};
  if (r.hi - r.lo < eps) {
    const double mid = 0.5 * (r.lo + r.hi);
    r = {mid - eps, mid + eps};
  }
  return r;
}

ValueRange concentrated_range(const IntensityStack& stack, const HistogramConfig& config) {
  std::vector<float> all;
  all.reserve(static_cast<std::size_t>(stack.data.size()));
  for (Eigen::Index p = 0; p < stack.data.cols(); ++p)
    for (Eigen::Index j = 0; j < stack.data.rows(); ++j)
      if (stack.valid(j, p)) all.push_back(stack.data(j, p));
  return concentrated_range(all, config.q_low, config.q_high);
}

Eigen::VectorXd bin_counts(std::span<const float> samples, std::size_t bins, ValueRange range) {
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(bins));
  if (bins == 0) return counts;
  const double width = range.hi - range.lo;
  const auto last = static_cast<long>(bins) - 1;
  for (float s : samples) {
    const double t = (static_cast<double>(s) - range.lo) / width * static_cast<double>(bins);
    const long idx = std::clamp(static_cast<long>(std::floor(t)), 0L, last);
    counts[idx] += 1.0;
  }
  return counts;
}

Eigen::RowVectorXf histogram_row(std::span<const float> samples, const HistogramConfig& config, ValueRange fine_range,
                                 bool* empty) {
  Eigen::RowVectorXf row(static_cast<Eigen::Index>(config.total_bins()));
  const auto cb = static_cast<Eigen::Index>(config.coarse_bins), fb = static_cast<Eigen::Index>(config.fine_bins);
  if (samples.empty()) {
    if (cb) row.head(cb).setConstant(1.0f / static_cast<float>(cb));
    if (fb) row.tail(fb).setConstant(1.0f / static_cast<float>(fb));
    if (empty) *empty = true;
    return row;
  }
  const double n = static_cast<double>(samples.size());
  if (cb) row.head(cb) = (bin_counts(samples, config.coarse_bins, {config.coarse_lo, config.coarse_hi}) / n).cast<float>().transpose();
  if (fb) row.tail(fb) = (bin_counts(samples, config.fine_bins, fine_range) / n).cast<float>().transpose();
  if (empty) *empty = false;
  return row;
}

std::vector<float> AngularHistogramFeature::dense_chw() const {
  const auto b = bins(), hw = height() * width();
  std::vector<float> out(b * hw);
  for (std::size_t p = 0; p < hw; ++p) {
    const auto row = static_cast<Eigen::Index>(ids.data()[p]);
    for (std::size_t k = 0; k < b; ++k) out[k * hw + p] = per_superpixel(row, static_cast<Eigen::Index>(k));
  }
  return out;
}

AngularHistogramFeature build_histograms(const std::vector<std::vector<float>>& pooled, const HistogramConfig& config,
                                         ValueRange fine_range, const LabelMap& ids) {
  config.validate();
  if (!(fine_range.hi > fine_range.lo)) throw std::invalid_argument("build_histograms: empty fine range");
  if (ids.size() && static_cast<std::size_t>(ids.maxCoeff()) >= pooled.size()) {
    throw std::invalid_argument("build_histograms: superpixel id without a sample list");
  }
  AngularHistogramFeature out;
  out.per_superpixel.resize(static_cast<Eigen::Index>(pooled.size()), static_cast<Eigen::Index>(config.total_bins()));
  out.coverage.resize(pooled.size());
  out.empty.resize(pooled.size());
  out.ids = ids;
  out.fine_range = fine_range;
  std::vector<char> empty(pooled.size(), 0);
  parallel_for(0, pooled.size(), [&](std::size_t s) {
    bool e = false;
    out.per_superpixel.row(static_cast<Eigen::Index>(s)) = histogram_row(pooled[s], config, fine_range, &e);
    out.coverage[s] = static_cast<std::uint32_t>(pooled[s].size());
    empty[s] = e;
  });
  for (std::size_t s = 0; s < pooled.size(); ++s) out.empty[s] = empty[s] != 0;
  return out;
}

AngularHistogramFeature extract_features(const IntensityStack& stack, const SlicConfig& slic, const HistogramConfig& config) {
  const auto map = slic_segment(stack.reference_image(), slic);
  const auto pooled = pool_over_superpixels(stack, map);
  return build_histograms(pooled, config, concentrated_range(stack, config), map.ids);
}

std::vector<std::int32_t> nearest_candidate_classify(const HistogramMatrix& features, const HistogramMatrix& candidates) {
  if (features.cols() != candidates.cols()) {
    throw std::invalid_argument("nearest_candidate_classify: bin counts differ");
  }
  if (candidates.rows() == 0) throw std::invalid_argument("nearest_candidate_classify: no candidates");
  std::vector<std::int32_t> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index s = 0; s < features.rows(); ++s) {
    Eigen::Index best = 0;
    double best_d = (features.row(s) - candidates.row(0)).cwiseAbs().cast<double>().sum();
    for (Eigen::Index c = 1; c < candidates.rows(); ++c) {
      const double d = (features.row(s) - candidates.row(c)).cwiseAbs().cast<double>().sum();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    out[static_cast<std::size_t>(s)] = static_cast<std::int32_t>(best);
  }
  return out;
}

HistogramMatrix reference_histograms(const SceneSpec& scene, const std::vector<BrdfModel>& brdf_table,
                                     const HistogramConfig& config, ValueRange fine_range, std::uint64_t seed,
                                     std::size_t patch_side) {
  HistogramMatrix out(static_cast<Eigen::Index>(scene.num_classes), static_cast<Eigen::Index>(config.total_bins()));
  for (std::size_t c = 0; c < scene.num_classes; ++c) {
    SceneSpec patch = scene;
    patch.height = patch.width = patch_side;
    patch.material_map = LabelMap::Constant(static_cast<Eigen::Index>(patch_side), static_cast<Eigen::Index>(patch_side),
                                            static_cast<std::int32_t>(c));
    patch.cell_map.resize(0, 0);
    patch.cell_albedo_scale.clear();
    patch.seed = seed + c;
    const auto stack = render_stack(patch, brdf_table);
    std::vector<float> samples;
    for (Eigen::Index p = 0; p < stack.data.cols(); ++p)
      for (Eigen::Index j = 0; j < stack.data.rows(); ++j)
        if (stack.valid(j, p)) samples.push_back(stack.data(j, p));
    out.row(static_cast<Eigen::Index>(c)) = histogram_row(samples, config, fine_range);
  }
  return out;
}

}  // namespace anglseg
