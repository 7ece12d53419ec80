#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace anglseg {

using ConfusionCounts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

struct Metrics {
  double pix_acc = 0.0;
  std::vector<std::optional<double>> per_class_iou;  // nullopt: class absent from GT and prediction
  double mean_iou = 0.0;
  ConfusionCounts confusion;                         // rows: ground truth, cols: prediction
};

/// pixAcc = trace / total; IoU_c = TP/(TP+FP+FN); mean over classes present
/// in ground truth or prediction.
Metrics metrics_from_confusion(const ConfusionCounts& confusion);

/// "74.7 / 28.9": pixAcc and mIoU in percent, one decimal.
std::string format_percent_pair(const Metrics& m);

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  /// Accumulates aligned label/prediction arrays; ids outside [0, K) throw.
  void add(std::span<const std::int32_t> truth, std::span<const std::int32_t> prediction);
  void merge(const ConfusionMatrix& other);

  std::size_t num_classes() const { return static_cast<std::size_t>(counts_.rows()); }
  const ConfusionCounts& counts() const { return counts_; }
  Metrics metrics() const { return metrics_from_confusion(counts_); }

 private:
  ConfusionCounts counts_;
};

/// Per-pixel majority vote over per-view argmax labels. Ties go to the tied
/// class with the highest summed probability, then to the lowest id.
/// Each entry of `probabilities` is K x P (class-major, P pixels).
std::vector<std::int32_t> fuse_views(const std::vector<Eigen::ArrayXXf>& probabilities);

/// Hard-label vote; ties resolve to the lowest id.
std::vector<std::int32_t> fuse_labels(const std::vector<std::vector<std::int32_t>>& labels, std::size_t num_classes);

}  // namespace anglseg
