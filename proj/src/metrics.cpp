#include "anglseg/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace anglseg {

Metrics metrics_from_confusion(const ConfusionCounts& confusion) {
  Metrics m;
  m.confusion = confusion;
  const auto k = confusion.rows();
  const auto total = confusion.sum();
  m.pix_acc = total ? static_cast<double>(confusion.trace()) / static_cast<double>(total) : 0.0;
  m.per_class_iou.assign(static_cast<std::size_t>(k), std::nullopt);
  double sum = 0.0;
  int present = 0;
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto tp = confusion(c, c);
    const auto fn = confusion.row(c).sum() - tp;
    const auto fp = confusion.col(c).sum() - tp;
    const auto denom = tp + fp + fn;
    if (denom == 0) continue;
    const double iou = static_cast<double>(tp) / static_cast<double>(denom);
    m.per_class_iou[static_cast<std::size_t>(c)] = iou;
    sum += iou;
    ++present;
  }
  m.mean_iou = present ? sum / present : 0.0;
  return m;
}

std::string format_percent_pair(const Metrics& m) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f / %.1f", 100.0 * m.pix_acc, 100.0 * m.mean_iou);
  return buf;
}

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : counts_(ConfusionCounts::Zero(static_cast<Eigen::Index>(num_classes), static_cast<Eigen::Index>(num_classes))) {}

void ConfusionMatrix::add(std::span<const std::int32_t> truth, std::span<const std::int32_t> prediction) {
  if (truth.size() != prediction.size()) throw std::invalid_argument("confusion: label and prediction sizes differ");
  const auto k = static_cast<std::int32_t>(num_classes());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= k) {
      throw std::out_of_range("confusion: label " + std::to_string(truth[i]) + " outside [0, " + std::to_string(k) + ")");
    }
    if (prediction[i] < 0 || prediction[i] >= k) {
      throw std::out_of_range("confusion: prediction " + std::to_string(prediction[i]) + " outside [0, " + std::to_string(k) + ")");
    }
    ++counts_(truth[i], prediction[i]);
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes() != num_classes()) throw std::invalid_argument("confusion: class counts differ");
  counts_ += other.counts_;
}

std::vector<std::int32_t> fuse_views(const std::vector<Eigen::ArrayXXf>& probabilities) {
  if (probabilities.empty()) throw std::invalid_argument("fuse_views: no views");
  const auto k = probabilities[0].rows(), p = probabilities[0].cols();
  for (const auto& v : probabilities) {
    if (v.rows() != k || v.cols() != p) throw std::invalid_argument("fuse_views: view maps have mismatched shapes");
  }
  std::vector<std::int32_t> out(static_cast<std::size_t>(p));
  Eigen::VectorXi votes(k);
  std::vector<float> column(probabilities.size());
  for (Eigen::Index i = 0; i < p; ++i) {
    votes.setZero();
    for (const auto& v : probabilities) {
      Eigen::Index arg = 0;
      for (Eigen::Index c = 1; c < k; ++c)
        if (v(c, i) > v(arg, i)) arg = c;
      ++votes[arg];
    }
    const int top = votes.maxCoeff();
    Eigen::Index best = -1;
    double best_mass = 0.0;
    for (Eigen::Index c = 0; c < k; ++c) {
      if (votes[c] != top) continue;
      // summed in sorted order so the total does not depend on view order
      for (std::size_t j = 0; j < probabilities.size(); ++j) column[j] = probabilities[j](c, i);
      std::sort(column.begin(), column.end());
      double mass = 0.0;
      for (float x : column) mass += x;
      if (best < 0 || mass > best_mass) {
        best = c;
        best_mass = mass;
      }
    }
    out[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(best);
  }
  return out;
}

std::vector<std::int32_t> fuse_labels(const std::vector<std::vector<std::int32_t>>& labels, std::size_t num_classes) {
  if (labels.empty()) throw std::invalid_argument("fuse_labels: no views");
  const auto p = labels[0].size();
  for (const auto& v : labels)
    if (v.size() != p) throw std::invalid_argument("fuse_labels: view maps have mismatched sizes");
  std::vector<std::int32_t> out(p);
  std::vector<int> votes(num_classes);
  for (std::size_t i = 0; i < p; ++i) {
    std::fill(votes.begin(), votes.end(), 0);
    for (const auto& v : labels) {
      if (v[i] < 0 || static_cast<std::size_t>(v[i]) >= num_classes) throw std::out_of_range("fuse_labels: class id out of range");
      ++votes[static_cast<std::size_t>(v[i])];
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < num_classes; ++c)
      if (votes[c] > votes[best]) best = c;
    out[i] = static_cast<std::int32_t>(best);
  }
  return out;
}

}  // namespace anglseg
