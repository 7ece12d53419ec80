#include "anglseg/train.hpp"

#include "anglseg/checkpoint.hpp"
#include "anglseg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>

namespace anglseg {

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw std::invalid_argument("train: base_lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("train: momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be >= 0");
  if (epochs == 0) throw std::invalid_argument("train: epochs must be positive");
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
  if (alpha < 0.0) throw std::invalid_argument("train: alpha must be >= 0");
  if (crop < NetworkConfig::output_stride || crop % NetworkConfig::output_stride != 0) {
    throw std::invalid_argument("train: crop must be a positive multiple of 8");
  }
}

SceneData make_scene_data(std::string name, const IntensityStack& stack, const AngularHistogramFeature& feature) {
  if (feature.height() != stack.height || feature.width() != stack.width) {
    throw ShapeError("make_scene_data", "histogram map size", stack.num_pixels(), feature.height() * feature.width());
  }
  SceneData s;
  s.name = std::move(name);
  s.height = stack.height;
  s.width = stack.width;
  for (std::size_t j = 0; j < stack.num_views(); ++j) s.views.push_back(stack.view_image(j));
  s.bins = feature.bins();
  s.histogram = feature.dense_chw();
  s.labels.assign(stack.labels.data(), stack.labels.data() + stack.labels.size());
  return s;
}

namespace {

struct Sample {
  std::size_t scene = 0;
  std::size_t view = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  bool flip_h = false;
  bool flip_v = false;
};

struct Batch {
  Tensor image;
  Tensor histogram;
  std::vector<std::int32_t> labels;
};

Batch gather(const std::vector<SceneData>& scenes, const std::vector<Sample>& samples, std::size_t crop,
             bool with_histogram) {
  const std::size_t n = samples.size();
  const std::size_t bins = with_histogram ? scenes.front().bins : 0;
  const std::size_t area = crop * crop;
  Tensor::Array image(static_cast<Eigen::Index>(n * area));
  Tensor::Array hist(static_cast<Eigen::Index>(n * bins * area));
  Batch b;
  b.labels.resize(n * area);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = samples[i];
    const auto& scene = scenes[s.scene];
    const auto& view = scene.views[s.view];
    const std::size_t plane = scene.height * scene.width;
    for (std::size_t r = 0; r < crop; ++r) {
      const std::size_t sr = s.row + (s.flip_v ? crop - 1 - r : r);
      for (std::size_t c = 0; c < crop; ++c) {
        const std::size_t sc = s.col + (s.flip_h ? crop - 1 - c : c);
        const std::size_t src = sr * scene.width + sc;
        const std::size_t dst = r * crop + c;
        image[static_cast<Eigen::Index>(i * area + dst)] = view(static_cast<Eigen::Index>(sr), static_cast<Eigen::Index>(sc));
        b.labels[i * area + dst] = scene.labels[src];
        for (std::size_t k = 0; k < bins; ++k) {
          hist[static_cast<Eigen::Index>((i * bins + k) * area + dst)] = scene.histogram[k * plane + src];
        }
      }
    }
  }
  b.image = Tensor::from({n, 1, crop, crop}, std::move(image));
  if (with_histogram) b.histogram = Tensor::from({n, bins, crop, crop}, std::move(hist));
  return b;
}

std::string gradient_report(const ParameterSet& params) {
  std::ostringstream os;
  os.precision(4);
  bool first = true;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    os << (first ? "" : ", ") << p.name << "=" << p.tensor.grad().matrix().norm();
    first = false;
  }
  return os.str();
}

void check_scenes(const std::vector<SceneData>& scenes, const NetworkConfig& net) {
  if (scenes.empty()) throw std::invalid_argument("train: no scenes");
  for (const auto& s : scenes) {
    if (s.views.empty()) throw std::invalid_argument("scene '" + s.name + "' has no views");
    if (s.labels.size() != s.height * s.width) {
      throw ShapeError("scene '" + s.name + "'", "label count", s.height * s.width, s.labels.size());
    }
    if (net.use_histogram && s.bins != net.histogram_bins) {
      throw ShapeError("scene '" + s.name + "'", "histogram bins", net.histogram_bins, s.bins);
    }
  }
}

}  // namespace

TrainResult train(AngLNet& model, const std::vector<SceneData>& scenes, const TrainConfig& config,
                  const TrainOutput& output) {
  config.validate();
  const auto& net = model.config();
  check_scenes(scenes, net);

  std::size_t crop = config.crop;
  for (const auto& s : scenes) crop = std::min({crop, s.height, s.width});
  crop -= crop % NetworkConfig::output_stride;
  if (crop == 0) throw std::invalid_argument("train: scenes smaller than 8 pixels");

  std::vector<Sample> pool;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    for (std::size_t j = 0; j < scenes[i].num_views(); ++j) pool.push_back({i, j});
  }
  const std::size_t per_epoch = (pool.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total = per_epoch * config.epochs;
  const double alpha = net.use_stack2 ? config.alpha : 0.0;

  auto params = model.parameters();
  Sgd sgd(params, {config.momentum, config.weight_decay});
  std::mt19937_64 rng(config.seed);

  if (!output.directory.empty()) std::filesystem::create_directories(output.directory);
  std::ofstream curve;
  if (!output.directory.empty()) {
    curve.open(output.directory / "loss_curve.csv");
    curve << "iteration,epoch,lr,loss\n";
  }

  TrainResult result;
  std::size_t iter = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(pool.begin(), pool.end(), rng);
    double epoch_loss = 0.0;
    double lr = 0.0;
    for (std::size_t start = 0; start < pool.size(); start += config.batch_size, ++iter) {
      std::vector<Sample> samples(pool.begin() + static_cast<std::ptrdiff_t>(start),
                                  pool.begin() + static_cast<std::ptrdiff_t>(std::min(start + config.batch_size, pool.size())));
      for (auto& s : samples) {
        const auto& scene = scenes[s.scene];
        s.row = std::uniform_int_distribution<std::size_t>(0, scene.height - crop)(rng);
        s.col = std::uniform_int_distribution<std::size_t>(0, scene.width - crop)(rng);
        s.flip_h = config.flip_horizontal && (rng() & 1U);
        s.flip_v = config.flip_vertical && (rng() & 1U);
      }
      auto batch = gather(scenes, samples, crop, net.use_histogram);
      lr = poly_learning_rate(config.base_lr, iter, total, config.poly_power);

      auto act = model.forward(batch.image, batch.histogram, BatchNormMode::train);
      auto loss = combined_loss(act.fine, act.cp, batch.labels, alpha);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        std::ostringstream os;
        loss.backward();
        os << "training diverged at iteration " << iter << " (lr=" << lr << ", loss=" << value
           << "); gradient norms: " << gradient_report(params);
        throw TrainingDiverged(os.str());
      }
      loss.backward();
      try {
        sgd.step(lr);
      } catch (const NonFiniteGradient& e) {
        std::ostringstream os;
        os << "training diverged at iteration " << iter << " (lr=" << lr << "): " << e.what()
           << "; gradient norms: " << gradient_report(params);
        throw TrainingDiverged(os.str());
      }
      result.iteration_loss.push_back(value);
      epoch_loss += value;
      if (curve.is_open()) curve << iter << ',' << epoch << ',' << lr << ',' << value << '\n';
    }
    EpochStats stats{epoch, iter, epoch_loss / static_cast<double>(per_epoch), lr};
    result.epochs.push_back(stats);
    if (!output.directory.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03zu.angw", epoch);
      write_checkpoint(output.directory / name, model.state());
    }
    if (output.on_epoch) output.on_epoch(stats);
  }
  return result;
}

Eigen::ArrayXXf predict_logits(AngLNet& model, const SceneData& scene, std::size_t view) {
  if (view >= scene.num_views()) {
    throw std::out_of_range("view " + std::to_string(view) + " out of range for scene '" + scene.name + "' (" +
                            std::to_string(scene.num_views()) + " views)");
  }
  NoGradGuard guard;
  const auto& net = model.config();
  constexpr std::size_t step = NetworkConfig::output_stride;
  const std::size_t h = scene.height;
  const std::size_t w = scene.width;
  const std::size_t ph = (h + step - 1) / step * step;
  const std::size_t pw = (w + step - 1) / step * step;
  const std::size_t plane = h * w;
  const std::size_t padded = ph * pw;

  // edge-replicate padding up to a multiple of the output stride
  auto src_index = [&](std::size_t r, std::size_t c) { return std::min(r, h - 1) * w + std::min(c, w - 1); };
  Tensor::Array image(static_cast<Eigen::Index>(padded));
  const auto& v = scene.views[view];
  for (std::size_t r = 0; r < ph; ++r) {
    for (std::size_t c = 0; c < pw; ++c) {
      image[static_cast<Eigen::Index>(r * pw + c)] =
          v(static_cast<Eigen::Index>(std::min(r, h - 1)), static_cast<Eigen::Index>(std::min(c, w - 1)));
    }
  }
  Tensor hist;
  if (net.use_histogram) {
    if (scene.bins != net.histogram_bins) throw ShapeError("predict", "histogram bins", net.histogram_bins, scene.bins);
    Tensor::Array hv(static_cast<Eigen::Index>(scene.bins * padded));
    for (std::size_t k = 0; k < scene.bins; ++k) {
      for (std::size_t r = 0; r < ph; ++r) {
        for (std::size_t c = 0; c < pw; ++c) {
          hv[static_cast<Eigen::Index>(k * padded + r * pw + c)] = scene.histogram[k * plane + src_index(r, c)];
        }
      }
    }
    hist = Tensor::from({1, scene.bins, ph, pw}, std::move(hv));
  }
  auto act = model.forward(Tensor::from({1, 1, ph, pw}, std::move(image)), hist, BatchNormMode::eval);
  const auto k = static_cast<Eigen::Index>(net.num_classes);
  Eigen::ArrayXXf logits(k, static_cast<Eigen::Index>(plane));
  const float* fine = act.fine.data();
  for (Eigen::Index c = 0; c < k; ++c) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t col = 0; col < w; ++col) {
        logits(c, static_cast<Eigen::Index>(r * w + col)) = fine[static_cast<std::size_t>(c) * padded + r * pw + col];
      }
    }
  }
  return logits;
}

Eigen::ArrayXXf softmax_columns(const Eigen::ArrayXXf& logits) {
  Eigen::ArrayXXf p = logits.rowwise() - logits.colwise().maxCoeff();
  p = p.exp();
  p.rowwise() /= p.colwise().sum();
  return p;
}

std::vector<std::int32_t> argmax_columns(const Eigen::ArrayXXf& scores) {
  std::vector<std::int32_t> out(static_cast<std::size_t>(scores.cols()));
  for (Eigen::Index p = 0; p < scores.cols(); ++p) {
    Eigen::Index best = 0;
    scores.col(p).maxCoeff(&best);
    out[static_cast<std::size_t>(p)] = static_cast<std::int32_t>(best);
  }
  return out;
}

EvaluationReport evaluate(AngLNet& model, const std::vector<SceneData>& scenes, bool per_view, bool fuse) {
  const std::size_t k = model.config().num_classes;
  std::size_t max_views = 0;
  for (const auto& s : scenes) max_views = std::max(max_views, s.num_views());

  ConfusionMatrix overall(k);
  std::vector<ConfusionMatrix> views(per_view ? max_views : 0, ConfusionMatrix(k));
  ConfusionMatrix fused(k);
  std::mutex lock;

  parallel_for(0, scenes.size(), [&](std::size_t i) {
    const auto& scene = scenes[i];
    ConfusionMatrix local(k);
    std::vector<ConfusionMatrix> local_views(views.size(), ConfusionMatrix(k));
    std::vector<Eigen::ArrayXXf> probs;
    for (std::size_t j = 0; j < scene.num_views(); ++j) {
      auto logits = predict_logits(model, scene, j);
      auto pred = argmax_columns(logits);
      local.add(scene.labels, pred);
      if (per_view) local_views[j].add(scene.labels, pred);
      if (fuse) probs.push_back(softmax_columns(logits));
    }
    std::vector<std::int32_t> voted;
    if (fuse) voted = fuse_views(probs);
    std::lock_guard<std::mutex> g(lock);
    overall.merge(local);
    for (std::size_t j = 0; j < views.size(); ++j) views[j].merge(local_views[j]);
    if (fuse) fused.add(scene.labels, voted);
  });

  EvaluationReport report;
  report.overall = overall.metrics();
  for (const auto& v : views) report.per_view.push_back(v.metrics());
  if (fuse) report.fused = fused.metrics();
  return report;
}

}  // namespace anglseg
