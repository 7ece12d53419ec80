#include "anglseg/model.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace anglseg {

void NetworkConfig::validate() const {
  if (num_classes < 2) throw std::invalid_argument("network: num_classes must be >= 2");
  for (auto w : backbone_widths)
    if (w == 0) throw std::invalid_argument("network: backbone widths must be positive");
  if (use_histogram && (histogram_bins == 0 || pah_channels == 0)) {
    throw std::invalid_argument("network: histogram branch needs bins and pah_channels > 0");
  }
  if (stack1_channels == 0 || stack2_channels == 0) throw std::invalid_argument("network: stack widths must be positive");
}

// ---- layers ---------------------------------------------------------------

Conv2d::Conv2d(const ConvSpec& s, bool with_bias, std::mt19937_64& rng) : spec(s) {
  spec.validate();
  const auto fan_in = spec.in_channels * spec.kernel_h * spec.kernel_w;
  std::normal_distribution<float> init(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  Tensor::Array w(static_cast<Eigen::Index>(spec.out_channels * fan_in));
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = init(rng);
  weight = Tensor::from({spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w}, std::move(w), true);
  if (with_bias) bias = Tensor::zeros({spec.out_channels}, true);
}

void Conv2d::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

void Conv2d::zero() {
  weight.values().setZero();
  if (bias.defined()) bias.values().setZero();
}

BatchNorm2d::BatchNorm2d(std::size_t channels)
    : gamma(Tensor::full({channels}, 1.0f, true)), beta(Tensor::zeros({channels}, true)), state(channels) {}

void BatchNorm2d::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

void BatchNorm2d::collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const {
  const auto c = static_cast<std::size_t>(state.running_mean.size());
  out.push_back({prefix + ".running_mean", Tensor::from({c}, state.running_mean)});
  out.push_back({prefix + ".running_var", Tensor::from({c}, state.running_var)});
}

namespace {

const Tensor& find_tensor(const std::vector<NamedTensor>& in, const std::string& name) {
  for (const auto& t : in)
    if (t.name == name) return t.tensor;
  throw std::runtime_error("state: missing tensor '" + name + "'");
}

}  // namespace

void BatchNorm2d::load_buffers(const std::string& prefix, const std::vector<NamedTensor>& in) {
  const auto& m = find_tensor(in, prefix + ".running_mean");
  const auto& v = find_tensor(in, prefix + ".running_var");
  if (m.numel() != static_cast<std::size_t>(state.running_mean.size()) || v.numel() != m.numel()) {
    throw std::runtime_error("state: running stats size mismatch for '" + prefix + "'");
  }
  state.running_mean = m.values();
  state.running_var = v.values();
}

BasicBlock::BasicBlock(std::size_t in, std::size_t out, std::size_t stride, std::size_t dilation, std::mt19937_64& rng)
    : conv1_(conv3x3(in, out, stride, dilation), false, rng),
      conv2_(conv3x3(out, out, 1, dilation), false, rng),
      bn1_(out),
      bn2_(out),
      projected_(stride != 1 || in != out) {
  if (projected_) {
    shortcut_ = Conv2d(conv1x1(in, out, stride), false, rng);
    shortcut_bn_ = BatchNorm2d(out);
  }
}

Tensor BasicBlock::forward(const Tensor& x, BatchNormMode mode) {
  auto y = relu(bn1_.forward(conv1_.forward(x), mode));
  y = bn2_.forward(conv2_.forward(y), mode);
  const Tensor skip = projected_ ? shortcut_bn_.forward(shortcut_.forward(x), mode) : x;
  return relu(add(y, skip));
}

void BasicBlock::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  conv1_.collect(prefix + ".conv1", out);
  bn1_.collect(prefix + ".bn1", out);
  conv2_.collect(prefix + ".conv2", out);
  bn2_.collect(prefix + ".bn2", out);
  if (projected_) {
    shortcut_.collect(prefix + ".shortcut", out);
    shortcut_bn_.collect(prefix + ".shortcut_bn", out);
  }
}

void BasicBlock::collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const {
  bn1_.collect_buffers(prefix + ".bn1", out);
  bn2_.collect_buffers(prefix + ".bn2", out);
  if (projected_) shortcut_bn_.collect_buffers(prefix + ".shortcut_bn", out);
}

void BasicBlock::load_buffers(const std::string& prefix, const std::vector<NamedTensor>& in) {
  bn1_.load_buffers(prefix + ".bn1", in);
  bn2_.load_buffers(prefix + ".bn2", in);
  if (projected_) shortcut_bn_.load_buffers(prefix + ".shortcut_bn", in);
}

StackBlock::StackBlock(std::size_t in, std::size_t out, std::mt19937_64& rng)
    : conv1_(conv3x3(in, out), false, rng),
      conv2_(conv3x3(out, out), false, rng),
      bn1_(out),
      bn2_(out),
      projected_(in != out) {
  if (projected_) projection_ = Conv2d(conv1x1(in, out), true, rng);
}

Tensor StackBlock::forward(const Tensor& x, BatchNormMode mode) {
  auto y = relu(bn1_.forward(conv1_.forward(x), mode));
  y = bn2_.forward(conv2_.forward(y), mode);
  return add(shortcut(x), y);
}

void StackBlock::zero_branch() {
  conv1_.zero();
  conv2_.zero();
}

void StackBlock::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  conv1_.collect(prefix + ".conv1", out);
  bn1_.collect(prefix + ".bn1", out);
  conv2_.collect(prefix + ".conv2", out);
  bn2_.collect(prefix + ".bn2", out);
  if (projected_) projection_.collect(prefix + ".projection", out);
}

void StackBlock::collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const {
  bn1_.collect_buffers(prefix + ".bn1", out);
  bn2_.collect_buffers(prefix + ".bn2", out);
}

void StackBlock::load_buffers(const std::string& prefix, const std::vector<NamedTensor>& in) {
  bn1_.load_buffers(prefix + ".bn1", in);
  bn2_.load_buffers(prefix + ".bn2", in);
}

HistogramProjector::HistogramProjector(std::size_t bins, std::size_t channels, std::size_t stride, std::mt19937_64& rng)
    : conv1_(conv1x1(bins, channels), true, rng),
      conv2_(conv1x1(channels, channels), true, rng),
      bn1_(channels),
      bn2_(channels),
      stride_(stride) {}

Tensor HistogramProjector::forward(const Tensor& dense, BatchNormMode mode) {
  auto y = avg_pool2d(dense, stride_);
  y = relu(bn1_.forward(conv1_.forward(y), mode));
  return relu(bn2_.forward(conv2_.forward(y), mode));
}

void HistogramProjector::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  conv1_.collect(prefix + ".conv1", out);
  bn1_.collect(prefix + ".bn1", out);
  conv2_.collect(prefix + ".conv2", out);
  bn2_.collect(prefix + ".bn2", out);
}

void HistogramProjector::collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const {
  bn1_.collect_buffers(prefix + ".bn1", out);
  bn2_.collect_buffers(prefix + ".bn2", out);
}

void HistogramProjector::load_buffers(const std::string& prefix, const std::vector<NamedTensor>& in) {
  bn1_.load_buffers(prefix + ".bn1", in);
  bn2_.load_buffers(prefix + ".bn2", in);
}

// ---- network --------------------------------------------------------------

AngLNet::AngLNet(const NetworkConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto& w = config_.backbone_widths;
  stem_ = Conv2d(conv3x3(1, w[0], 2), false, rng);
  stem_bn_ = BatchNorm2d(w[0]);
  stage1_ = BasicBlock(w[0], w[0], 2, 1, rng);
  stage2_ = BasicBlock(w[0], w[1], 2, 1, rng);
  stage3_ = BasicBlock(w[1], w[2], 1, 2, rng);
  stage4_ = BasicBlock(w[2], w[3], 1, 4, rng);

  const auto pah = config_.use_histogram ? config_.pah_channels : 0;
  if (config_.use_histogram) pah1_ = HistogramProjector(config_.histogram_bins, pah, 8, rng);
  stack1_block_ = StackBlock(w[1] + w[3] + pah, config_.stack1_channels, rng);
  stack1_classifier_ = Conv2d(conv1x1(config_.stack1_channels, config_.num_classes), true, rng);
  if (config_.use_stack2) {
    if (config_.use_histogram) pah2_ = HistogramProjector(config_.histogram_bins, pah, 4, rng);
    stack2_block_ = StackBlock(config_.stack1_channels + w[0] + pah, config_.stack2_channels, rng);
    stack2_classifier_ = Conv2d(conv1x1(config_.stack2_channels, config_.num_classes), true, rng);
    // the refinement starts at exactly zero: fine == CP before training
    stack2_classifier_.zero();
  }
}

BackboneFeatures AngLNet::backbone_forward(const Tensor& image, BatchNormMode mode) {
  if (image.rank() != 4) throw ShapeError("backbone", "rank", 4, image.rank());
  if (image.dim(1) != 1) throw ShapeError("backbone", "input channels", 1, image.dim(1));
  if (image.dim(2) % NetworkConfig::output_stride != 0) {
    throw ShapeError("backbone", "height must be a multiple of 8 (got " + std::to_string(image.dim(2)) + ")");
  }
  if (image.dim(3) % NetworkConfig::output_stride != 0) {
    throw ShapeError("backbone", "width must be a multiple of 8 (got " + std::to_string(image.dim(3)) + ")");
  }
  BackboneFeatures f;
  auto x = relu(stem_bn_.forward(stem_.forward(image), mode));
  f.sf2 = stage1_.forward(x, mode);
  f.sf1 = stage2_.forward(f.sf2, mode);
  f.backbone_out = stage4_.forward(stage3_.forward(f.sf1, mode), mode);
  return f;
}

Tensor AngLNet::project_histogram(const Tensor& dense, std::size_t target_stride, BatchNormMode mode) {
  if (!config_.use_histogram) throw std::logic_error("project_histogram: histogram branch disabled");
  if (dense.rank() != 4) throw ShapeError("project_histogram", "rank", 4, dense.rank());
  if (dense.dim(1) != config_.histogram_bins) throw ShapeError("project_histogram", "histogram bins", config_.histogram_bins, dense.dim(1));
  if (target_stride == 8) return pah1_.forward(dense, mode);
  if (target_stride == 4 && config_.use_stack2) return pah2_.forward(dense, mode);
  throw std::invalid_argument("project_histogram: unsupported target stride " + std::to_string(target_stride));
}

std::pair<Tensor, Tensor> AngLNet::stack1_forward(const Tensor& sf1, const Tensor& backbone_out, const Tensor& pah1,
                                                  BatchNormMode mode, Tensor* gf_out) {
  std::vector<Tensor> parts{sf1, backbone_out};
  if (config_.use_histogram) parts.push_back(pah1);
  auto gf = concat_channels(parts);
  auto mfm1 = stack1_block_.forward(gf, mode);
  auto cp = bilinear_upsample(stack1_classifier_.forward(mfm1), NetworkConfig::output_stride);
  if (gf_out) *gf_out = gf;
  return {mfm1, cp};
}

Tensor AngLNet::stack2_forward(const Tensor& mfm1, const Tensor& sf2, const Tensor& pah2, const Tensor& cp,
                               BatchNormMode mode, Tensor* refinement_out, Tensor* mfm2_out) {
  if (!config_.use_stack2) throw std::logic_error("stack2_forward: Stack II disabled");
  std::vector<Tensor> parts{bilinear_upsample(mfm1, 2), sf2};
  if (config_.use_histogram) parts.push_back(pah2);
  auto mfm2 = stack2_block_.forward(concat_channels(parts), mode);
  auto refinement = bilinear_upsample(stack2_classifier_.forward(mfm2), 4);
  if (refinement.shape() != cp.shape()) {
    throw ShapeError("stack2", "refinement " + shape_string(refinement.shape()) + " vs CP " + shape_string(cp.shape()));
  }
  if (refinement_out) *refinement_out = refinement;
  if (mfm2_out) *mfm2_out = mfm2;
  return add(cp, refinement);
}

NetworkActivations AngLNet::forward(const Tensor& image, const Tensor& histogram, BatchNormMode mode) {
  NetworkActivations a;
  auto f = backbone_forward(image, mode);
  a.sf1 = f.sf1;
  a.sf2 = f.sf2;
  a.backbone_out = f.backbone_out;
  if (config_.use_histogram) {
    if (!histogram.defined()) throw std::invalid_argument("forward: histogram input required");
    if (histogram.dim(0) != image.dim(0)) throw ShapeError("forward", "histogram batch", image.dim(0), histogram.dim(0));
    if (histogram.dim(2) != image.dim(2)) throw ShapeError("forward", "histogram height", image.dim(2), histogram.dim(2));
    if (histogram.dim(3) != image.dim(3)) throw ShapeError("forward", "histogram width", image.dim(3), histogram.dim(3));
    a.pah1 = project_histogram(histogram, 8, mode);
    if (config_.use_stack2) a.pah2 = project_histogram(histogram, 4, mode);
  }
  std::tie(a.mfm1, a.cp) = stack1_forward(a.sf1, a.backbone_out, a.pah1, mode, &a.gf);
  if (config_.use_stack2) {
    a.fine = stack2_forward(a.mfm1, a.sf2, a.pah2, a.cp, mode, &a.refinement, &a.mfm2);
  } else {
    a.fine = a.cp;
  }
  return a;
}

ParameterSet AngLNet::parameters() const {
  ParameterSet out;
  stem_.collect("backbone.stem", out);
  stem_bn_.collect("backbone.stem_bn", out);
  stage1_.collect("backbone.stage1", out);
  stage2_.collect("backbone.stage2", out);
  stage3_.collect("backbone.stage3", out);
  stage4_.collect("backbone.stage4", out);
  if (config_.use_histogram) pah1_.collect("pah1", out);
  stack1_block_.collect("stack1.block", out);
  stack1_classifier_.collect("stack1.classifier", out);
  if (config_.use_stack2) {
    if (config_.use_histogram) pah2_.collect("pah2", out);
    stack2_block_.collect("stack2.block", out);
    stack2_classifier_.collect("stack2.classifier", out);
  }
  return out;
}

std::vector<NamedTensor> AngLNet::state() const {
  auto out = parameters();
  stem_bn_.collect_buffers("backbone.stem_bn", out);
  stage1_.collect_buffers("backbone.stage1", out);
  stage2_.collect_buffers("backbone.stage2", out);
  stage3_.collect_buffers("backbone.stage3", out);
  stage4_.collect_buffers("backbone.stage4", out);
  if (config_.use_histogram) pah1_.collect_buffers("pah1", out);
  stack1_block_.collect_buffers("stack1.block", out);
  if (config_.use_stack2) {
    if (config_.use_histogram) pah2_.collect_buffers("pah2", out);
    stack2_block_.collect_buffers("stack2.block", out);
  }
  return out;
}

void AngLNet::load_state(const std::vector<NamedTensor>& tensors) {
  for (auto& p : parameters()) {
    const auto& src = find_tensor(tensors, p.name);
    if (src.shape() != p.tensor.shape()) {
      throw std::runtime_error("state: shape mismatch for '" + p.name + "': checkpoint " + shape_string(src.shape()) +
                               ", model " + shape_string(p.tensor.shape()));
    }
    // copy in place so layers keep sharing the same node
    auto dst = p.tensor;
    dst.values() = src.values();
  }
  stem_bn_.load_buffers("backbone.stem_bn", tensors);
  stage1_.load_buffers("backbone.stage1", tensors);
  stage2_.load_buffers("backbone.stage2", tensors);
  stage3_.load_buffers("backbone.stage3", tensors);
  stage4_.load_buffers("backbone.stage4", tensors);
  if (config_.use_histogram) pah1_.load_buffers("pah1", tensors);
  stack1_block_.load_buffers("stack1.block", tensors);
  if (config_.use_stack2) {
    if (config_.use_histogram) pah2_.load_buffers("pah2", tensors);
    stack2_block_.load_buffers("stack2.block", tensors);
  }
}

Tensor combined_loss(const Tensor& fine, const Tensor& cp, std::span<const std::int32_t> labels, double alpha,
                     std::int32_t ignore_index) {
  if (alpha < 0.0) throw std::invalid_argument("combined_loss: alpha must be >= 0");
  auto fine_ce = softmax_cross_entropy(fine, labels, ignore_index).loss;
  if (alpha == 0.0) return fine_ce;
  auto coarse_ce = softmax_cross_entropy(cp, labels, ignore_index).loss;
  return add(fine_ce, scale(coarse_ce, static_cast<float>(alpha)));
}

}  // namespace anglseg
