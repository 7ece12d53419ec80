#pragma once

#include "anglseg/ops.hpp"
#include "anglseg/optim.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace anglseg {

struct NetworkConfig {
  std::size_t num_classes = 10;
  std::size_t histogram_bins = 32;
  std::array<std::size_t, 4> backbone_widths{16, 32, 64, 64};
  std::size_t pah_channels = 16;
  std::size_t stack1_channels = 64;
  std::size_t stack2_channels = 32;
  bool use_histogram = true;
  bool use_stack2 = true;

  static constexpr std::size_t output_stride = 8;
  void validate() const;
};

// ---- layers ---------------------------------------------------------------

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const ConvSpec& spec, bool with_bias, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const { return conv2d(x, weight, bias, spec); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void zero();

  ConvSpec spec;
  Tensor weight;
  Tensor bias;  // undefined when the conv feeds a batch norm
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels);

  Tensor forward(const Tensor& x, BatchNormMode mode) { return batch_norm(x, gamma, beta, state, mode); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void load_buffers(const std::string& prefix, const std::vector<NamedTensor>& in);

  Tensor gamma;
  Tensor beta;
  BatchNormState<float> state;
};

/// Backbone residual block: relu(bn(conv3x3(relu(bn(conv3x3(x))))) + shortcut(x)),
/// shortcut = 1x1 conv + bn when stride or width changes.
class BasicBlock {
 public:
  BasicBlock() = default;
  BasicBlock(std::size_t in, std::size_t out, std::size_t stride, std::size_t dilation, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, BatchNormMode mode);
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void load_buffers(const std::string& prefix, const std::vector<NamedTensor>& in);

 private:
  Conv2d conv1_, conv2_, shortcut_;
  BatchNorm2d bn1_, bn2_, shortcut_bn_;
  bool projected_ = false;
};

/// Stack residual block producing a material feature map:
/// shortcut(x) + bn(conv3x3(relu(bn(conv3x3(x))))), no trailing activation.
/// The shortcut is a biased 1x1 conv when widths differ, identity otherwise.
class StackBlock {
 public:
  StackBlock() = default;
  StackBlock(std::size_t in, std::size_t out, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, BatchNormMode mode);
  Tensor shortcut(const Tensor& x) const { return projected_ ? projection_.forward(x) : x; }
  void zero_branch();
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void load_buffers(const std::string& prefix, const std::vector<NamedTensor>& in);

 private:
  Conv2d conv1_, conv2_, projection_;
  BatchNorm2d bn1_, bn2_;
  bool projected_ = false;
};

/// Area-average pooling to `stride`, then two (1x1 conv -> bn -> relu).
class HistogramProjector {
 public:
  HistogramProjector() = default;
  HistogramProjector(std::size_t bins, std::size_t channels, std::size_t stride, std::mt19937_64& rng);

  Tensor forward(const Tensor& dense, BatchNormMode mode);
  std::size_t stride() const { return stride_; }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void load_buffers(const std::string& prefix, const std::vector<NamedTensor>& in);

 private:
  Conv2d conv1_, conv2_;
  BatchNorm2d bn1_, bn2_;
  std::size_t stride_ = 8;
};

// ---- network --------------------------------------------------------------

struct BackboneFeatures {
  Tensor sf2;           // stride 4
  Tensor sf1;           // stride 8
  Tensor backbone_out;  // stride 8, dilated stages
};

struct NetworkActivations {
  Tensor sf1, sf2, backbone_out;
  Tensor pah1, pah2;  // undefined without the histogram branch
  Tensor gf, mfm1, mfm2;
  Tensor cp;          // coarse logits, input resolution
  Tensor refinement;  // Stack II logits, undefined without Stack II
  Tensor fine;        // cp + refinement (== cp without Stack II)
};

/// Two-stack coarse-to-fine segmentation network over a luminance image
/// and a dense angular-histogram map.
class AngLNet {
 public:
  AngLNet(const NetworkConfig& config, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }

  /// image: [N,1,H,W]; histogram: [N,b,H,W] (ignored without the histogram branch).
  NetworkActivations forward(const Tensor& image, const Tensor& histogram, BatchNormMode mode);

  BackboneFeatures backbone_forward(const Tensor& image, BatchNormMode mode);
  Tensor project_histogram(const Tensor& dense, std::size_t target_stride, BatchNormMode mode);
  /// Returns (MFM1, CP).
  std::pair<Tensor, Tensor> stack1_forward(const Tensor& sf1, const Tensor& backbone_out, const Tensor& pah1,
                                           BatchNormMode mode, Tensor* gf = nullptr);
  /// Returns fine logits; optionally exposes the refinement and MFM2.
  Tensor stack2_forward(const Tensor& mfm1, const Tensor& sf2, const Tensor& pah2, const Tensor& cp, BatchNormMode mode,
                        Tensor* refinement = nullptr, Tensor* mfm2 = nullptr);

  /// Trainable tensors, in a fixed order with stable names.
  ParameterSet parameters() const;
  /// Parameters plus batch-norm running statistics (checkpoint content).
  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& tensors);

  Conv2d& stack1_classifier() { return stack1_classifier_; }
  Conv2d& stack2_classifier() { return stack2_classifier_; }
  StackBlock& stack1_block() { return stack1_block_; }

 private:
  NetworkConfig config_;
  Conv2d stem_;
  BatchNorm2d stem_bn_;
  BasicBlock stage1_, stage2_, stage3_, stage4_;
  HistogramProjector pah1_, pah2_;
  StackBlock stack1_block_, stack2_block_;
  Conv2d stack1_classifier_, stack2_classifier_;
};

/// CE(fine) + alpha * CE(cp), mean over non-ignored pixels.
Tensor combined_loss(const Tensor& fine, const Tensor& cp, std::span<const std::int32_t> labels, double alpha,
                     std::int32_t ignore_index = -1);

}  // namespace anglseg
