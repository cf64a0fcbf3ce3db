#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "fds/autograd.hpp"
#include "fds/image.hpp"
#include "fds/nn_ops.hpp"

namespace fds {

/// Architecture of the ResNet-34-backed U-Net.
///
/// encoder_depth_channels lists the stem width followed by the widths of the
/// four residual stages; encoder_blocks gives the residual block count per
/// stage. One decoder stage per entry of decoder_channels, each doubling the
/// resolution; the last stage runs without a skip connection.
struct ModelConfig {
  std::vector<int> encoder_depth_channels{64, 64, 128, 256, 512};
  std::vector<int> encoder_blocks{3, 4, 6, 3};
  std::vector<int> decoder_channels{256, 128, 64, 32, 16};
  int input_resolution = 512;
  bool backbone_pretrained = true;
  /// Checkpoint whose encoder.* tensors seed the backbone when pretrained.
  std::string pretrained_path;

  /// Channels divided by 8 (decoder stages floored at 8), 64x64 input.
  static ModelConfig tiny();

  /// Total downsampling factor of the encoder (stem 2, pool 2, stages 2,2,2).
  int total_stride() const { return 32; }
  int bottleneck_channels() const { return encoder_depth_channels.back(); }
  void validate() const;
  bool operator==(const ModelConfig& other) const = default;
};

/// Encoder activation with its spatial stride relative to the input.
struct FeatureMap {
  Tensor values;  // [1, C, h, w]
  int stride = 1;

  int channels() const { return values.c(); }
  int height() const { return values.h(); }
  int width() const { return values.w(); }
};

/// Per-pixel defect probabilities from the final sigmoid.
struct PredictedMask {
  int height = 0;
  int width = 0;
  std::vector<double> probs;

  double at(int y, int x) const { return probs[static_cast<std::size_t>(y) * width + x]; }
};

struct EncoderOutput {
  ag::Var bottleneck;
  std::vector<ag::Var> skips;  // shallow to deep, strides 2, 4, 8, 16
};

struct Encoded {
  FeatureMap bottleneck;
  std::vector<FeatureMap> skips;
};

struct Prediction {
  PredictedMask mask;
  FeatureMap bottleneck;
};

struct NamedParameter {
  std::string name;
  ag::Var var;
};

struct NamedBuffer {
  std::string name;
  ag::BatchNormBuffers* buffers;
};

class SegmentationNet {
 public:
  /// With `load_pretrained` false the backbone stays randomly initialised even
  /// when the config asks for pretrained weights (used when restoring).
  SegmentationNet(ModelConfig config, std::uint64_t seed, bool load_pretrained = true);

  const ModelConfig& config() const { return config_; }
  std::uint64_t init_seed() const { return seed_; }

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  /// Batched, differentiable passes over [N, 3, H, W] images in [0, 1].
  EncoderOutput encode(const Tensor& images);
  ag::Var decode(const EncoderOutput& encoded);

  /// Single-image conveniences; run in eval mode without recording a graph.
  Encoded encode(const Image& img);
  PredictedMask decode(const Encoded& encoded);
  Prediction forward(const Image& img);
  /// Eval-mode probabilities for a batch, [N, 1, H, W].
  Tensor predict(const Tensor& images);

  std::vector<NamedParameter>& parameters() { return params_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::vector<NamedBuffer>& buffers() { return buffers_; }
  const std::vector<NamedBuffer>& buffers() const { return buffers_; }
  std::size_t parameter_count() const;
  void zero_grad();

  /// Zeroes the final 1x1 convolution (weights and bias).
  void zero_head();

 private:
  struct Conv {
    ag::Var weight, bias;
    int stride = 1, padding = 0;
  };
  struct Norm {
    ag::Var gamma, beta;
    ag::BatchNormBuffers* buffers = nullptr;
  };
  struct BasicBlock {
    Conv conv1, conv2;
    Norm bn1, bn2;
    bool has_downsample = false;
    Conv down;
    Norm down_bn;
  };
  struct DecoderBlock {
    Conv conv1, conv2;
    Norm bn1, bn2;
  };

  Conv make_conv(const std::string& name, int cin, int cout, int k, int stride, int pad, bool bias);
  Norm make_norm(const std::string& name, int channels);
  ag::Var conv(const Conv& c, const ag::Var& x) const;
  ag::Var norm(const Norm& n, const ag::Var& x) const;
  ag::Var basic_block(const BasicBlock& b, const ag::Var& x) const;
  void load_pretrained_backbone();

  ModelConfig config_;
  std::uint64_t seed_;
  bool training_ = true;
  std::vector<NamedParameter> params_;
  std::vector<NamedBuffer> buffers_;
  std::deque<ag::BatchNormBuffers> buffer_storage_;
  std::uint64_t init_counter_ = 0;

  Conv stem_;
  Norm stem_bn_;
  std::vector<std::vector<BasicBlock>> stages_;
  std::vector<DecoderBlock> decoder_;
  Conv head_;
};

/// Fixed per-channel input normalisation applied inside encode().
Tensor normalize_input(const Tensor& images);

FeatureMap to_feature_map(const Tensor& batch, int index, int stride);
PredictedMask to_predicted_mask(const Tensor& probs, int index);

}  // namespace fds
