#include "fds/model.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "fds/checkpoint.hpp"
#include "fds/error.hpp"
#include "fds/rng.hpp"

namespace fds {
namespace {

// ImageNet statistics, the convention for ResNet backbones.
constexpr double kMean[3] = {0.485, 0.456, 0.406};
constexpr double kStd[3] = {0.229, 0.224, 0.225};

}  // namespace

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.encoder_depth_channels = {8, 8, 16, 32, 64};
  c.decoder_channels = {32, 16, 8, 8, 8};
  c.input_resolution = 64;
  c.backbone_pretrained = false;
  return c;
}

void ModelConfig::validate() const {
  if (encoder_depth_channels.size() != 5) {
    throw UsageError("model config: encoder_depth_channels needs stem + 4 stage widths");
  }
  if (encoder_blocks.size() != 4) throw UsageError("model config: encoder_blocks needs 4 entries");
  if (decoder_channels.size() != 5) {
    throw UsageError("model config: decoder_channels needs one entry per upsampling stage (5)");
  }
  for (int c : encoder_depth_channels) {
    if (c <= 0) throw UsageError("model config: channel counts must be positive");
  }
  for (int c : decoder_channels) {
    if (c <= 0) throw UsageError("model config: channel counts must be positive");
  }
  for (int b : encoder_blocks) {
    if (b <= 0) throw UsageError("model config: block counts must be positive");
  }
  if (input_resolution <= 0 || input_resolution % total_stride() != 0) {
    throw UsageError("model config: input_resolution must be a positive multiple of 32");
  }
}

SegmentationNet::SegmentationNet(ModelConfig config, std::uint64_t seed, bool load_pretrained)
    : config_(std::move(config)), seed_(seed) {
  config_.validate();
  const auto& ec = config_.encoder_depth_channels;

  stem_ = make_conv("encoder.stem.conv", 3, ec[0], 7, 2, 3, false);
  stem_bn_ = make_norm("encoder.stem.bn", ec[0]);

  int cin = ec[0];
  for (int s = 0; s < 4; ++s) {
    const int cout = ec[s + 1];
    std::vector<BasicBlock> blocks;
    for (int b = 0; b < config_.encoder_blocks[s]; ++b) {
      const std::string p = "encoder.layer" + std::to_string(s + 1) + "." + std::to_string(b) + ".";
      const int stride = (b == 0 && s > 0) ? 2 : 1;
      BasicBlock blk;
      blk.conv1 = make_conv(p + "conv1", cin, cout, 3, stride, 1, false);
      blk.bn1 = make_norm(p + "bn1", cout);
      blk.conv2 = make_conv(p + "conv2", cout, cout, 3, 1, 1, false);
      blk.bn2 = make_norm(p + "bn2", cout);
      if (stride != 1 || cin != cout) {
        blk.has_downsample = true;
        blk.down = make_conv(p + "downsample.conv", cin, cout, 1, stride, 0, false);
        blk.down_bn = make_norm(p + "downsample.bn", cout);
      }
      blocks.push_back(std::move(blk));
      cin = cout;
    }
    stages_.push_back(std::move(blocks));
  }

  // Skip widths, deepest first: layer3, layer2, layer1, stem.
  const int skip_widths[4] = {ec[3], ec[2], ec[1], ec[0]};
  int prev = ec[4];
  for (std::size_t i = 0; i < config_.decoder_channels.size(); ++i) {
    const int out = config_.decoder_channels[i];
    const int in = prev + (i < 4 ? skip_widths[i] : 0);
    const std::string p = "decoder." + std::to_string(i) + ".";
    DecoderBlock d;
    d.conv1 = make_conv(p + "conv1", in, out, 3, 1, 1, false);
    d.bn1 = make_norm(p + "bn1", out);
    d.conv2 = make_conv(p + "conv2", out, out, 3, 1, 1, false);
    d.bn2 = make_norm(p + "bn2", out);
    decoder_.push_back(std::move(d));
    prev = out;
  }
  head_ = make_conv("head.conv", prev, 1, 1, 1, 0, true);

  if (config_.backbone_pretrained && load_pretrained) load_pretrained_backbone();
}

SegmentationNet::Conv SegmentationNet::make_conv(const std::string& name, int cin, int cout, int k,
                                                 int stride, int pad, bool bias) {
  Rng rng(mix_seed(seed_, init_counter_++));
  Tensor w(cout, cin, k, k);
  Conv c;
  c.stride = stride;
  c.padding = pad;
  if (bias) {
    // Output head: the usual uniform(+-1/sqrt(fan_in)) initialisation.
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
    for (double& v : w.values()) v = rng.uniform(-bound, bound);
    Tensor b(1, cout, 1, 1);
    for (double& v : b.values()) v = rng.uniform(-bound, bound);
    c.bias = ag::Var(std::move(b), true);
    params_.push_back({name + ".bias", c.bias});
  } else {
    // He initialisation in fan-out mode, as for torchvision ResNets.
    const double stddev = std::sqrt(2.0 / static_cast<double>(cout * k * k));
    for (double& v : w.values()) v = rng.normal(0.0, stddev);
  }
  c.weight = ag::Var(std::move(w), true);
  params_.insert(params_.end() - (bias ? 1 : 0), {name + ".weight", c.weight});
  return c;
}

SegmentationNet::Norm SegmentationNet::make_norm(const std::string& name, int channels) {
  Norm n;
  n.gamma = ag::Var(Tensor(1, channels, 1, 1, 1.0), true);
  n.beta = ag::Var(Tensor(1, channels, 1, 1, 0.0), true);
  buffer_storage_.emplace_back(channels);
  n.buffers = &buffer_storage_.back();
  params_.push_back({name + ".weight", n.gamma});
  params_.push_back({name + ".bias", n.beta});
  buffers_.push_back({name, n.buffers});
  return n;
}

ag::Var SegmentationNet::conv(const Conv& c, const ag::Var& x) const {
  return ag::conv2d(x, c.weight, c.bias, {c.stride, c.padding});
}

ag::Var SegmentationNet::norm(const Norm& n, const ag::Var& x) const {
  return ag::batch_norm(x, n.gamma, n.beta, *n.buffers, {.training = training_});
}

ag::Var SegmentationNet::basic_block(const BasicBlock& b, const ag::Var& x) const {
  ag::Var out = ag::relu(norm(b.bn1, conv(b.conv1, x)));
  out = norm(b.bn2, conv(b.conv2, out));
  const ag::Var shortcut = b.has_downsample ? norm(b.down_bn, conv(b.down, x)) : x;
  return ag::relu(ag::add(out, shortcut));
}

EncoderOutput SegmentationNet::encode(const Tensor& images) {
  if (images.c() != 3) throw ShapeError("encode: expected 3-channel input, got " + images.shape_string());
  const int stride = config_.total_stride();
  if (images.h() % stride != 0 || images.w() % stride != 0) {
    throw ShapeError("encode: input " + std::to_string(images.h()) + "x" + std::to_string(images.w()) +
                     " is not divisible by the encoder stride " + std::to_string(stride));
  }
  EncoderOutput out;
  ag::Var x(normalize_input(images), false);
  x = ag::relu(norm(stem_bn_, conv(stem_, x)));
  out.skips.push_back(x);
  x = ag::max_pool2d(x, 3, 2, 1);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (const auto& blk : stages_[s]) x = basic_block(blk, x);
    if (s + 1 < stages_.size()) out.skips.push_back(x);
  }
  out.bottleneck = x;
  return out;
}

ag::Var SegmentationNet::decode(const EncoderOutput& encoded) {
  if (!encoded.bottleneck.defined()) throw ShapeError("decode: missing bottleneck");
  if (encoded.skips.size() != 4) {
    throw ShapeError("decode: expected 4 skip maps, got " + std::to_string(encoded.skips.size()));
  }
  if (encoded.bottleneck.value().c() != config_.bottleneck_channels()) {
    throw ShapeError("decode: bottleneck has " + std::to_string(encoded.bottleneck.value().c()) +
                     " channels, model expects " + std::to_string(config_.bottleneck_channels()));
  }
  ag::Var x = encoded.bottleneck;
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    x = ag::upsample_nearest2x(x);
    if (i < encoded.skips.size()) {
      const ag::Var& skip = encoded.skips[encoded.skips.size() - 1 - i];
      const Tensor& sv = skip.value();
      const Tensor& xv = x.value();
      if (sv.h() != xv.h() || sv.w() != xv.w() || sv.n() != xv.n()) {
        throw ShapeError("decode: skip " + sv.shape_string() + " does not match decoder stage " +
                         xv.shape_string());
      }
      x = ag::concat_channels(x, skip);
    }
    const auto& d = decoder_[i];
    x = ag::relu(norm(d.bn1, conv(d.conv1, x)));
    x = ag::relu(norm(d.bn2, conv(d.conv2, x)));
  }
  return ag::sigmoid(conv(head_, x));
}

Encoded SegmentationNet::encode(const Image& img) {
  ag::NoGradGuard no_grad;
  const bool was_training = training_;
  training_ = false;
  const EncoderOutput out = encode(images_to_tensor({&img}));
  training_ = was_training;
  Encoded enc;
  enc.bottleneck = to_feature_map(out.bottleneck.value(), 0, config_.total_stride());
  int stride = 2;
  for (const auto& s : out.skips) {
    enc.skips.push_back(to_feature_map(s.value(), 0, stride));
    stride *= 2;
  }
  return enc;
}

PredictedMask SegmentationNet::decode(const Encoded& encoded) {
  ag::NoGradGuard no_grad;
  const bool was_training = training_;
  training_ = false;
  EncoderOutput in;
  in.bottleneck = ag::Var(encoded.bottleneck.values, false);
  for (const auto& s : encoded.skips) in.skips.emplace_back(s.values, false);
  const ag::Var probs = decode(in);
  training_ = was_training;
  return to_predicted_mask(probs.value(), 0);
}

Prediction SegmentationNet::forward(const Image& img) {
  Encoded enc = encode(img);
  PredictedMask mask = decode(enc);
  return {std::move(mask), std::move(enc.bottleneck)};
}

Tensor SegmentationNet::predict(const Tensor& images) {
  ag::NoGradGuard no_grad;
  const bool was_training = training_;
  training_ = false;
  const EncoderOutput enc = encode(images);
  Tensor probs = decode(enc).value();
  training_ = was_training;
  return probs;
}

std::size_t SegmentationNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.value().size();
  return n;
}

void SegmentationNet::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

void SegmentationNet::zero_head() {
  head_.weight.mutable_value().fill(0.0);
  head_.bias.mutable_value().fill(0.0);
}

void SegmentationNet::load_pretrained_backbone() {
  if (config_.pretrained_path.empty()) {
    spdlog::warn("no pretrained backbone weights available; encoder starts from random init");
    return;
  }
  if (!std::filesystem::exists(config_.pretrained_path)) {
    throw DataError("pretrained weights not found: " + config_.pretrained_path);
  }
  const CheckpointContents ckpt = read_checkpoint(config_.pretrained_path);
  std::size_t loaded = 0;
  for (auto& p : params_) {
    if (p.name.rfind("encoder.", 0) != 0) continue;
    const auto it = ckpt.tensors.find(p.name);
    if (it == ckpt.tensors.end()) continue;
    if (!it->second.same_shape(p.var.value())) {
      throw DataError("pretrained tensor " + p.name + " has shape " + it->second.shape_string());
    }
    p.var.mutable_value() = it->second;
    ++loaded;
  }
  spdlog::info("loaded {} pretrained encoder tensors from {}", loaded, config_.pretrained_path);
}

Tensor normalize_input(const Tensor& images) {
  Tensor out = images;
  for (int i = 0; i < out.n(); ++i) {
    for (int ch = 0; ch < 3; ++ch) {
      for (int y = 0; y < out.h(); ++y) {
        for (int x = 0; x < out.w(); ++x) {
          double& v = out.at(i, ch, y, x);
          v = (v - kMean[ch]) / kStd[ch];
        }
      }
    }
  }
  return out;
}

FeatureMap to_feature_map(const Tensor& batch, int index, int stride) {
  return {batch.slice(index), stride};
}

PredictedMask to_predicted_mask(const Tensor& probs, int index) {
  if (probs.c() != 1) throw ShapeError("to_predicted_mask: expected a single channel");
  PredictedMask m;
  m.height = probs.h();
  m.width = probs.w();
  auto s = probs.sample(index);
  m.probs.assign(s.begin(), s.end());
  // Saturated sigmoids can round to exactly 0 or 1 in double precision.
  for (double& p : m.probs) p = std::clamp(p, 1e-300, std::nextafter(1.0, 0.0));
  return m;
}

}  // namespace fds
