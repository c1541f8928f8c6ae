#pragma once

#include <string>
#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/conv.h>
#include <torch/nn/pimpl.h>

#include "cvhct/model_config.hpp"

namespace cvhct {

/// VGG16 convolutional trunk (13 convolutions, 5 stages). Layer names follow
/// "conv{stage}_{index}" and taps are addressed as "relu{stage}_{index}".
class Vgg16FeaturesImpl : public torch::nn::Module {
 public:
  Vgg16FeaturesImpl();

  /// Activations at `tap_ids`, in the order given. Runs only as deep as the
  /// deepest requested tap. Input is (N, 3, H, W) in ImageNet-normalized range.
  std::vector<torch::Tensor> forward(const torch::Tensor& x, const std::vector<std::string>& tap_ids);

  /// He-normal weights, zero biases, from a private generator seeded with `seed`.
  void init_random(std::uint64_t seed);

  static const std::vector<std::string>& layer_names();
  static int channels_of(const std::string& tap_id);
  /// Throws ConfigError for names outside relu1_1..relu5_3.
  static int layer_index(const std::string& tap_id);

 private:
  std::vector<torch::nn::Conv2d> convs_;
};
TORCH_MODULE(Vgg16Features);

/// Frozen style feature extractor for the gram-matrix domain loss.
///
/// Single-channel inputs in [-1, 1] are mapped to [0, 1], replicated to three
/// channels and normalized with the ImageNet channel statistics before the
/// VGG16 trunk. Parameters never require gradients.
class PerceptualExtractor {
 public:
  /// Loads `cfg.weights_path` (tensor archive with "vgg16.<layer>.weight|bias"
  /// entries) or, when the path is empty or missing and the fallback is
  /// allowed, builds the fixed-seed random network. Throws ConfigError when
  /// neither source is available.
  explicit PerceptualExtractor(const PerceptualConfig& cfg);

  std::vector<torch::Tensor> extract(const torch::Tensor& x) const;

  const StyleTaps& taps() const { return cfg_.taps; }
  std::vector<int> tap_channels() const;
  bool pretrained() const { return pretrained_; }
  /// SHA-256 of the weight file, or "random-fallback:<seed>".
  const std::string& weights_id() const { return weights_id_; }
  /// Hash of every parameter value; used to assert frozen-ness.
  std::string parameter_digest() const;

  Vgg16Features& network() { return net_; }

 private:
  PerceptualConfig cfg_;
  mutable Vgg16Features net_;
  bool pretrained_ = false;
  std::string weights_id_;
};

}  // namespace cvhct
