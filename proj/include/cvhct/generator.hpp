#pragma once

#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/conv.h>
#include <torch/nn/modules/padding.h>
#include <torch/nn/pimpl.h>

#include "cvhct/model_config.hpp"

namespace cvhct {

/// Channel gate: sigmoid(MLP(avgpool(f)) + MLP(maxpool(f))) with one shared
/// two-layer MLP (1x1 convolutions, hidden width channels / reduction).
class ChannelAttentionImpl : public torch::nn::Module {
 public:
  ChannelAttentionImpl(int channels, int reduction);

  /// (N, C, 1, 1) weights in (0, 1).
  torch::Tensor weights(const torch::Tensor& f);
  torch::Tensor forward(const torch::Tensor& f) { return f * weights(f); }
  void zero_init();

 private:
  torch::Tensor mlp(const torch::Tensor& pooled);

  torch::nn::Conv2d fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(ChannelAttention);

/// Spatial gate over [channel-mean, channel-max] maps through a k x k
/// convolution. Sigmoid gives per-position weights in (0, 1); softmax
/// normalizes across all positions of each map instead.
class SpatialAttentionImpl : public torch::nn::Module {
 public:
  SpatialAttentionImpl(int kernel, SpatialGate gate);

  /// (N, 1, H, W) weights.
  torch::Tensor weights(const torch::Tensor& f);
  torch::Tensor forward(const torch::Tensor& f) { return f * weights(f); }
  void zero_init();

 private:
  torch::nn::Conv2d conv_{nullptr};
  SpatialGate gate_;
};
TORCH_MODULE(SpatialAttention);

/// Channel attention followed by spatial attention on the channel-gated map.
class CbamImpl : public torch::nn::Module {
 public:
  CbamImpl(int channels, int reduction, int spatial_kernel, SpatialGate gate);

  torch::Tensor forward(const torch::Tensor& f);

  struct Maps {
    torch::Tensor channel;  ///< (N, C, 1, 1)
    torch::Tensor spatial;  ///< (N, 1, H, W)
    torch::Tensor output;
  };
  Maps forward_with_maps(const torch::Tensor& f);

  /// Test hook: both gates return 1 so the block is the identity.
  void force_unit_gates(bool on) { unit_gates_ = on; }
  void zero_init();

  ChannelAttention channel() const { return channel_; }
  SpatialAttention spatial() const { return spatial_; }

 private:
  ChannelAttention channel_{nullptr};
  SpatialAttention spatial_{nullptr};
  bool unit_gates_ = false;
};
TORCH_MODULE(Cbam);

/// Fully convolutional generator: stride-1 reflection-padded convolutions with
/// LeakyReLU, CBAM blocks after the configured convolutions, and a tanh output
/// layer. Output shape equals input shape.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorConfig cfg);

  torch::Tensor forward(const torch::Tensor& x);
  /// Forward pass that also records the (N, C, H, W) shape after every stage.
  torch::Tensor forward_traced(const torch::Tensor& x, std::vector<std::vector<int64_t>>& shapes);

  const GeneratorConfig& config() const { return cfg_; }
  const std::vector<Cbam>& cbam_blocks() const { return cbams_; }
  void force_unit_gates(bool on);

 private:
  torch::Tensor run(const torch::Tensor& x, std::vector<std::vector<int64_t>>* shapes);

  GeneratorConfig cfg_;
  torch::nn::ReflectionPad2d pad_{nullptr};
  std::vector<torch::nn::Conv2d> convs_;
  std::vector<Cbam> cbams_;
  std::vector<int> cbam_at_;  ///< per conv index (0-based), index into cbams_ or -1
};
TORCH_MODULE(Generator);

}  // namespace cvhct
