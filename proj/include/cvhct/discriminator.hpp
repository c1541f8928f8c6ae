#pragma once

#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/conv.h>
#include <torch/nn/modules/instancenorm.h>
#include <torch/nn/pimpl.h>

#include "cvhct/model_config.hpp"

namespace cvhct {

/// Spatial side of the score map for a square input of side `input`, by
/// standard convolution arithmetic floor((n + 2p - k) / s) + 1 per layer.
/// Returns 0 or less when some layer would have no output.
int discriminator_output_side(const DiscriminatorConfig& cfg, int input);

/// Patch-level real/fake critic. No batch-coupled layers: each image's score
/// map depends on that image alone.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorConfig cfg);

  /// (N, 1, H', W') scores in (0, 1).
  torch::Tensor forward(const torch::Tensor& x);

  const DiscriminatorConfig& config() const { return cfg_; }
  /// Output channels of hidden layer i (0-based).
  int hidden_channels(int i) const;

 private:
  DiscriminatorConfig cfg_;
  std::vector<torch::nn::Conv2d> hidden_;
  std::vector<torch::nn::InstanceNorm2d> norms_;  ///< null where unnormalized
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(Discriminator);

}  // namespace cvhct
