#include "cvhct/discriminator.hpp"

#include <algorithm>

#include <torch/nn/init.h>
#include <torch/torch.h>

#include "cvhct/errors.hpp"

namespace cvhct {

int discriminator_output_side(const DiscriminatorConfig& cfg, int input) {
  int n = input;
  for (int s : cfg.strides) {
    const int span = n + 2 * cfg.padding - cfg.kernel;
    if (span < 0) return 0;
    n = span / s + 1;
  }
  const int span = n + 2 * cfg.padding - cfg.kernel;
  if (span < 0) return 0;
  return span + 1;
}

int DiscriminatorImpl::hidden_channels(int i) const {
  long c = cfg_.base_filters;
  for (int k = 0; k < i; ++k) c = std::min<long>(c * 2, cfg_.max_filters);
  return static_cast<int>(c);
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig cfg) : cfg_(std::move(cfg)) {
  validate(cfg_);
  int in = cfg_.in_channels;
  for (int i = 0; i < cfg_.n_hidden(); ++i) {
    const int out = hidden_channels(i);
    auto conv = torch::nn::Conv2d(
        torch::nn::Conv2dOptions(in, out, cfg_.kernel).stride(cfg_.strides[i]).padding(cfg_.padding));
    hidden_.push_back(register_module("conv" + std::to_string(i + 1), conv));
    const bool normed = std::find(cfg_.norm_layers.begin(), cfg_.norm_layers.end(), i + 1) != cfg_.norm_layers.end();
    norms_.push_back(normed ? register_module("norm" + std::to_string(i + 1),
                                              torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out)))
                            : torch::nn::InstanceNorm2d{nullptr});
    in = out;
  }
  head_ = register_module(
      "head", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, 1, cfg_.kernel).stride(1).padding(cfg_.padding)));

  torch::NoGradGuard guard;
  for (auto& p : named_parameters()) {
    if (p.key().ends_with("weight")) {
      torch::nn::init::normal_(p.value(), 0.0, 0.02);
    } else {
      p.value().zero_();
    }
  }
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != cfg_.in_channels) throw ShapeError("discriminator expects (N, 1, H, W)");
  const int side = static_cast<int>(std::min(x.size(2), x.size(3)));
  if (discriminator_output_side(cfg_, side) < 1) {
    throw ShapeError("discriminator input " + std::to_string(side) + " is smaller than its receptive field");
  }
  auto h = x;
  for (std::size_t i = 0; i < hidden_.size(); ++i) {
    h = hidden_[i](h);
    if (!norms_[i].is_empty()) h = norms_[i](h);
    h = torch::leaky_relu(h, cfg_.leaky_slope);
  }
  return torch::sigmoid(head_(h));
}

}  // namespace cvhct
