#include "cvhct/generator.hpp"

#include <torch/nn/functional/activation.h>
#include <torch/nn/init.h>
#include <torch/torch.h>

#include "cvhct/errors.hpp"

namespace cvhct {

namespace F = torch::nn::functional;

namespace {
// Keeps atanh finite at the window edges: x = -1 maps to atanh(-0.999).
constexpr double kSkipMargin = 1e-3;
// Shrinks the residual head so the initial map is within about 1 HU of the
// identity without zeroing the layer.
constexpr double kResidualInitScale = 1e-3;
}  // namespace

ChannelAttentionImpl::ChannelAttentionImpl(int channels, int reduction) {
  const int hidden = std::max(1, channels / reduction);
  fc1_ = register_module("fc1", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, hidden, 1)));
  fc2_ = register_module("fc2", torch::nn::Conv2d(torch::nn::Conv2dOptions(hidden, channels, 1)));
}

torch::Tensor ChannelAttentionImpl::mlp(const torch::Tensor& pooled) { return fc2_(torch::relu(fc1_(pooled))); }

torch::Tensor ChannelAttentionImpl::weights(const torch::Tensor& f) {
  const auto avg = f.mean({2, 3}, /*keepdim=*/true);
  const auto max = f.amax({2, 3}, /*keepdim=*/true);
  return torch::sigmoid(mlp(avg) + mlp(max));
}

void ChannelAttentionImpl::zero_init() {
  torch::NoGradGuard guard;
  for (auto& p : parameters()) p.zero_();
}

SpatialAttentionImpl::SpatialAttentionImpl(int kernel, SpatialGate gate) : gate_(gate) {
  conv_ = register_module(
      "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(2, 1, kernel).padding(kernel / 2).bias(false)));
}

torch::Tensor SpatialAttentionImpl::weights(const torch::Tensor& f) {
  const auto pooled = torch::cat({f.mean(1, /*keepdim=*/true), f.amax(1, /*keepdim=*/true)}, 1);
  const auto logits = conv_(pooled);
  if (gate_ == SpatialGate::kSigmoid) return torch::sigmoid(logits);
  const auto sizes = logits.sizes().vec();
  return torch::softmax(logits.flatten(1), 1).view(sizes);
}

void SpatialAttentionImpl::zero_init() {
  torch::NoGradGuard guard;
  conv_->weight.zero_();
}

CbamImpl::CbamImpl(int channels, int reduction, int spatial_kernel, SpatialGate gate) {
  channel_ = register_module("channel", ChannelAttention(channels, reduction));
  spatial_ = register_module("spatial", SpatialAttention(spatial_kernel, gate));
}

CbamImpl::Maps CbamImpl::forward_with_maps(const torch::Tensor& f) {
  Maps m;
  if (unit_gates_) {
    m.channel = torch::ones({f.size(0), f.size(1), 1, 1}, f.options());
    m.spatial = torch::ones({f.size(0), 1, f.size(2), f.size(3)}, f.options());
    m.output = f;
    return m;
  }
  m.channel = channel_->weights(f);
  const auto gated = f * m.channel;
  m.spatial = spatial_->weights(gated);
  m.output = gated * m.spatial;
  return m;
}

torch::Tensor CbamImpl::forward(const torch::Tensor& f) {
  if (unit_gates_) return f;
  const auto gated = channel_(f);
  return spatial_(gated);
}

void CbamImpl::zero_init() {
  channel_->zero_init();
  spatial_->zero_init();
}

GeneratorImpl::GeneratorImpl(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
  validate(cfg_);
  const int k = cfg_.kernel;
  // Even kernels need asymmetric same-padding: k/2 before, k-1-k/2 after.
  const int before = k / 2, after = k - 1 - k / 2;
  pad_ = register_module("pad", torch::nn::ReflectionPad2d(
                                    torch::nn::ReflectionPad2dOptions({before, after, before, after})));
  cbam_at_.assign(cfg_.n_conv_layers, -1);
  if (cfg_.use_cbam) {
    for (std::size_t i = 0; i < cfg_.cbam_after.size(); ++i) cbam_at_[cfg_.cbam_after[i] - 1] = static_cast<int>(i);
  }
  for (int i = 0; i < cfg_.n_conv_layers; ++i) {
    const int in = i == 0 ? cfg_.in_channels : cfg_.filters;
    const int out = i + 1 == cfg_.n_conv_layers ? cfg_.in_channels : cfg_.filters;
    auto conv = torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).stride(1));
    convs_.push_back(register_module("conv" + std::to_string(i + 1), conv));
  }
  if (cfg_.use_cbam) {
    for (std::size_t i = 0; i < cfg_.cbam_after.size(); ++i) {
      cbams_.push_back(register_module("cbam" + std::to_string(i + 1),
                                       Cbam(cfg_.filters, cfg_.cbam_mlp_reduction, cfg_.spatial_kernel,
                                            cfg_.spatial_gate)));
    }
  }
  // He initialization for the leaky trunk keeps activations at unit scale
  // through the seven stacked layers.
  torch::NoGradGuard guard;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    torch::nn::init::kaiming_normal_(convs_[i]->weight, cfg_.leaky_slope, torch::kFanIn, torch::kLeakyReLU);
    convs_[i]->bias.zero_();
  }
  // With the skip, a near-zero residual head makes the initial map the identity.
  if (cfg_.input_skip) convs_.back()->weight.mul_(kResidualInitScale);
}

torch::Tensor GeneratorImpl::run(const torch::Tensor& x, std::vector<std::vector<int64_t>>* shapes) {
  if (x.dim() != 4) throw ShapeError("generator expects an (N, C, H, W) tensor");
  if (x.size(1) != cfg_.in_channels) throw ShapeError("generator input has the wrong channel count");
  if (x.size(2) < cfg_.kernel || x.size(3) < cfg_.kernel) {
    throw ShapeError("generator input " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)) +
                     " is smaller than the " + std::to_string(cfg_.kernel) + "x" + std::to_string(cfg_.kernel) +
                     " kernel");
  }
  auto h = x;
  const double slope = cfg_.leaky_slope;
  for (int i = 0; i < cfg_.n_conv_layers; ++i) {
    h = convs_[i](pad_(h));
    const bool last = i + 1 == cfg_.n_conv_layers;
    if (last && cfg_.input_skip) h = h + torch::atanh(x * (1.0 - kSkipMargin));
    h = last ? torch::tanh(h) : torch::leaky_relu(h, slope);
    if (shapes) shapes->push_back(h.sizes().vec());
    if (cbam_at_[i] >= 0) {
      h = cbams_[cbam_at_[i]](h);
      if (shapes) shapes->push_back(h.sizes().vec());
    }
  }
  return h;
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x) { return run(x, nullptr); }

torch::Tensor GeneratorImpl::forward_traced(const torch::Tensor& x, std::vector<std::vector<int64_t>>& shapes) {
  return run(x, &shapes);
}

void GeneratorImpl::force_unit_gates(bool on) {
  for (auto& c : cbams_) c->force_unit_gates(on);
}

}  // namespace cvhct
