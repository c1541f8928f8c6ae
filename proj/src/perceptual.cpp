#include "cvhct/perceptual.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "cvhct/archive.hpp"
#include "cvhct/errors.hpp"
#include "cvhct/hash.hpp"

namespace cvhct {

namespace {

// (stage, convolutions per stage) of VGG16.
constexpr int kStageDepth[5] = {2, 2, 3, 3, 3};
constexpr int kStageChannels[5] = {64, 128, 256, 512, 512};

}  // namespace

const std::vector<std::string>& Vgg16FeaturesImpl::layer_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (int s = 0; s < 5; ++s) {
      for (int i = 0; i < kStageDepth[s]; ++i) n.push_back("conv" + std::to_string(s + 1) + "_" + std::to_string(i + 1));
    }
    return n;
  }();
  return names;
}

int Vgg16FeaturesImpl::layer_index(const std::string& tap_id) {
  if (tap_id.starts_with("relu")) {
    const std::string conv = "conv" + tap_id.substr(4);
    const auto& names = layer_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == conv) return static_cast<int>(i);
    }
  }
  throw ConfigError("unknown perceptual tap '" + tap_id + "' (expected relu1_1 .. relu5_3)");
}

int Vgg16FeaturesImpl::channels_of(const std::string& tap_id) {
  int idx = layer_index(tap_id);
  for (int s = 0; s < 5; ++s) {
    if (idx < kStageDepth[s]) return kStageChannels[s];
    idx -= kStageDepth[s];
  }
  return 0;
}

Vgg16FeaturesImpl::Vgg16FeaturesImpl() {
  int in = 3;
  std::size_t k = 0;
  for (int s = 0; s < 5; ++s) {
    for (int i = 0; i < kStageDepth[s]; ++i, ++k) {
      const int out = kStageChannels[s];
      convs_.push_back(register_module(layer_names()[k],
                                       torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1))));
      in = out;
    }
  }
}

void Vgg16FeaturesImpl::init_random(std::uint64_t seed) {
  torch::NoGradGuard guard;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  for (auto& c : convs_) {
    const double fan_in = static_cast<double>(c->weight.size(1) * 9);
    c->weight.normal_(0.0, std::sqrt(2.0 / fan_in), gen);
    c->bias.zero_();
  }
}

std::vector<torch::Tensor> Vgg16FeaturesImpl::forward(const torch::Tensor& x, const std::vector<std::string>& tap_ids) {
  std::vector<int> want;
  int deepest = -1;
  for (const auto& t : tap_ids) {
    want.push_back(layer_index(t));
    deepest = std::max(deepest, want.back());
  }
  std::vector<torch::Tensor> acts(convs_.size());
  auto h = x;
  int k = 0;
  for (int s = 0; s < 5 && k <= deepest; ++s) {
    if (s > 0) h = torch::max_pool2d(h, 2, 2);
    for (int i = 0; i < kStageDepth[s] && k <= deepest; ++i, ++k) {
      h = torch::relu(convs_[k](h));
      acts[k] = h;
    }
  }
  std::vector<torch::Tensor> out;
  for (int w : want) out.push_back(acts[w]);
  return out;
}

PerceptualExtractor::PerceptualExtractor(const PerceptualConfig& cfg) : cfg_(cfg) {
  validate(cfg_.taps);
  for (const auto& t : cfg_.taps.layer_ids) Vgg16FeaturesImpl::layer_index(t);
  const bool have_file = !cfg_.weights_path.empty() && std::filesystem::exists(cfg_.weights_path);
  if (have_file) {
    const auto ar = TensorArchive::load(cfg_.weights_path);
    load_module(ar, "vgg16", *net_);
    pretrained_ = true;
    weights_id_ = sha256_file(cfg_.weights_path);
  } else if (cfg_.allow_random_fallback) {
    net_->init_random(cfg_.fallback_seed);
    weights_id_ = "random-fallback:" + std::to_string(cfg_.fallback_seed);
  } else {
    throw ConfigError(cfg_.weights_path.empty()
                          ? "no perceptual weights configured and the random fallback is disabled"
                          : "perceptual weights '" + cfg_.weights_path + "' not found and the random fallback is disabled");
  }
  for (auto& p : net_->parameters()) p.set_requires_grad(false);
  net_->eval();
}

std::vector<torch::Tensor> PerceptualExtractor::extract(const torch::Tensor& x) const {
  if (x.dim() != 4 || x.size(1) != 1) throw ShapeError("perceptual extractor expects (N, 1, H, W)");
  static const auto mean = torch::tensor({0.485f, 0.456f, 0.406f}).view({1, 3, 1, 1});
  static const auto std = torch::tensor({0.229f, 0.224f, 0.225f}).view({1, 3, 1, 1});
  const auto unit = (x + 1.0) * 0.5;
  const auto rgb = (unit.expand({-1, 3, -1, -1}) - mean) / std;
  return net_->forward(rgb, cfg_.taps.layer_ids);
}

std::vector<int> PerceptualExtractor::tap_channels() const {
  std::vector<int> out;
  for (const auto& t : cfg_.taps.layer_ids) out.push_back(Vgg16FeaturesImpl::channels_of(t));
  return out;
}

std::string PerceptualExtractor::parameter_digest() const {
  std::vector<std::uint8_t> buf;
  for (const auto& p : net_->parameters()) {
    const auto c = p.detach().contiguous();
    const auto* b = reinterpret_cast<const std::uint8_t*>(c.data_ptr<float>());
    buf.insert(buf.end(), b, b + c.numel() * sizeof(float));
  }
  return sha256_hex(buf);
}

}  // namespace cvhct
