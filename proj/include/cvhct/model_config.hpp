#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cvhct {

enum class SpatialGate { kSigmoid, kSoftmax };

/// Attention-augmented generator layout.
///
/// Every convolution is stride 1 with reflection same-padding, so each layer
/// keeps the spatial size. `cbam_after` lists 1-based convolution indices that
/// are followed by a CBAM block; the default {2, 4, 5} leaves the last two
/// convolutions and the output layer without attention.
struct GeneratorConfig {
  int n_conv_layers = 7;
  int filters = 64;
  int kernel = 4;
  int stride = 1;
  int n_cbam = 3;
  int cbam_mlp_reduction = 8;
  int spatial_kernel = 7;
  std::vector<int> cbam_after = {2, 4, 5};
  bool use_cbam = true;
  SpatialGate spatial_gate = SpatialGate::kSigmoid;
  double leaky_slope = 0.2;
  int in_channels = 1;
  /// Adds atanh((1 - 1e-3) x) to the last pre-activation so the generator
  /// learns a residual over its input and starts near the identity map.
  bool input_skip = true;
};

/// Patch discriminator: `strides.size()` hidden 4x4 convolutions followed by a
/// single-channel 4x4 output convolution and a sigmoid.
struct DiscriminatorConfig {
  int kernel = 4;
  int padding = 1;
  int base_filters = 64;
  int max_filters = 512;
  std::vector<int> strides = {2, 2, 2, 1, 1, 1, 1};
  /// 1-based hidden layers followed by instance normalization.
  std::vector<int> norm_layers = {2, 3, 4, 5, 6};
  double leaky_slope = 0.2;
  int in_channels = 1;

  int n_hidden() const { return static_cast<int>(strides.size()); }
};

/// Gram-matrix taps into the perceptual network.
struct StyleTaps {
  std::vector<std::string> layer_ids = {"relu4_3", "relu5_3"};
  std::vector<double> weights = {1.0, 1.0};
};

struct PerceptualConfig {
  /// VGG16 weights in the tensor archive format; empty means "use fallback".
  std::string weights_path;
  bool allow_random_fallback = true;
  std::uint64_t fallback_seed = 20211;
  StyleTaps taps;
};

struct LossWeights {
  double lambda1 = 1.0;  ///< cycle consistency
  double lambda2 = 0.5;  ///< identity
  double lambda3 = 1.0;  ///< domain (gram) loss
};

/// Gram matrix scaling: none, 1/(H*W), or 1/(C*H*W).
enum class GramNorm { kNone, kPositions, kChannelsPositions };

enum class Ablation { kFull, kDomainLossOnly, kCbamOnly, kPlainCycleGan };
enum class OptimizerKind { kAdam, kMomentum };

std::string to_string(Ablation a);
Ablation parse_ablation(const std::string& s);
std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);
std::string to_string(GramNorm g);
GramNorm parse_gram_norm(const std::string& s);
std::string to_string(SpatialGate g);
SpatialGate parse_spatial_gate(const std::string& s);

struct TrainConfig {
  int epochs = 50;
  double lr = 1e-4;
  double momentum_beta = 0.5;  ///< Adam beta1, or heavy-ball momentum
  double beta2 = 0.999;
  int batch = 32;
  LossWeights weights;
  GramNorm gram_norm = GramNorm::kPositions;
  Ablation ablation = Ablation::kFull;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 0;
  /// Per-epoch checkpoints retained on disk (0 keeps all).
  int keep_checkpoints = 2;
};

void validate(const GeneratorConfig& c);
void validate(const DiscriminatorConfig& c);
void validate(const StyleTaps& t);
void validate(const LossWeights& w);
void validate(const TrainConfig& c);

/// Architecture and loss switches implied by an ablation.
struct AblationSwitches {
  bool use_cbam;
  bool use_domain_loss;
};
AblationSwitches switches_for(Ablation a);

}  // namespace cvhct
