#pragma once

#include <functional>
#include <string>
#include <vector>

#include <torch/types.h>

#include "cvhct/model_config.hpp"

namespace cvhct {

class PerceptualExtractor;

using ImageMap = std::function<torch::Tensor(const torch::Tensor&)>;

/// Per-element gram matrices of an (N, C, H, W) feature batch: (N, C, C),
/// G = F F^T with F the (C, H*W) flattening, scaled per `norm`.
torch::Tensor gram(const torch::Tensor& f, GramNorm norm = GramNorm::kPositions);

/// Mean over batch and matrix entries of the squared gram difference.
torch::Tensor gram_mse(const torch::Tensor& ga, const torch::Tensor& gb);

/// Tap-weighted mean of per-tap gram MSEs. Both lists are one tensor per tap.
torch::Tensor style_distance(const std::vector<torch::Tensor>& fake, const std::vector<torch::Tensor>& target,
                             const std::vector<double>& tap_weights, GramNorm norm);

struct DomainLossTerms {
  torch::Tensor fa;     ///< G_A2B(a) against b
  torch::Tensor fb;     ///< G_B2A(b) against a
  torch::Tensor total;  ///< fa + fb
};

/// Gram-matrix domain loss on already translated batches. `fake_b` = G_A2B(a),
/// `fake_a` = G_B2A(b). Throws ParameterError when batch sizes differ.
DomainLossTerms domain_loss(const torch::Tensor& fake_b, const torch::Tensor& real_b, const torch::Tensor& fake_a,
                            const torch::Tensor& real_a, const PerceptualExtractor& extractor,
                            GramNorm norm = GramNorm::kPositions);
DomainLossTerms domain_loss(const torch::Tensor& batch_a, const torch::Tensor& batch_b, const ImageMap& g_a2b,
                            const ImageMap& g_b2a, const PerceptualExtractor& extractor,
                            GramNorm norm = GramNorm::kPositions);

/// Least-squares generator term: mean (1 - D(fake))^2.
torch::Tensor adversarial_loss_generator(const torch::Tensor& scores_fake);
/// Least-squares critic term: mean (1 - D(real))^2 + mean D(fake)^2.
torch::Tensor adversarial_loss_discriminator(const torch::Tensor& scores_real, const torch::Tensor& scores_fake);

/// mean |rec_a - a| + mean |rec_b - b|.
torch::Tensor cycle_loss(const torch::Tensor& rec_a, const torch::Tensor& a, const torch::Tensor& rec_b,
                         const torch::Tensor& b);
torch::Tensor cycle_loss(const torch::Tensor& a, const torch::Tensor& b, const ImageMap& g_a2b, const ImageMap& g_b2a);

/// mean |G_A2B(b) - b| + mean |G_B2A(a) - a|; generators see target-domain input.
torch::Tensor identity_loss(const torch::Tensor& a, const torch::Tensor& b, const ImageMap& g_a2b,
                            const ImageMap& g_b2a);

struct LossBreakdown {
  double adv_g_a2b = 0, adv_g_b2a = 0, adv_d_a = 0, adv_d_b = 0;
  double cyc = 0, idt = 0, domain = 0, total_g = 0;

  static const std::vector<std::string>& field_names();
  std::vector<double> values() const;
};

/// adv_g_a2b + adv_g_b2a + l1*cyc + l2*idt + l3*domain. Throws
/// NumericHealthError naming the first non-finite part (`step` is reported).
double total_generator_loss(const LossBreakdown& parts, const LossWeights& w, long step = -1);

/// Throws NumericHealthError if `value` is not finite.
void require_finite(const std::string& term, double value, long step);

}  // namespace cvhct
