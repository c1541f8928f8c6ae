#include "cvhct/losses.hpp"

#include <cmath>

#include <torch/torch.h>

#include "cvhct/errors.hpp"
#include "cvhct/perceptual.hpp"

namespace cvhct {

torch::Tensor gram(const torch::Tensor& f, GramNorm norm) {
  if (f.dim() != 4) throw ShapeError("gram expects an (N, C, H, W) feature batch");
  const auto n = f.size(0), c = f.size(1), hw = f.size(2) * f.size(3);
  const auto flat = f.reshape({n, c, hw});
  auto g = torch::bmm(flat, flat.transpose(1, 2));
  if (norm == GramNorm::kPositions) g = g / static_cast<double>(hw);
  if (norm == GramNorm::kChannelsPositions) g = g / static_cast<double>(c * hw);
  return g;
}

torch::Tensor gram_mse(const torch::Tensor& ga, const torch::Tensor& gb) { return (ga - gb).pow(2).mean(); }

torch::Tensor style_distance(const std::vector<torch::Tensor>& fake, const std::vector<torch::Tensor>& target,
                             const std::vector<double>& tap_weights, GramNorm norm) {
  if (fake.size() != target.size() || fake.size() != tap_weights.size()) {
    throw ParameterError("style_distance needs one feature map and weight per tap");
  }
  double wsum = 0;
  for (double w : tap_weights) wsum += w;
  auto acc = torch::zeros({}, fake.front().options());
  for (std::size_t t = 0; t < fake.size(); ++t) {
    if (tap_weights[t] == 0) continue;
    acc = acc + tap_weights[t] * gram_mse(gram(fake[t], norm), gram(target[t], norm));
  }
  return acc / wsum;
}

DomainLossTerms domain_loss(const torch::Tensor& fake_b, const torch::Tensor& real_b, const torch::Tensor& fake_a,
                            const torch::Tensor& real_a, const PerceptualExtractor& extractor, GramNorm norm) {
  if (fake_b.size(0) != real_b.size(0) || fake_a.size(0) != real_a.size(0) || fake_b.size(0) != fake_a.size(0)) {
    throw ParameterError("domain loss needs equal batch sizes for both domains");
  }
  const auto& w = extractor.taps().weights;
  DomainLossTerms out;
  out.fa = style_distance(extractor.extract(fake_b), extractor.extract(real_b), w, norm);
  out.fb = style_distance(extractor.extract(fake_a), extractor.extract(real_a), w, norm);
  out.total = out.fa + out.fb;
  return out;
}

DomainLossTerms domain_loss(const torch::Tensor& batch_a, const torch::Tensor& batch_b, const ImageMap& g_a2b,
                            const ImageMap& g_b2a, const PerceptualExtractor& extractor, GramNorm norm) {
  if (batch_a.size(0) != batch_b.size(0)) throw ParameterError("domain loss needs equal batch sizes for both domains");
  return domain_loss(g_a2b(batch_a), batch_b, g_b2a(batch_b), batch_a, extractor, norm);
}

torch::Tensor adversarial_loss_generator(const torch::Tensor& scores_fake) { return (1.0 - scores_fake).pow(2).mean(); }

torch::Tensor adversarial_loss_discriminator(const torch::Tensor& scores_real, const torch::Tensor& scores_fake) {
  return (1.0 - scores_real).pow(2).mean() + scores_fake.pow(2).mean();
}

torch::Tensor cycle_loss(const torch::Tensor& rec_a, const torch::Tensor& a, const torch::Tensor& rec_b,
                         const torch::Tensor& b) {
  return (rec_a - a).abs().mean() + (rec_b - b).abs().mean();
}

torch::Tensor cycle_loss(const torch::Tensor& a, const torch::Tensor& b, const ImageMap& g_a2b, const ImageMap& g_b2a) {
  return cycle_loss(g_b2a(g_a2b(a)), a, g_a2b(g_b2a(b)), b);
}

torch::Tensor identity_loss(const torch::Tensor& a, const torch::Tensor& b, const ImageMap& g_a2b,
                            const ImageMap& g_b2a) {
  return (g_a2b(b) - b).abs().mean() + (g_b2a(a) - a).abs().mean();
}

const std::vector<std::string>& LossBreakdown::field_names() {
  static const std::vector<std::string> names = {"adv_g_a2b", "adv_g_b2a", "adv_d_a", "adv_d_b",
                                                 "cyc",       "idt",       "domain",  "total_g"};
  return names;
}

std::vector<double> LossBreakdown::values() const {
  return {adv_g_a2b, adv_g_b2a, adv_d_a, adv_d_b, cyc, idt, domain, total_g};
}

void require_finite(const std::string& term, double value, long step) {
  if (!std::isfinite(value)) throw NumericHealthError(term, step, value);
}

double total_generator_loss(const LossBreakdown& p, const LossWeights& w, long step) {
  require_finite("adv_g_a2b", p.adv_g_a2b, step);
  require_finite("adv_g_b2a", p.adv_g_b2a, step);
  require_finite("cyc", p.cyc, step);
  require_finite("idt", p.idt, step);
  require_finite("domain", p.domain, step);
  return p.adv_g_a2b + p.adv_g_b2a + w.lambda1 * p.cyc + w.lambda2 * p.idt + w.lambda3 * p.domain;
}

}  // namespace cvhct
