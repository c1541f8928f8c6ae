#include <gtest/gtest.h>

#include <torch/torch.h>

#include "cvhct/discriminator.hpp"
#include "cvhct/errors.hpp"
#include "cvhct/generator.hpp"
#include "cvhct/losses.hpp"
#include "cvhct/perceptual.hpp"
#include "gradcheck.hpp"

using namespace cvhct;

namespace {

GeneratorConfig small_generator(bool cbam = true) {
  GeneratorConfig g;
  g.filters = 16;
  g.use_cbam = cbam;
  return g;
}

void copy_parameters(const torch::nn::Module& from, torch::nn::Module& to) {
  torch::NoGradGuard ng;
  auto src = from.named_parameters();
  for (auto& p : to.named_parameters()) p.value().copy_(src[p.key()]);
}

}  // namespace

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

TEST(Generator, PreservesShapeAtEveryLayer) {
  torch::manual_seed(0);
  Generator g(GeneratorConfig{});
  torch::NoGradGuard ng;
  for (int side : {80, 96, 512}) {
    std::vector<std::vector<int64_t>> shapes;
    const auto y = g->forward_traced(torch::rand({1, 1, side, side}) * 2 - 1, shapes);
    EXPECT_EQ(y.sizes(), (std::vector<int64_t>{1, 1, side, side}));
    ASSERT_FALSE(shapes.empty());
    for (const auto& s : shapes) {
      EXPECT_EQ(s[2], side);
      EXPECT_EQ(s[3], side);
    }
    EXPECT_LT(y.abs().max().item<float>(), 1.0f);
  }
}

TEST(Generator, LayoutHasSevenConvolutionsAndThreeCbams) {
  Generator g(GeneratorConfig{});
  EXPECT_EQ(g->cbam_blocks().size(), 3u);
  int convs = 0;
  for (const auto& c : g->named_children()) convs += c.key().rfind("conv", 0) == 0;
  EXPECT_EQ(convs, 7);
  Generator plain(small_generator(false));
  EXPECT_TRUE(plain->cbam_blocks().empty());
}

TEST(Generator, AttentionWeightsStayInsideUnitInterval) {
  torch::manual_seed(1);
  Cbam block(16, 8, 7, SpatialGate::kSigmoid);
  torch::NoGradGuard ng;
  for (float scale : {0.1f, 1.0f, 3.0f}) {
    const auto maps = block->forward_with_maps(torch::randn({2, 16, 20, 20}) * scale);
    EXPECT_GT(maps.channel.min().item<float>(), 0.0f);
    EXPECT_LT(maps.channel.max().item<float>(), 1.0f);
    EXPECT_GT(maps.spatial.min().item<float>(), 0.0f);
    EXPECT_LT(maps.spatial.max().item<float>(), 1.0f);
  }
  Generator g(small_generator());
  for (auto b : g->cbam_blocks()) {
    const auto maps = b->forward_with_maps(torch::randn({1, 16, 40, 40}));
    EXPECT_TRUE((maps.channel > 0).all().item<bool>() && (maps.channel < 1).all().item<bool>());
    EXPECT_TRUE((maps.spatial > 0).all().item<bool>() && (maps.spatial < 1).all().item<bool>());
  }
}

TEST(Generator, ZeroInitGatesGiveHalfAndQuarter) {
  Cbam block(4, 2, 7, SpatialGate::kSigmoid);
  block->zero_init();
  torch::NoGradGuard ng;
  const auto f = torch::randn({1, 4, 9, 9});
  EXPECT_TRUE(torch::allclose(block->channel()->weights(f), torch::full({1, 4, 1, 1}, 0.5)));
  EXPECT_TRUE(torch::allclose(block->forward(f), 0.25 * f, 1e-6, 1e-7));
  ChannelAttention single(1, 1);
  single->zero_init();
  EXPECT_FLOAT_EQ(single->weights(torch::zeros({1, 1, 3, 3})).item<float>(), 0.5f);
}

TEST(Generator, ConstantFeaturesGiveUniformGates) {
  torch::manual_seed(2);
  Cbam block(8, 2, 7, SpatialGate::kSigmoid);
  torch::NoGradGuard ng;
  const auto maps = block->forward_with_maps(torch::full({1, 8, 11, 11}, 0.7));
  // Channel gating keeps the map spatially constant; the spatial gate is
  // then constant wherever its kernel clears the zero border.
  const auto interior = maps.spatial.index({0, 0, torch::indexing::Slice(3, 8), torch::indexing::Slice(3, 8)});
  EXPECT_LT((interior - interior.mean()).abs().max().item<float>(), 1e-6f);
  EXPECT_TRUE(torch::equal(block->forward(torch::zeros({1, 8, 5, 5})), torch::zeros({1, 8, 5, 5})));
}

TEST(Generator, UnitGatesMatchNoCbamGenerator) {
  torch::manual_seed(3);
  Generator with(GeneratorConfig{}), without([] {
    GeneratorConfig g;
    g.use_cbam = false;
    return g;
  }());
  copy_parameters(*with, *without);
  with->force_unit_gates(true);
  torch::NoGradGuard ng;
  const auto x = torch::rand({2, 1, 48, 48}) * 2 - 1;
  EXPECT_LT((with->forward(x) - without->forward(x)).abs().max().item<float>(), 1e-6f);
}

TEST(Generator, RejectsInputsSmallerThanKernel) {
  Generator g(small_generator());
  EXPECT_THROW(g->forward(torch::zeros({1, 1, 3, 3})), ShapeError);
  EXPECT_THROW(g->forward(torch::zeros({1, 2, 8, 8})), ShapeError);
}

TEST(Generator, EveryParameterReceivesGradient) {
  // Default width so the channel MLP hidden layer is wide enough to stay live.
  torch::manual_seed(4);
  Generator g(GeneratorConfig{});
  g->forward(torch::rand({2, 1, 32, 32}) * 2 - 1).pow(2).sum().backward();
  for (const auto& p : g->named_parameters()) {
    ASSERT_TRUE(p.value().grad().defined()) << p.key();
    EXPECT_TRUE(torch::isfinite(p.value().grad()).all().item<bool>()) << p.key();
    EXPECT_GT(p.value().grad().abs().sum().item<float>(), 0.0f) << p.key();
  }
}

TEST(Generator, GradientMatchesFiniteDifferences) {
  torch::manual_seed(5);
  Generator g(small_generator());
  const auto x = torch::rand({1, 1, 16, 16}) * 2 - 1;
  const auto samples = gradcheck::check([&](torch::Dtype t) { return g->forward(x.to(t)).mean(); }, g->parameters(),
                                        {g.get()}, 10, 5);
  ASSERT_GE(samples.size(), 10u);
  for (const auto& s : samples) EXPECT_TRUE(s.ok) << s.where << ": " << s.analytic << " vs " << s.numeric;
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

TEST(Discriminator, OutputSideFollowsConvArithmetic) {
  // 80 -> 40 -> 20 -> 10 (stride 2), then 9, 8, 7, 6 (stride 1), head -> 5.
  EXPECT_EQ(discriminator_output_side(DiscriminatorConfig{}, 80), 5);
  // 48 -> 24 -> 12 -> 6 -> 5 -> 4 -> 3 -> 2 -> 1.
  EXPECT_EQ(discriminator_output_side(DiscriminatorConfig{}, 48), 1);
  torch::manual_seed(6);
  Discriminator d(DiscriminatorConfig{});
  torch::NoGradGuard ng;
  const auto s = d->forward(torch::rand({1, 1, 80, 80}) * 2 - 1);
  EXPECT_EQ(s.sizes(), (std::vector<int64_t>{1, 1, 5, 5}));
  EXPECT_GT(s.min().item<float>(), 0.0f);
  EXPECT_LT(s.max().item<float>(), 1.0f);
  EXPECT_THROW(d->forward(torch::zeros({1, 1, 32, 32})), ShapeError);
}

TEST(Discriminator, ChannelsDoubleUpToCap) {
  Discriminator d(DiscriminatorConfig{});
  const std::vector<int> want = {64, 128, 256, 512, 512, 512, 512};
  for (int i = 0; i < 7; ++i) EXPECT_EQ(d->hidden_channels(i), want[i]);
}

TEST(Discriminator, ScoresDoNotCoupleBatchElements) {
  torch::manual_seed(7);
  Discriminator d(DiscriminatorConfig{});
  torch::NoGradGuard ng;
  const auto x = torch::rand({1, 1, 48, 48}) * 2 - 1;
  const auto pair = d->forward(torch::cat({x, x}));
  EXPECT_TRUE(torch::equal(pair[0], pair[1]));
  const auto mixed = d->forward(torch::cat({x, torch::rand({1, 1, 48, 48})}));
  EXPECT_TRUE(torch::allclose(mixed[0], pair[0], 1e-6, 1e-7));
}

TEST(Discriminator, GradientReachesInput) {
  torch::manual_seed(8);
  Discriminator d(DiscriminatorConfig{});
  auto x = (torch::rand({1, 1, 48, 48}) * 2 - 1).requires_grad_(true);
  adversarial_loss_generator(d->forward(x)).backward();
  EXPECT_TRUE(torch::isfinite(x.grad()).all().item<bool>());
  EXPECT_GT(x.grad().abs().sum().item<float>(), 0.0f);
}

// ---------------------------------------------------------------------------
// Perceptual extractor
// ---------------------------------------------------------------------------

TEST(Perceptual, TapsHaveDocumentedChannels) {
  PerceptualExtractor ex(PerceptualConfig{});
  EXPECT_FALSE(ex.pretrained());
  EXPECT_EQ(ex.tap_channels(), (std::vector<int>{512, 512}));
  const auto f = ex.extract(torch::zeros({2, 1, 48, 48}));
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].sizes(), (std::vector<int64_t>{2, 512, 6, 6}));
  EXPECT_EQ(f[1].sizes(), (std::vector<int64_t>{2, 512, 3, 3}));
  EXPECT_EQ(Vgg16Features::Impl::channels_of("relu1_2"), 64);
  EXPECT_EQ(Vgg16Features::Impl::channels_of("relu3_3"), 256);
}

TEST(Perceptual, DeterministicAndFrozen) {
  PerceptualExtractor a(PerceptualConfig{}), b(PerceptualConfig{});
  EXPECT_EQ(a.parameter_digest(), b.parameter_digest());
  EXPECT_EQ(a.weights_id(), "random-fallback:20211");
  torch::manual_seed(9);
  const auto x = torch::rand({1, 1, 32, 32}) * 2 - 1;
  const auto fa = a.extract(x), fb = a.extract(x.clone());
  for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_TRUE(torch::equal(fa[i], fb[i]));
  for (const auto& p : a.network()->parameters()) EXPECT_FALSE(p.requires_grad());
}

TEST(Perceptual, ZeroAndRandomImagesHaveDifferentGrams) {
  PerceptualExtractor ex(PerceptualConfig{});
  torch::manual_seed(10);
  const auto z = ex.extract(torch::zeros({1, 1, 48, 48}));
  const auto r = ex.extract(torch::rand({1, 1, 48, 48}) * 2 - 1);
  EXPECT_GT(style_distance(z, r, ex.taps().weights, GramNorm::kPositions).item<double>(), 0.0);
}

TEST(Perceptual, ConfigurationErrors) {
  PerceptualConfig strict;
  strict.allow_random_fallback = false;
  EXPECT_THROW(PerceptualExtractor{strict}, ConfigError);
  strict.weights_path = "/nonexistent/vgg16.cvhc";
  EXPECT_THROW(PerceptualExtractor{strict}, ConfigError);
  PerceptualConfig bad_tap;
  bad_tap.taps.layer_ids = {"relu9_9"};
  bad_tap.taps.weights = {1.0};
  EXPECT_THROW(PerceptualExtractor{bad_tap}, ConfigError);
  PerceptualExtractor ok(PerceptualConfig{});
  EXPECT_THROW(ok.extract(torch::zeros({1, 3, 16, 16})), ShapeError);
}
