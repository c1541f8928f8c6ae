#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "cvhct/config.hpp"
#include "cvhct/data_pipeline.hpp"
#include "cvhct/errors.hpp"
#include "cvhct/metrics.hpp"
#include "cvhct/run_manifest.hpp"
#include "cvhct/synth.hpp"
#include "oracles.hpp"

using namespace cvhct;

namespace {

CTSlice filled(int h, int w, std::int16_t hu) { return {Image<std::int16_t>(h, w, hu), Domain::A, "f"}; }

std::vector<Image<float>> numbered_pool(int n, int size, float base) {
  std::vector<Image<float>> pool;
  for (int i = 0; i < n; ++i) pool.emplace_back(size, size, base + static_cast<float>(i));
  return pool;
}

}  // namespace

// ---------------------------------------------------------------------------
// Windowing and masks
// ---------------------------------------------------------------------------

TEST(Window, EndpointsMidpointAndClamp) {
  EXPECT_EQ(normalize_hu(-1000, {}), -1.0f);
  EXPECT_EQ(normalize_hu(900, {}), 1.0f);
  EXPECT_EQ(normalize_hu(-50, {}), 0.0f);
  EXPECT_EQ(normalize_hu(-2000, {}), -1.0f);
  EXPECT_EQ(normalize_hu(3000, {}), 1.0f);
  const auto n = window_normalize(filled(3, 3, -50));
  for (float v : n.pixels.pixels()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(window_normalize(filled(1, 1, 0), {5, 5}), ParameterError);
}

TEST(Window, RoundTripWithinHalfStep) {
  Image<std::int16_t> img(1, 1901);
  for (int i = 0; i < 1901; ++i) img(0, i) = static_cast<std::int16_t>(-1000 + i);
  const auto back = denormalize(window_normalize({img, Domain::A, "r"}));
  for (int i = 0; i < 1901; ++i) ASSERT_LE(std::abs(back(0, i) - img(0, i)), 0) << i;
}

TEST(Mask, PointwiseBandRule) {
  const auto air = soft_tissue_mask(filled(4, 4, -1000)), water = soft_tissue_mask(filled(4, 4, 0));
  for (auto v : air.pixels()) EXPECT_EQ(v, 0);
  for (auto v : water.pixels()) EXPECT_EQ(v, 1);
  auto s = filled(5, 5, -1000);
  s.hu(2, 3) = 50;
  const auto m = soft_tissue_mask(s);
  int count = 0;
  for (auto v : m.pixels()) count += v;
  EXPECT_EQ(count, 1);
  EXPECT_EQ(m(2, 3), 1);
  EXPECT_EQ(soft_tissue_mask(filled(1, 1, -200))(0, 0), 1);
  EXPECT_EQ(soft_tissue_mask(filled(1, 1, 300))(0, 0), 1);
  EXPECT_EQ(soft_tissue_mask(filled(1, 1, 301))(0, 0), 0);
}

TEST(Mask, WideningBandIsMonotone) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> hu(-1100, 1100);
  CTSlice s = filled(20, 20, 0);
  for (auto& p : s.hu.pixels()) p = static_cast<std::int16_t>(hu(rng));
  const auto narrow = soft_tissue_mask(s), wide = soft_tissue_mask(s, {-400, 500});
  for (std::size_t i = 0; i < narrow.size(); ++i) {
    if (narrow.pixels()[i]) {
      EXPECT_TRUE(wide.pixels()[i]);
    }
  }
}

// ---------------------------------------------------------------------------
// Patch sampling
// ---------------------------------------------------------------------------

TEST(Patches, EmptyMaskGivesNoPatches) {
  const auto img = window_normalize(filled(128, 128, -1000));
  const Image<std::uint8_t> mask(128, 128, 0);
  EXPECT_TRUE(extract_patches(img, mask, {48, 0.5, 10, 20}, 3).empty());
}

TEST(Patches, FullMaskReturnsRequestedCount) {
  const auto img = window_normalize(filled(512, 512, 0));
  const Image<std::uint8_t> mask(512, 512, 1);
  const auto p = extract_patches(img, mask, {80, 0.5, 25, 50}, 3);
  ASSERT_EQ(p.size(), 25u);
  EXPECT_EQ(p[0].height(), 80);
}

TEST(Patches, BlockMaskAnchorsMatchExhaustiveScan) {
  // Tissue only in a 100x100 block; tag pixels with their anchor so each
  // returned patch reveals where it came from.
  const int side = 512, size = 80;
  Image<std::uint8_t> mask(side, side, 0);
  for (int r = 200; r < 300; ++r) {
    for (int c = 150; c < 250; ++c) mask(r, c) = 1;
  }
  const auto anchors = qualifying_anchors(mask, size, 0.5);

  std::set<std::pair<int, int>> brute;
  for (int r = 0; r + size <= side; ++r) {
    for (int c = 0; c + size <= side; ++c) {
      const int rows = std::max(0, std::min(r + size, 300) - std::max(r, 200));
      const int cols = std::max(0, std::min(c + size, 250) - std::max(c, 150));
      if (rows * cols * 2 >= size * size) brute.insert({r, c});
    }
  }
  const std::set<std::pair<int, int>> found(anchors.begin(), anchors.end());
  EXPECT_EQ(found, brute);

  NormalizedImage img{Image<float>(side, side), {}};
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) img.pixels(r, c) = static_cast<float>(r * side + c);
  }
  const auto patches = extract_patches(img, mask, {size, 0.5, 40, 50}, 11);
  ASSERT_FALSE(patches.empty());
  for (const auto& p : patches) {
    const int id = static_cast<int>(p(0, 0));
    EXPECT_TRUE(brute.count({id / side, id % side})) << id;
  }
}

TEST(Patches, SamplingIsAPureFunctionOfSeed) {
  std::mt19937_64 rng(5);
  NormalizedImage img{Image<float>(96, 96), {}};
  for (auto& p : img.pixels.pixels()) p = static_cast<float>(rng() % 1000) / 1000.0f;
  const Image<std::uint8_t> mask(96, 96, 1);
  const PatchSpec spec{32, 0.5, 6, 10};
  EXPECT_EQ(extract_patches(img, mask, spec, 9), extract_patches(img, mask, spec, 9));
  EXPECT_NE(extract_patches(img, mask, spec, 9), extract_patches(img, mask, spec, 10));
}

// ---------------------------------------------------------------------------
// Batch stream
// ---------------------------------------------------------------------------

TEST(Batches, ShorterPoolGovernsEpochLength) {
  UnpairedBatchStream s(numbered_pool(5, 2, 0), numbered_pool(7, 2, 100), 2, 1);
  EXPECT_EQ(s.steps_per_epoch(), 2);
  // Direct simulation: sequential draws roll into epoch 1 after two steps.
  for (int i = 0; i < 2; ++i) EXPECT_EQ(s.next().first.values, s.batch(0, i).first.values);
  EXPECT_EQ(s.next().first.values, s.batch(1, 0).first.values);
}

TEST(Batches, EpochCoversDistinctPatchesOfEachPool) {
  UnpairedBatchStream s(numbered_pool(6, 1, 0), numbered_pool(9, 1, 100), 3, 4);
  std::set<float> a, b;
  for (int k = 0; k < s.steps_per_epoch(); ++k) {
    const auto [ba, bb] = s.batch(0, k);
    EXPECT_EQ(ba.domain, Domain::A);
    EXPECT_EQ(bb.domain, Domain::B);
    a.insert(ba.values.begin(), ba.values.end());
    b.insert(bb.values.begin(), bb.values.end());
  }
  EXPECT_EQ(a.size(), 6u);
  EXPECT_EQ(b.size(), 6u);
}

TEST(Batches, SingletonBatchesAndDeterminism) {
  UnpairedBatchStream s1(numbered_pool(4, 3, 0), numbered_pool(4, 3, 10), 1, 7);
  UnpairedBatchStream s2(numbered_pool(4, 3, 0), numbered_pool(4, 3, 10), 1, 7);
  for (int i = 0; i < 10; ++i) {
    const auto x = s1.next(), y = s2.next();
    EXPECT_EQ(x.first.m, 1);
    EXPECT_EQ(x.first.values.size(), 9u);
    EXPECT_EQ(x.first.values, y.first.values);
    EXPECT_EQ(x.second.values, y.second.values);
  }
}

TEST(Batches, InvalidArgumentsAreRejected) {
  EXPECT_THROW(UnpairedBatchStream(numbered_pool(3, 1, 0), numbered_pool(3, 1, 0), 0, 1), ParameterError);
  EXPECT_THROW(UnpairedBatchStream({}, numbered_pool(3, 1, 0), 1, 1), ParameterError);
}

// ---------------------------------------------------------------------------
// Synthetic phantoms
// ---------------------------------------------------------------------------

namespace {

PhantomSpec small_spec() {
  PhantomSpec s;
  s.n_slices_per_domain = 6;
  s.side = 128;
  s.n_eval_pairs = 2;
  s.seed = 3;
  return s;
}

double mean_glcm_contrast(const std::vector<CTSlice>& slices) {
  const Quantization q{32, Quantization::Range::kFixed, 800.0 / 1900.0, 1300.0 / 1900.0};
  double sum = 0;
  int n = 0;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const auto mask = soft_tissue_mask(slices[i]);
    const auto img = to_unit_range(window_normalize(slices[i]).pixels);
    for (auto [r, c] : select_rois(mask, 24, 10, 0.9, i)) {
      sum += *glcm_features(img.crop(r, c, 24, 24), q).get("Contrast");
      ++n;
    }
  }
  return sum / n;
}

}  // namespace

TEST(Synth, SameSeedIsByteIdentical) {
  oracle::TempDir d1("syn1"), d2("syn2");
  write_phantom_datasets(gen_phantom_domains(small_spec()), d1.path());
  write_phantom_datasets(gen_phantom_domains(small_spec()), d2.path());
  EXPECT_EQ(hash_directory(d1.path()), hash_directory(d2.path()));
  EXPECT_TRUE(std::filesystem::exists(d1.path() / "transform_record.json"));
  EXPECT_TRUE(std::filesystem::exists(d1.path() / "A" / "manifest.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(d1.path() / "B" / "manifest.jsonl"));
}

TEST(Synth, LoadedSlicesMatchHistogramSidecar) {
  oracle::TempDir dir("hist");
  write_phantom_datasets(gen_phantom_domains(small_spec()), dir.path());
  std::ifstream in(dir.path() / "histograms.json");
  const auto sidecar = nlohmann::json::parse(in);
  int checked = 0;
  for (const char* dom : {"A", "B"}) {
    for (const auto& rec : read_manifest(dir.path() / dom / "manifest.jsonl")) {
      const auto h = HuHistogram::of(load_slice(dir.path() / dom / rec.path));
      const auto& want = sidecar.at("slices").at(std::string(dom) + "/" + rec.path);
      EXPECT_EQ(h.counts, want.at("counts").get<std::vector<std::int64_t>>());
      EXPECT_EQ(h.underflow, want.at("underflow").get<std::int64_t>());
      EXPECT_EQ(h.overflow, want.at("overflow").get<std::int64_t>());
      ++checked;
    }
  }
  EXPECT_EQ(checked, 12);
}

TEST(Synth, IdentityTransformLeavesDomainsAlike) {
  auto spec = small_spec();
  spec.n_slices_per_domain = 10;
  spec.texture = {0.0, 0.0, 0.0, 1.0};
  const auto d = gen_phantom_domains(spec);
  EXPECT_LT(std::abs(mean_glcm_contrast(d.domain_a) - mean_glcm_contrast(d.domain_b)), 0.5);
}

TEST(Synth, DefaultTransformSeparatesTexture) {
  auto spec = small_spec();
  spec.n_slices_per_domain = 10;
  const auto d = gen_phantom_domains(spec);
  const double a = mean_glcm_contrast(d.domain_a), b = mean_glcm_contrast(d.domain_b);
  EXPECT_GT(b, 2.0 * a) << a << " " << b;
}

TEST(Synth, TransformPreservesMean) {
  const int side = 128;
  const auto anatomy = render_anatomy(side, 4, 9, 17);
  const TextureTransform t;
  const auto out = apply_texture_transform(anatomy, side, side, t, 5);
  long double ma = 0, mb = 0;
  for (std::size_t i = 0; i < anatomy.size(); ++i) {
    ma += anatomy[i];
    mb += out[i];
  }
  ma /= anatomy.size();
  mb /= anatomy.size();
  EXPECT_LT(std::abs(static_cast<double>(ma - mb)), 3 * t.noise_std / std::sqrt(anatomy.size()) + 1e-6);
}

TEST(Synth, BlurWithZeroSigmaIsIdentity) {
  std::vector<double> img(30);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = std::sin(static_cast<double>(i));
  EXPECT_EQ(gaussian_blur(img, 5, 6, 0.0), img);
}

TEST(Synth, InvalidSpecsAreRejected) {
  auto s = small_spec();
  s.n_slices_per_domain = 0;
  EXPECT_THROW(validate(s), ParameterError);
  s = small_spec();
  s.side = 64;
  EXPECT_THROW(validate(s), ParameterError);
  s = small_spec();
  s.texture.noise_std = -1;
  EXPECT_THROW(validate(s), ParameterError);
}

TEST(Synth, EvalPairsShareAnatomy) {
  const auto d = gen_phantom_domains(small_spec());
  ASSERT_EQ(d.eval_pairs.size(), 2u);
  const auto ma = soft_tissue_mask(d.eval_pairs[0].source), mb = soft_tissue_mask(d.eval_pairs[0].target);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < ma.size(); ++i) agree += ma.pixels()[i] == mb.pixels()[i];
  EXPECT_GT(static_cast<double>(agree) / ma.size(), 0.9);
}

TEST(Synth, DomainPatchesLoadFromDisk) {
  oracle::TempDir dir("patches");
  write_phantom_datasets(gen_phantom_domains(small_spec()), dir.path());
  const auto pool = load_domain_patches(dir.path() / "A", {}, {}, {48, 0.5, 4, 50}, 1);
  EXPECT_EQ(pool.size(), 24u);
  for (const auto& p : pool) {
    for (float v : p.pixels()) ASSERT_TRUE(v >= -1.0f && v <= 1.0f);
  }
  EXPECT_THROW(load_domain_patches(dir.path() / "missing", {}, {}, {}, 1), IoError);
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

TEST(Config, ProfilesRoundTripThroughJson) {
  for (const auto& c : {standard_profile(), desk_profile()}) {
    const auto back = run_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_NO_THROW(validate(back));
  }
  EXPECT_EQ(desk_profile().train.batch, 8);
  EXPECT_EQ(desk_profile().data.patch_size, 48);
  EXPECT_EQ(standard_profile().data.patch_size, 80);
  EXPECT_EQ(standard_profile().train.batch, 32);
}

TEST(Config, DottedOverrides) {
  auto doc = to_json(desk_profile());
  doc = apply_overrides(doc, {"train.lr=0.001", "train.ablation=plain_cyclegan", "synth.seed=9"});
  const auto c = run_config_from_json(doc);
  EXPECT_DOUBLE_EQ(c.train.lr, 0.001);
  EXPECT_EQ(c.train.ablation, Ablation::kPlainCycleGan);
  EXPECT_EQ(c.synth.seed, 9u);
  EXPECT_THROW(run_config_from_json(apply_overrides(doc, {"train.nope=1"})), ConfigError);
  EXPECT_THROW(apply_overrides(doc, {"no_equals_sign"}), ConfigError);
}

TEST(Config, PartialDocumentsFallBackToProfile) {
  const auto c = run_config_from_json({{"profile", "desk"}, {"train", {{"epochs", 3}}}});
  EXPECT_EQ(c.train.epochs, 3);
  EXPECT_EQ(c.train.batch, 8);
  EXPECT_THROW(run_config_from_json({{"profile", "huge"}}), ConfigError);
  EXPECT_THROW(run_config_from_json({{"bogus", 1}}), ConfigError);
}

TEST(Config, ValidationRejectsBadValues) {
  auto c = desk_profile();
  c.train.lr = 0;
  EXPECT_ANY_THROW(validate(c));
  c = desk_profile();
  c.generator.stride = 2;
  EXPECT_ANY_THROW(validate(c));
  c = desk_profile();
  c.perceptual.taps.weights = {1.0};
  EXPECT_ANY_THROW(validate(c));
}

TEST(Config, AblationSwitches) {
  EXPECT_TRUE(switches_for(Ablation::kFull).use_cbam);
  EXPECT_TRUE(switches_for(Ablation::kFull).use_domain_loss);
  EXPECT_FALSE(switches_for(Ablation::kPlainCycleGan).use_cbam);
  EXPECT_FALSE(switches_for(Ablation::kPlainCycleGan).use_domain_loss);
  EXPECT_NE(switches_for(Ablation::kDomainLossOnly).use_cbam, switches_for(Ablation::kCbamOnly).use_cbam);
  for (auto a : {Ablation::kFull, Ablation::kDomainLossOnly, Ablation::kCbamOnly, Ablation::kPlainCycleGan}) {
    EXPECT_EQ(parse_ablation(to_string(a)), a);
  }
}

TEST(Manifest, ContentHashIgnoresTimestamp) {
  RunManifest a;
  a.command = "train";
  a.seed = 4;
  a.created_utc = "2026-01-01T00:00:00Z";
  RunManifest b = a;
  b.created_utc = "2026-02-02T00:00:00Z";
  EXPECT_EQ(a.content_hash(), b.content_hash());
  b.seed = 5;
  EXPECT_NE(a.content_hash(), b.content_hash());
  const auto back = RunManifest::from_json(a.to_json());
  EXPECT_EQ(back.content_hash(), a.content_hash());
}
