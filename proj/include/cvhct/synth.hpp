#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvhct/slice_io.hpp"

namespace cvhct {

/// Scanner-texture emulation applied to domain B:
/// Gaussian blur (blur_sigma) -> unsharp mask (sharpen_gain, unsharp_sigma)
/// -> additive zero-mean Gaussian noise (noise_std HU).
struct TextureTransform {
  double blur_sigma = 1.5;
  double noise_std = 60.0;
  double sharpen_gain = 0.5;
  double unsharp_sigma = 1.0;
};

struct PhantomSpec {
  int n_slices_per_domain = 16;
  int side = 128;
  int ellipse_count_min = 4;
  int ellipse_count_max = 9;
  /// White-noise grain shared by both domains before the B transform.
  double base_noise_std = 10.0;
  TextureTransform texture;
  /// Paired (same anatomy, both renderings) slices reserved for evaluation.
  int n_eval_pairs = 8;
  std::uint64_t seed = 0;
};

void validate(const PhantomSpec& spec);

/// Random body phantom in HU (double precision, no grain).
std::vector<double> render_anatomy(int side, int ellipse_min, int ellipse_max, std::uint64_t seed);

/// Separable Gaussian blur with mirror boundaries; sigma == 0 is the identity.
std::vector<double> gaussian_blur(const std::vector<double>& img, int height, int width, double sigma);

/// Applies the B-domain transform; `seed` drives the additive noise.
std::vector<double> apply_texture_transform(const std::vector<double>& img, int height, int width,
                                            const TextureTransform& t, std::uint64_t seed);

struct EvalPair {
  CTSlice source;  ///< domain A rendering
  CTSlice target;  ///< domain B rendering of the same anatomy
};

/// Per-slice HU histogram, 10 HU bins over [-1100, 1100) plus under/overflow.
struct HuHistogram {
  static constexpr int kLo = -1100;
  static constexpr int kHi = 1100;
  static constexpr int kBinWidth = 10;
  std::vector<std::int64_t> counts;  ///< kBins
  std::int64_t underflow = 0;
  std::int64_t overflow = 0;

  static constexpr int bins() { return (kHi - kLo) / kBinWidth; }
  static HuHistogram of(const CTSlice& s);
  bool operator==(const HuHistogram&) const = default;
};

struct PhantomDatasets {
  std::vector<CTSlice> domain_a;
  std::vector<CTSlice> domain_b;
  std::vector<EvalPair> eval_pairs;
  nlohmann::json transform_record;
};

PhantomDatasets gen_phantom_domains(const PhantomSpec& spec);

/// Writes A/, B/, eval/ with slice files and manifests plus
/// transform_record.json and histograms.json under `root`.
void write_phantom_datasets(const PhantomDatasets& data, const std::filesystem::path& root);

nlohmann::json to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);

}  // namespace cvhct
