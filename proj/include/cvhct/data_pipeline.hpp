#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cvhct/image.hpp"
#include "cvhct/slice_io.hpp"

namespace cvhct {

/// Intensity window in HU.
struct HuWindow {
  int lo = -1000;
  int hi = 900;
};

/// Slice mapped into [-1, 1] through a HU window.
struct NormalizedImage {
  Image<float> pixels;
  HuWindow window;
};

/// Clamp to [lo, hi] and map lo -> -1, hi -> +1. Throws ParameterError if lo >= hi.
NormalizedImage window_normalize(const CTSlice& slice, HuWindow window = {});
/// Inverse affine map (no clamp undo), rounded to the nearest HU.
Image<std::int16_t> denormalize(const NormalizedImage& img);

float normalize_hu(double hu, HuWindow window);
double denormalize_value(double v, HuWindow window);

/// HU band treated as soft tissue.
struct TissueBand {
  int lo = -200;
  int hi = 300;
};

Image<std::uint8_t> soft_tissue_mask(const CTSlice& slice, TissueBand band = {});

struct PatchSpec {
  int size = 80;
  double min_tissue_fraction = 0.5;
  int count = 64;  ///< number of patches requested
  int max_attempts_per_patch = 50;
};

/// Random-anchor rejection sampling of tissue patches.
///
/// Anchors are drawn uniformly from all (H-size+1) x (W-size+1) positions;
/// an anchor is accepted when at least min_tissue_fraction of the window is
/// masked. Sampling stops after `count` accepted patches or after
/// count * max_attempts_per_patch draws. If no anchor qualifies anywhere the
/// result is empty. The draw sequence is a pure function of `seed`.
std::vector<Image<float>> extract_patches(const NormalizedImage& img, const Image<std::uint8_t>& mask,
                                          const PatchSpec& spec, std::uint64_t seed);

/// Top-left anchors whose windows satisfy the tissue fraction (exhaustive scan).
std::vector<std::pair<int, int>> qualifying_anchors(const Image<std::uint8_t>& mask, int size,
                                                    double min_tissue_fraction);

/// m patches of one domain, packed (m, 1, size, size) row-major.
struct PatchBatch {
  std::vector<float> values;
  int m = 0;
  int size = 0;
  Domain domain = Domain::A;
};

/// Epoch-wise unpaired batch stream.
///
/// Both pools are reshuffled every epoch by independent streams derived from
/// (seed, epoch, side). An epoch has floor(min(|A|, |B|) / m) steps; batch k of
/// the epoch pairs A-shuffle[k*m..) with B-shuffle[k*m..).
class UnpairedBatchStream {
 public:
  UnpairedBatchStream(std::vector<Image<float>> pool_a, std::vector<Image<float>> pool_b, int m,
                      std::uint64_t seed);

  int steps_per_epoch() const noexcept { return steps_per_epoch_; }
  int batch_size() const noexcept { return m_; }

  /// Batch `step` of `epoch`; random access so resumed runs see the same data.
  std::pair<PatchBatch, PatchBatch> batch(int epoch, int step) const;

  /// Sequential iteration; the stream is unbounded and rolls over epochs.
  std::pair<PatchBatch, PatchBatch> next();
  void seek(int epoch, int step = 0);

 private:
  std::vector<std::size_t> order(int epoch, int side) const;
  PatchBatch pack(const std::vector<Image<float>>& pool, const std::vector<std::size_t>& order,
                  int step, Domain d) const;

  std::vector<Image<float>> pool_a_, pool_b_;
  int m_;
  std::uint64_t seed_;
  int steps_per_epoch_;
  int cursor_epoch_ = 0;
  int cursor_step_ = 0;
};

/// Loads every slice listed in `<domain_dir>/manifest.jsonl`, windows it and
/// samples `spec.count` tissue patches per slice (seeded per slice index).
/// Throws IoError for a missing directory or manifest and ParameterError when
/// the manifest is empty or no slice yields a patch.
std::vector<Image<float>> load_domain_patches(const std::filesystem::path& domain_dir, HuWindow window,
                                              TissueBand band, const PatchSpec& spec, std::uint64_t seed);

/// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace cvhct
