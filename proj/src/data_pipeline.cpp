#include "cvhct/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace cvhct {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

float normalize_hu(double hu, HuWindow w) {
  const double c = std::clamp(hu, static_cast<double>(w.lo), static_cast<double>(w.hi));
  return static_cast<float>(2.0 * (c - w.lo) / (w.hi - w.lo) - 1.0);
}

double denormalize_value(double v, HuWindow w) { return (v + 1.0) * 0.5 * (w.hi - w.lo) + w.lo; }

NormalizedImage window_normalize(const CTSlice& slice, HuWindow window) {
  if (window.lo >= window.hi) {
    throw ParameterError("window lo (" + std::to_string(window.lo) + ") must be below hi (" +
                         std::to_string(window.hi) + ")");
  }
  Image<float> out(slice.height(), slice.width());
  auto src = slice.hu.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = normalize_hu(src[i], window);
  return {std::move(out), window};
}

Image<std::int16_t> denormalize(const NormalizedImage& img) {
  Image<std::int16_t> out(img.pixels.height(), img.pixels.width());
  auto src = img.pixels.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const double hu = std::round(denormalize_value(src[i], img.window));
    dst[i] = static_cast<std::int16_t>(std::clamp(hu, -32768.0, 32767.0));
  }
  return out;
}

Image<std::uint8_t> soft_tissue_mask(const CTSlice& slice, TissueBand band) {
  Image<std::uint8_t> mask(slice.height(), slice.width());
  auto src = slice.hu.pixels();
  auto dst = mask.pixels();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = (src[i] >= band.lo && src[i] <= band.hi) ? 1 : 0;
  return mask;
}

namespace {

// Summed-area table with a zero row/column in front.
std::vector<int> integral(const Image<std::uint8_t>& mask) {
  const int h = mask.height(), w = mask.width();
  std::vector<int> s(static_cast<std::size_t>(h + 1) * (w + 1), 0);
  for (int r = 0; r < h; ++r) {
    int row = 0;
    for (int c = 0; c < w; ++c) {
      row += mask(r, c) ? 1 : 0;
      s[(r + 1) * (w + 1) + c + 1] = s[r * (w + 1) + c + 1] + row;
    }
  }
  return s;
}

int window_sum(const std::vector<int>& s, int w, int r, int c, int size) {
  const int stride = w + 1;
  return s[(r + size) * stride + c + size] - s[r * stride + c + size] - s[(r + size) * stride + c] +
         s[r * stride + c];
}

void check_patch_args(const Image<std::uint8_t>& mask, int size, double frac) {
  if (size <= 0 || size > mask.height() || size > mask.width()) {
    throw ParameterError("patch size " + std::to_string(size) + " does not fit the image");
  }
  if (!(frac > 0.0 && frac <= 1.0)) throw ParameterError("min_tissue_fraction must lie in (0, 1]");
}

}  // namespace

std::vector<std::pair<int, int>> qualifying_anchors(const Image<std::uint8_t>& mask, int size,
                                                    double min_tissue_fraction) {
  check_patch_args(mask, size, min_tissue_fraction);
  const auto s = integral(mask);
  const double need = min_tissue_fraction * size * size;
  std::vector<std::pair<int, int>> out;
  for (int r = 0; r + size <= mask.height(); ++r) {
    for (int c = 0; c + size <= mask.width(); ++c) {
      if (window_sum(s, mask.width(), r, c, size) >= need) out.emplace_back(r, c);
    }
  }
  return out;
}

std::vector<Image<float>> extract_patches(const NormalizedImage& img, const Image<std::uint8_t>& mask,
                                          const PatchSpec& spec, std::uint64_t seed) {
  check_patch_args(mask, spec.size, spec.min_tissue_fraction);
  if (mask.height() != img.pixels.height() || mask.width() != img.pixels.width()) {
    throw ShapeError("mask and image shapes differ");
  }
  std::vector<Image<float>> out;
  if (spec.count <= 0) return out;
  const auto s = integral(mask);
  const double need = spec.min_tissue_fraction * spec.size * spec.size;
  // Early exit keeps an all-background mask from burning the attempt budget.
  if (qualifying_anchors(mask, spec.size, spec.min_tissue_fraction).empty()) return out;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> row_dist(0, mask.height() - spec.size);
  std::uniform_int_distribution<int> col_dist(0, mask.width() - spec.size);
  const long budget = static_cast<long>(spec.count) * spec.max_attempts_per_patch;
  for (long attempt = 0; attempt < budget && static_cast<int>(out.size()) < spec.count; ++attempt) {
    const int r = row_dist(rng);
    const int c = col_dist(rng);
    if (window_sum(s, mask.width(), r, c, spec.size) >= need) {
      out.push_back(img.pixels.crop(r, c, spec.size, spec.size));
    }
  }
  return out;
}

UnpairedBatchStream::UnpairedBatchStream(std::vector<Image<float>> pool_a, std::vector<Image<float>> pool_b,
                                         int m, std::uint64_t seed)
    : pool_a_(std::move(pool_a)), pool_b_(std::move(pool_b)), m_(m), seed_(seed) {
  if (m <= 0) throw ParameterError("batch size must be positive");
  if (pool_a_.empty() || pool_b_.empty()) throw ParameterError("patch pools must be non-empty");
  const int size = pool_a_.front().height();
  for (const auto* pool : {&pool_a_, &pool_b_}) {
    for (const auto& p : *pool) {
      if (p.height() != size || p.width() != size) throw ShapeError("patch pools mix patch sizes");
    }
  }
  steps_per_epoch_ = static_cast<int>(std::min(pool_a_.size(), pool_b_.size()) / static_cast<std::size_t>(m));
  if (steps_per_epoch_ == 0) throw ParameterError("batch size exceeds the smaller patch pool");
}

std::vector<std::size_t> UnpairedBatchStream::order(int epoch, int side) const {
  const auto& pool = side == 0 ? pool_a_ : pool_b_;
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(mix_seed(seed_, static_cast<std::uint64_t>(epoch)), static_cast<std::uint64_t>(side)));
  // Explicit Fisher-Yates: std::shuffle's draw pattern is library-specific.
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = rng() % i;
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

PatchBatch UnpairedBatchStream::pack(const std::vector<Image<float>>& pool, const std::vector<std::size_t>& ord,
                                     int step, Domain d) const {
  PatchBatch b;
  b.m = m_;
  b.size = pool.front().height();
  b.domain = d;
  b.values.reserve(static_cast<std::size_t>(m_) * b.size * b.size);
  for (int k = 0; k < m_; ++k) {
    const auto& p = pool[ord[static_cast<std::size_t>(step) * m_ + k]];
    b.values.insert(b.values.end(), p.pixels().begin(), p.pixels().end());
  }
  return b;
}

std::pair<PatchBatch, PatchBatch> UnpairedBatchStream::batch(int epoch, int step) const {
  if (step < 0 || step >= steps_per_epoch_) throw ParameterError("step outside epoch");
  return {pack(pool_a_, order(epoch, 0), step, Domain::A), pack(pool_b_, order(epoch, 1), step, Domain::B)};
}

std::pair<PatchBatch, PatchBatch> UnpairedBatchStream::next() {
  auto out = batch(cursor_epoch_, cursor_step_);
  if (++cursor_step_ == steps_per_epoch_) {
    cursor_step_ = 0;
    ++cursor_epoch_;
  }
  return out;
}

void UnpairedBatchStream::seek(int epoch, int step) {
  if (epoch < 0 || step < 0 || step >= steps_per_epoch_) throw ParameterError("seek outside stream");
  cursor_epoch_ = epoch;
  cursor_step_ = step;
}

std::vector<Image<float>> load_domain_patches(const std::filesystem::path& domain_dir, HuWindow window,
                                              TissueBand band, const PatchSpec& spec, std::uint64_t seed) {
  const auto manifest = domain_dir / "manifest.jsonl";
  if (!std::filesystem::exists(manifest)) throw IoError("no manifest at '" + manifest.string() + "'");
  const auto recs = read_manifest(manifest);
  if (recs.empty()) throw ParameterError("manifest '" + manifest.string() + "' lists no slices");
  std::vector<Image<float>> pool;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const CTSlice slice = load_slice(domain_dir / recs[i].path);
    const auto patches = extract_patches(window_normalize(slice, window), soft_tissue_mask(slice, band), spec,
                                         mix_seed(seed, i));
    pool.insert(pool.end(), patches.begin(), patches.end());
  }
  if (pool.empty()) throw ParameterError("no tissue patch found under '" + domain_dir.string() + "'");
  return pool;
}

}  // namespace cvhct
