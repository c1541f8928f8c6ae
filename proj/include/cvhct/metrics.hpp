#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvhct/data_pipeline.hpp"
#include "cvhct/image.hpp"

namespace cvhct {

// ---------------------------------------------------------------------------
// Agreement and image-quality metrics
// ---------------------------------------------------------------------------

enum class CccDenominator {
  kStandard,  ///< var_s + var_t + (mu_s - mu_t)^2
  kPrinted,   ///< var_s * var_t + (mu_s - mu_t)^2, kept for comparison only
};

/// Concordance correlation coefficient with population moments.
/// Both inputs constant: 1 if the means agree, otherwise 0.
double ccc(std::span<const double> s, std::span<const double> t,
           CccDenominator form = CccDenominator::kStandard);

/// 10 log10(max(target)^2 / MSE). Identical images return +infinity.
double psnr(const Image<double>& target, const Image<double>& synthesized);

/// Global-statistics SSIM with c1 = (0.01 L)^2, c2 = (0.03 L)^2.
double ssim(const Image<double>& s, const Image<double>& t, double dynamic_range = 1.0);

/// Non-centred normalized cross-correlation. Either image all zero -> 0.
double ncc(const Image<double>& x, const Image<double>& x_hat);

/// [-1, 1] -> [0, 1].
Image<double> to_unit_range(const Image<float>& normalized);

// ---------------------------------------------------------------------------
// Radiomic features
// ---------------------------------------------------------------------------

enum class FeatureClass { kFirstOrder = 0, kGlcm, kGlrlm, kGlszm, kNgtdm, kGldm };
inline constexpr std::array<FeatureClass, 6> kAllFeatureClasses = {
    FeatureClass::kFirstOrder, FeatureClass::kGlcm,  FeatureClass::kGlrlm,
    FeatureClass::kGlszm,      FeatureClass::kNgtdm, FeatureClass::kGldm};

std::string to_string(FeatureClass c);
FeatureClass parse_feature_class(const std::string& s);
/// 18 / 24 / 16 / 16 / 5 / 14.
int expected_feature_count(FeatureClass c);

struct RadiomicFeatureVector {
  FeatureClass feature_class = FeatureClass::kFirstOrder;
  std::vector<std::string> names;
  std::vector<double> values;

  std::optional<double> get(const std::string& name) const;
};

/// Gray-level quantization shared by histogram and texture features.
struct Quantization {
  enum class Range { kFixed, kRoi };
  int levels = 32;
  Range range = Range::kFixed;
  double lo = 0.0;  ///< kFixed bounds
  double hi = 1.0;
};

/// 0-based gray levels in [0, levels).
std::vector<int> quantize(std::span<const double> values, const Quantization& q);

const std::vector<std::string>& first_order_feature_names();
const std::vector<std::string>& glcm_feature_names();

/// Eighteen first-order statistics on the ROI values. Percentiles use linear
/// interpolation; entropy and uniformity use the quantized histogram.
RadiomicFeatureVector first_order_features(std::span<const double> roi, const Quantization& q = {});

struct Offset {
  int drow;
  int dcol;
};
/// The four unique 2-D directions at distance 1.
std::vector<Offset> default_glcm_offsets();

/// Symmetrized, normalized co-occurrence matrix (levels x levels, row-major).
std::vector<double> glcm_matrix(const Image<int>& levels_img, int levels, Offset offset);

/// Twenty-four GLCM statistics averaged over offsets; input already quantized.
RadiomicFeatureVector glcm_features_quantized(const Image<int>& levels_img, int levels,
                                              const std::vector<Offset>& offsets);
/// Quantizes then calls glcm_features_quantized. ROI must be at least 2x2.
RadiomicFeatureVector glcm_features(const Image<double>& roi, const Quantization& q = {},
                                    const std::vector<Offset>& offsets = default_glcm_offsets());

// ---------------------------------------------------------------------------
// Extractors and reports
// ---------------------------------------------------------------------------

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual FeatureClass feature_class() const = 0;
  /// "native" or "external".
  virtual std::string provenance() const = 0;
  virtual RadiomicFeatureVector extract(const Image<double>& roi) const = 0;
};

class FirstOrderExtractor final : public FeatureExtractor {
 public:
  explicit FirstOrderExtractor(Quantization q = {}) : q_(q) {}
  FeatureClass feature_class() const override { return FeatureClass::kFirstOrder; }
  std::string provenance() const override { return "native"; }
  RadiomicFeatureVector extract(const Image<double>& roi) const override;

 private:
  Quantization q_;
};

class GlcmExtractor final : public FeatureExtractor {
 public:
  explicit GlcmExtractor(Quantization q = {}) : q_(q) {}
  FeatureClass feature_class() const override { return FeatureClass::kGlcm; }
  std::string provenance() const override { return "native"; }
  RadiomicFeatureVector extract(const Image<double>& roi) const override;

 private:
  Quantization q_;
};

/// Runs `command <roi.cvhs>` and parses stdout as
/// {"class": "<name>", "features": {"<feature>": <number>, ...}}.
/// The ROI is written as a raw slice in HU through `window`.
class ExternalExtractor final : public FeatureExtractor {
 public:
  ExternalExtractor(FeatureClass cls, std::string command, HuWindow window = {});
  FeatureClass feature_class() const override { return cls_; }
  std::string provenance() const override { return "external"; }
  RadiomicFeatureVector extract(const Image<double>& roi) const override;

 private:
  FeatureClass cls_;
  std::string command_;
  HuWindow window_;
};

struct RoiPair {
  Image<double> synthesized;
  Image<double> target;
};

struct ClassReport {
  enum class Status { kOk, kAbsent, kFailed };
  FeatureClass feature_class = FeatureClass::kFirstOrder;
  std::string provenance;  ///< "native", "external", or "" when absent
  Status status = Status::kAbsent;
  std::string diagnostic;
  double ccc_mean = 0.0;
  double ccc_std = 0.0;  ///< sample standard deviation across ROIs
  std::vector<double> per_roi;
};

std::string to_string(ClassReport::Status s);

struct MetricReport {
  std::vector<ClassReport> classes;  ///< always six rows, canonical order
  double psnr_db = 0.0;
  double psnr_std = 0.0;
  double ssim = 0.0;
  double ssim_std = 0.0;
  double ncc = 0.0;
  double ncc_std = 0.0;
  int image_count = 0;
  int roi_count = 0;

  const ClassReport& row(FeatureClass c) const;
};

/// Per class: CCC between synthesized and target feature vectors of each ROI,
/// then mean and standard deviation across ROIs. Classes without an extractor
/// are reported absent; extractor failures are reported failed.
std::vector<ClassReport> feature_class_report(const std::vector<RoiPair>& pairs,
                                              const std::vector<std::shared_ptr<FeatureExtractor>>& extractors);

/// Full report: CCC rows from ROI pairs, PSNR/SSIM/NCC averaged over whole
/// images. `image_pairs` holds (target, synthesized).
MetricReport build_metric_report(const std::vector<std::pair<Image<double>, Image<double>>>& image_pairs,
                                 const std::vector<RoiPair>& roi_pairs,
                                 const std::vector<std::shared_ptr<FeatureExtractor>>& extractors);

std::string report_to_csv(const MetricReport& r);
nlohmann::json report_to_json(const MetricReport& r);

/// Native first-order and GLCM extractors sharing one quantization.
std::vector<std::shared_ptr<FeatureExtractor>> native_extractors(const Quantization& q = {});

/// Top-left corners of `count` ROIs whose windows hold at least
/// `min_fraction` masked pixels, chosen by seeded random draws.
std::vector<std::pair<int, int>> select_rois(const Image<std::uint8_t>& mask, int roi_size, int count,
                                             double min_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Residual maps
// ---------------------------------------------------------------------------

struct Rgb {
  std::uint8_t r, g, b;
  bool operator==(const Rgb&) const = default;
};

struct ResidualMap {
  Image<double> residual;  ///< |target - synthesized|
  Image<Rgb> heat;         ///< blue (0) -> red (1)
  double mean = 0.0;
  double max = 0.0;
};

/// Fixed jet-style scale on [0, 1]; values outside are clamped.
Rgb heat_color(double v);
ResidualMap residual_map(const Image<double>& target, const Image<double>& synthesized);
void write_ppm(const Image<Rgb>& img, const std::filesystem::path& path);

}  // namespace cvhct
