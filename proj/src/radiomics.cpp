#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "cvhct/metrics.hpp"

namespace cvhct {

std::string to_string(FeatureClass c) {
  switch (c) {
    case FeatureClass::kFirstOrder: return "firstorder";
    case FeatureClass::kGlcm: return "glcm";
    case FeatureClass::kGlrlm: return "glrlm";
    case FeatureClass::kGlszm: return "glszm";
    case FeatureClass::kNgtdm: return "ngtdm";
    case FeatureClass::kGldm: return "gldm";
  }
  return "unknown";
}

FeatureClass parse_feature_class(const std::string& s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (lower == "first_order") lower = "firstorder";
  for (FeatureClass c : kAllFeatureClasses) {
    if (to_string(c) == lower) return c;
  }
  throw ParameterError("unknown feature class '" + s + "'");
}

int expected_feature_count(FeatureClass c) {
  switch (c) {
    case FeatureClass::kFirstOrder: return 18;
    case FeatureClass::kGlcm: return 24;
    case FeatureClass::kGlrlm: return 16;
    case FeatureClass::kGlszm: return 16;
    case FeatureClass::kNgtdm: return 5;
    case FeatureClass::kGldm: return 14;
  }
  return 0;
}

std::optional<double> RadiomicFeatureVector::get(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return values[i];
  }
  return std::nullopt;
}

std::vector<int> quantize(std::span<const double> values, const Quantization& q) {
  if (q.levels < 1) throw ParameterError("quantization needs at least one level");
  double lo = q.lo, hi = q.hi;
  if (q.range == Quantization::Range::kRoi && !values.empty()) {
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo = *mn;
    hi = *mx;
  }
  std::vector<int> out(values.size(), 0);
  if (!(hi > lo)) return out;
  const double scale = q.levels / (hi - lo);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int level = static_cast<int>(std::floor((values[i] - lo) * scale));
    out[i] = std::clamp(level, 0, q.levels - 1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// First order
// ---------------------------------------------------------------------------

const std::vector<std::string>& first_order_feature_names() {
  static const std::vector<std::string> names = {
      "Energy",   "TotalEnergy",        "Entropy",
      "Minimum",  "10Percentile",       "90Percentile",
      "Maximum",  "Mean",               "Median",
      "InterquartileRange", "Range",    "MeanAbsoluteDeviation",
      "RobustMeanAbsoluteDeviation",    "RootMeanSquared",
      "Skewness", "Kurtosis",           "Variance",
      "Uniformity"};
  return names;
}

namespace {

// Linear interpolation between closest ranks on sorted data.
double percentile_sorted(const std::vector<double>& sorted, double fraction) {
  const double pos = fraction * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

RadiomicFeatureVector first_order_features(std::span<const double> roi, const Quantization& q) {
  if (roi.empty()) throw ParameterError("first_order_features: empty ROI");
  const double n = static_cast<double>(roi.size());
  std::vector<double> sorted(roi.begin(), roi.end());
  std::sort(sorted.begin(), sorted.end());

  double sum = 0, energy = 0;
  for (double v : roi) {
    sum += v;
    energy += v * v;
  }
  // A constant ROI takes its exact value so the degenerate moments are 0.
  const double mean = sorted.front() == sorted.back() ? sorted.front() : sum / n;
  double m2 = 0, m3 = 0, m4 = 0, mad = 0;
  for (double v : roi) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
    mad += std::abs(d);
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  mad /= n;

  const double p10 = percentile_sorted(sorted, 0.10), p90 = percentile_sorted(sorted, 0.90);
  const double p25 = percentile_sorted(sorted, 0.25), p75 = percentile_sorted(sorted, 0.75);

  double robust_sum = 0, robust_n = 0;
  for (double v : roi) {
    if (v >= p10 && v <= p90) {
      robust_sum += v;
      robust_n += 1;
    }
  }
  const double robust_mean = robust_sum / robust_n;
  double rmad = 0;
  for (double v : roi) {
    if (v >= p10 && v <= p90) rmad += std::abs(v - robust_mean);
  }
  rmad /= robust_n;

  const auto levels = quantize(roi, q);
  std::vector<double> hist(static_cast<std::size_t>(q.levels), 0.0);
  for (int l : levels) hist[l] += 1.0;
  double entropy = 0, uniformity = 0;
  for (double c : hist) {
    if (c == 0) continue;
    const double p = c / n;
    entropy -= p * std::log2(p);
    uniformity += p * p;
  }

  const double skewness = m2 > 0 ? m3 / std::pow(m2, 1.5) : 0.0;
  const double kurtosis = m2 > 0 ? m4 / (m2 * m2) : 0.0;

  RadiomicFeatureVector out;
  out.feature_class = FeatureClass::kFirstOrder;
  out.names = first_order_feature_names();
  out.values = {energy,
                energy,  // unit voxel volume
                entropy,
                sorted.front(),
                p10,
                p90,
                sorted.back(),
                mean,
                percentile_sorted(sorted, 0.5),
                p75 - p25,
                sorted.back() - sorted.front(),
                mad,
                rmad,
                std::sqrt(energy / n),
                skewness,
                kurtosis,
                m2,
                uniformity};
  return out;
}

// ---------------------------------------------------------------------------
// GLCM
// ---------------------------------------------------------------------------

const std::vector<std::string>& glcm_feature_names() {
  static const std::vector<std::string> names = {
      "Autocorrelation",    "JointAverage",    "ClusterProminence", "ClusterShade",
      "ClusterTendency",    "Contrast",        "Correlation",       "DifferenceAverage",
      "DifferenceEntropy",  "DifferenceVariance", "JointEnergy",    "JointEntropy",
      "Imc1",               "Imc2",            "Idm",               "Idmn",
      "Id",                 "Idn",             "InverseVariance",   "MaximumProbability",
      "SumAverage",         "SumEntropy",      "SumSquares",        "MCC"};
  return names;
}

std::vector<Offset> default_glcm_offsets() { return {{0, 1}, {1, 1}, {1, 0}, {1, -1}}; }

std::vector<double> glcm_matrix(const Image<int>& img, int levels, Offset off) {
  const std::size_t ng = static_cast<std::size_t>(levels);
  std::vector<double> p(ng * ng, 0.0);
  double total = 0;
  for (int r = 0; r < img.height(); ++r) {
    const int r2 = r + off.drow;
    if (r2 < 0 || r2 >= img.height()) continue;
    for (int c = 0; c < img.width(); ++c) {
      const int c2 = c + off.dcol;
      if (c2 < 0 || c2 >= img.width()) continue;
      const int i = img(r, c), j = img(r2, c2);
      if (i < 0 || i >= levels || j < 0 || j >= levels) throw ParameterError("gray level outside [0, levels)");
      p[i * ng + j] += 1.0;
      p[j * ng + i] += 1.0;
      total += 2.0;
    }
  }
  if (total > 0) {
    for (auto& v : p) v /= total;
  }
  return p;
}

namespace {

double plog2(double p) { return p > 0 ? p * std::log2(p) : 0.0; }

std::vector<double> glcm_stats(const std::vector<double>& p, int levels) {
  const int ng = levels;
  auto at = [&](int i, int j) { return p[static_cast<std::size_t>(i) * ng + j]; };

  std::vector<double> px(ng, 0.0), py(ng, 0.0), psum(2 * ng + 1, 0.0), pdiff(ng, 0.0);
  for (int i = 0; i < ng; ++i) {
    for (int j = 0; j < ng; ++j) {
      const double v = at(i, j);
      px[i] += v;
      py[j] += v;
      psum[(i + 1) + (j + 1)] += v;
      pdiff[std::abs(i - j)] += v;
    }
  }
  double ux = 0, uy = 0;
  for (int i = 0; i < ng; ++i) {
    ux += (i + 1) * px[i];
    uy += (i + 1) * py[i];
  }
  double sx2 = 0, sy2 = 0;
  for (int i = 0; i < ng; ++i) {
    sx2 += (i + 1 - ux) * (i + 1 - ux) * px[i];
    sy2 += (i + 1 - uy) * (i + 1 - uy) * py[i];
  }

  double autocorr = 0, prominence = 0, shade = 0, tendency = 0, contrast = 0, energy = 0, hxy = 0, hxy1 = 0,
         hxy2 = 0, maxp = 0;
  for (int i = 0; i < ng; ++i) {
    for (int j = 0; j < ng; ++j) {
      const double v = at(i, j);
      const double a = (i + 1) + (j + 1) - ux - uy;
      autocorr += (i + 1.0) * (j + 1.0) * v;
      prominence += a * a * a * a * v;
      shade += a * a * a * v;
      tendency += a * a * v;
      contrast += double(i - j) * double(i - j) * v;
      energy += v * v;
      hxy -= plog2(v);
      const double pxy = px[i] * py[j];
      if (v > 0 && pxy > 0) hxy1 -= v * std::log2(pxy);
      hxy2 -= plog2(pxy);
      maxp = std::max(maxp, v);
    }
  }
  double hx = 0, hy = 0;
  for (int i = 0; i < ng; ++i) {
    hx -= plog2(px[i]);
    hy -= plog2(py[i]);
  }

  const double sdev = std::sqrt(sx2 * sy2);
  const double correlation = sdev > 0 ? (autocorr - ux * uy) / sdev : 1.0;

  double diff_avg = 0, diff_ent = 0, idm = 0, idmn = 0, id = 0, idn = 0, inv_var = 0;
  for (int k = 0; k < ng; ++k) {
    const double v = pdiff[k];
    diff_avg += k * v;
    diff_ent -= plog2(v);
    idm += v / (1.0 + double(k) * k);
    idmn += v / (1.0 + double(k) * k / (double(ng) * ng));
    id += v / (1.0 + k);
    idn += v / (1.0 + double(k) / ng);
    if (k > 0) inv_var += v / (double(k) * k);
  }
  double diff_var = 0;
  for (int k = 0; k < ng; ++k) diff_var += (k - diff_avg) * (k - diff_avg) * pdiff[k];

  double sum_avg = 0, sum_ent = 0;
  for (int k = 2; k <= 2 * ng; ++k) {
    sum_avg += k * psum[k];
    sum_ent -= plog2(psum[k]);
  }

  const double hmax = std::max(hx, hy);
  const double imc1 = hmax > 0 ? (hxy - hxy1) / hmax : 0.0;
  const double imc2_arg = 1.0 - std::exp(-2.0 * (hxy2 - hxy));
  const double imc2 = imc2_arg > 0 ? std::sqrt(imc2_arg) : 0.0;

  // Maximal correlation coefficient over gray levels present in the matrix.
  std::vector<int> present;
  for (int i = 0; i < ng; ++i) {
    if (px[i] > 0) present.push_back(i);
  }
  double mcc = 1.0;
  if (present.size() >= 2) {
    const auto n = static_cast<Eigen::Index>(present.size());
    Eigen::MatrixXd q(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
      for (Eigen::Index b = 0; b < n; ++b) {
        double acc = 0;
        for (int k : present) acc += at(present[a], k) * at(present[b], k) / (px[present[a]] * py[k]);
        q(a, b) = acc;
      }
    }
    Eigen::EigenSolver<Eigen::MatrixXd> solver(q, false);
    std::vector<double> ev;
    for (Eigen::Index k = 0; k < n; ++k) ev.push_back(solver.eigenvalues()[k].real());
    std::sort(ev.begin(), ev.end(), std::greater<>());
    mcc = std::sqrt(std::max(0.0, ev[1]));
  }

  return {autocorr, ux,       prominence, shade,    tendency, contrast, correlation, diff_avg,
          diff_ent, diff_var, energy,     hxy,      imc1,     imc2,     idm,         idmn,
          id,       idn,      inv_var,    maxp,     sum_avg,  sum_ent,  sx2,         mcc};
}

}  // namespace

RadiomicFeatureVector glcm_features_quantized(const Image<int>& img, int levels, const std::vector<Offset>& offsets) {
  if (img.height() < 2 || img.width() < 2) throw ParameterError("GLCM needs an ROI of at least 2x2");
  if (levels < 1) throw ParameterError("GLCM needs at least one gray level");
  if (offsets.empty()) throw ParameterError("GLCM needs at least one offset");
  RadiomicFeatureVector out;
  out.feature_class = FeatureClass::kGlcm;
  out.names = glcm_feature_names();
  out.values.assign(out.names.size(), 0.0);
  int used = 0;
  for (const Offset& off : offsets) {
    const auto p = glcm_matrix(img, levels, off);
    if (std::all_of(p.begin(), p.end(), [](double v) { return v == 0.0; })) continue;
    const auto stats = glcm_stats(p, levels);
    for (std::size_t k = 0; k < stats.size(); ++k) out.values[k] += stats[k];
    ++used;
  }
  if (used == 0) throw ParameterError("no offset produced a co-occurrence inside the ROI");
  for (auto& v : out.values) v /= used;
  return out;
}

RadiomicFeatureVector glcm_features(const Image<double>& roi, const Quantization& q, const std::vector<Offset>& offsets) {
  if (roi.height() < 2 || roi.width() < 2) throw ParameterError("GLCM needs an ROI of at least 2x2");
  return glcm_features_quantized(Image<int>(roi.height(), roi.width(), quantize(roi.pixels(), q)), q.levels,
                                 offsets);
}

RadiomicFeatureVector FirstOrderExtractor::extract(const Image<double>& roi) const {
  return first_order_features(roi.pixels(), q_);
}

RadiomicFeatureVector GlcmExtractor::extract(const Image<double>& roi) const { return glcm_features(roi, q_); }

}  // namespace cvhct
