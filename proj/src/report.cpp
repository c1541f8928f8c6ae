#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include <unistd.h>

#include "cvhct/metrics.hpp"
#include "cvhct/slice_io.hpp"

namespace cvhct {

namespace fs = std::filesystem;

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) {
    if (ch == '\'') {
      out += "'\\''";
    } else {
      out += ch;
    }
  }
  return out + "'";
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

// Stable temporary names across repeated extractions in one process.
fs::path temp_roi_path() {
  static int counter = 0;
  return fs::temp_directory_path() /
         ("cvhct_roi_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".cvhs");
}

}  // namespace

ExternalExtractor::ExternalExtractor(FeatureClass cls, std::string command, HuWindow window)
    : cls_(cls), command_(std::move(command)), window_(window) {
  if (command_.empty()) throw ConfigError("external extractor command is empty");
}

RadiomicFeatureVector ExternalExtractor::extract(const Image<double>& roi) const {
  CTSlice slice;
  std::vector<std::int16_t> hu(roi.size());
  auto src = roi.pixels();
  for (std::size_t i = 0; i < hu.size(); ++i) {
    hu[i] = static_cast<std::int16_t>(std::lround(denormalize_value(2.0 * src[i] - 1.0, window_)));
  }
  slice.hu = Image<std::int16_t>(roi.height(), roi.width(), std::move(hu));
  const fs::path path = temp_roi_path();
  save_slice(slice, path);

  std::string output;
  const std::string cmd = command_ + " " + shell_quote(path.string());
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) {
    fs::remove(path);
    throw Error("cannot launch extractor '" + command_ + "'", ExitCode::kRuntime);
  }
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, got);
  const int status = ::pclose(pipe);
  std::error_code ec;
  fs::remove(path, ec);
  if (status != 0) {
    throw Error("extractor '" + command_ + "' exited with status " + std::to_string(status), ExitCode::kRuntime);
  }

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(output);
  } catch (const nlohmann::json::exception& e) {
    throw Error("extractor '" + command_ + "' returned invalid JSON: " + e.what(), ExitCode::kRuntime);
  }
  if (!j.contains("features") || !j["features"].is_object()) {
    throw Error("extractor '" + command_ + "' returned no 'features' object", ExitCode::kRuntime);
  }
  if (j.contains("class") && parse_feature_class(j["class"].get<std::string>()) != cls_) {
    throw Error("extractor '" + command_ + "' reported a different feature class", ExitCode::kRuntime);
  }
  RadiomicFeatureVector out;
  out.feature_class = cls_;
  for (const auto& [name, value] : j["features"].items()) {
    if (!value.is_number()) throw Error("feature '" + name + "' is not numeric", ExitCode::kRuntime);
    out.names.push_back(name);
    out.values.push_back(value.get<double>());
  }
  return out;
}

std::string to_string(ClassReport::Status s) {
  switch (s) {
    case ClassReport::Status::kOk: return "ok";
    case ClassReport::Status::kAbsent: return "absent";
    case ClassReport::Status::kFailed: return "failed";
  }
  return "unknown";
}

const ClassReport& MetricReport::row(FeatureClass c) const {
  for (const auto& r : classes) {
    if (r.feature_class == c) return r;
  }
  throw ParameterError("report has no row for " + to_string(c));
}

std::vector<ClassReport> feature_class_report(const std::vector<RoiPair>& pairs,
                                              const std::vector<std::shared_ptr<FeatureExtractor>>& extractors) {
  if (pairs.size() < 2) throw ParameterError("feature_class_report needs at least two ROI pairs");
  std::vector<ClassReport> rows;
  for (FeatureClass cls : kAllFeatureClasses) {
    ClassReport row;
    row.feature_class = cls;
    std::shared_ptr<FeatureExtractor> ex;
    for (const auto& e : extractors) {
      if (e && e->feature_class() == cls) ex = e;
    }
    if (!ex) {
      row.status = ClassReport::Status::kAbsent;
      row.diagnostic = "no extractor installed";
      rows.push_back(std::move(row));
      continue;
    }
    row.provenance = ex->provenance();
    try {
      for (const auto& p : pairs) {
        const auto fs_ = ex->extract(p.synthesized);
        const auto ft = ex->extract(p.target);
        if (fs_.names != ft.names) throw Error("feature names differ between ROIs", ExitCode::kRuntime);
        row.per_roi.push_back(ccc(fs_.values, ft.values));
      }
      row.status = ClassReport::Status::kOk;
      row.ccc_mean = mean_of(row.per_roi);
      row.ccc_std = sample_std(row.per_roi);
    } catch (const std::exception& e) {
      row.status = ClassReport::Status::kFailed;
      row.diagnostic = e.what();
      row.per_roi.clear();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

MetricReport build_metric_report(const std::vector<std::pair<Image<double>, Image<double>>>& image_pairs,
                                 const std::vector<RoiPair>& roi_pairs,
                                 const std::vector<std::shared_ptr<FeatureExtractor>>& extractors) {
  MetricReport r;
  r.classes = feature_class_report(roi_pairs, extractors);
  r.roi_count = static_cast<int>(roi_pairs.size());
  std::vector<double> p, s, n;
  for (const auto& [target, synth] : image_pairs) {
    p.push_back(psnr(target, synth));
    s.push_back(ssim(synth, target));
    n.push_back(ncc(target, synth));
  }
  r.image_count = static_cast<int>(image_pairs.size());
  r.psnr_db = mean_of(p);
  r.psnr_std = std::isinf(r.psnr_db) ? 0.0 : sample_std(p);
  r.ssim = mean_of(s);
  r.ssim_std = sample_std(s);
  r.ncc = mean_of(n);
  r.ncc_std = sample_std(n);
  return r;
}

std::string report_to_csv(const MetricReport& r) {
  std::ostringstream out;
  out.precision(10);
  out << "class,provenance,status,ccc_mean,ccc_std,roi_count,diagnostic\n";
  for (const auto& row : r.classes) {
    std::string diag = row.diagnostic;
    for (auto& ch : diag) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    out << to_string(row.feature_class) << ',' << row.provenance << ',' << to_string(row.status) << ',';
    if (row.status == ClassReport::Status::kOk) {
      out << row.ccc_mean << ',' << row.ccc_std << ',' << row.per_roi.size();
    } else {
      out << ",,0";
    }
    out << ',' << diag << '\n';
  }
  return out.str();
}

nlohmann::json report_to_json(const MetricReport& r) {
  nlohmann::json j;
  auto finite_or_string = [](double v) -> nlohmann::json {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
  };
  j["psnr_db"] = finite_or_string(r.psnr_db);
  j["psnr_std"] = r.psnr_std;
  j["ssim"] = r.ssim;
  j["ssim_std"] = r.ssim_std;
  j["ncc"] = r.ncc;
  j["ncc_std"] = r.ncc_std;
  j["image_count"] = r.image_count;
  j["roi_count"] = r.roi_count;
  j["classes"] = nlohmann::json::array();
  for (const auto& row : r.classes) {
    nlohmann::json c{{"class", to_string(row.feature_class)},
                     {"provenance", row.provenance},
                     {"status", to_string(row.status)},
                     {"diagnostic", row.diagnostic}};
    if (row.status == ClassReport::Status::kOk) {
      c["ccc_mean"] = row.ccc_mean;
      c["ccc_std"] = row.ccc_std;
      c["per_roi"] = row.per_roi;
    }
    j["classes"].push_back(std::move(c));
  }
  return j;
}

std::vector<std::shared_ptr<FeatureExtractor>> native_extractors(const Quantization& q) {
  return {std::make_shared<FirstOrderExtractor>(q), std::make_shared<GlcmExtractor>(q)};
}

std::vector<std::pair<int, int>> select_rois(const Image<std::uint8_t>& mask, int roi_size, int count,
                                             double min_fraction, std::uint64_t seed) {
  const auto anchors = qualifying_anchors(mask, roi_size, min_fraction);
  std::vector<std::pair<int, int>> out;
  if (anchors.empty() || count <= 0) return out;
  std::mt19937_64 rng(seed);
  for (int k = 0; k < count; ++k) out.push_back(anchors[rng() % anchors.size()]);
  return out;
}

}  // namespace cvhct
