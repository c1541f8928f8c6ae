#include "cvhct/evaluation.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "cvhct/errors.hpp"

namespace cvhct {

namespace fs = std::filesystem;

std::vector<EvalPair> load_eval_pairs(const fs::path& pairs_file) {
  std::ifstream in(pairs_file);
  if (!in) throw IoError("cannot open pairs manifest '" + pairs_file.string() + "'");
  const fs::path base = pairs_file.parent_path();
  std::vector<EvalPair> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      out.push_back({load_slice(base / j.at("source").get<std::string>()),
                     load_slice(base / j.at("target").get<std::string>())});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(pairs_file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (out.back().source.hu.height() != out.back().target.hu.height() ||
        out.back().source.hu.width() != out.back().target.hu.width()) {
      throw ShapeError(pairs_file.string() + ":" + std::to_string(lineno) + ": pair sizes differ");
    }
  }
  if (out.empty()) throw ParameterError("pairs manifest '" + pairs_file.string() + "' is empty");
  return out;
}

std::vector<std::shared_ptr<FeatureExtractor>> configured_extractors(const EvalConfig& cfg, HuWindow window) {
  auto ex = native_extractors(cfg.quantization);
  for (const auto& [cls, cmd] : cfg.plugins) {
    ex.push_back(std::make_shared<ExternalExtractor>(parse_feature_class(cls), cmd, window));
  }
  return ex;
}

PairEvaluation evaluate_pairs(const std::vector<EvalPair>& pairs, const SliceTransform& transform,
                              const EvalConfig& cfg, HuWindow window, TissueBand band,
                              const std::vector<std::shared_ptr<FeatureExtractor>>& extractors) {
  PairEvaluation out;
  std::vector<std::pair<Image<double>, Image<double>>> images;
  std::vector<RoiPair> rois;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto src = window_normalize(pairs[i].source, window);
    if (transform) src = transform(src);
    const auto synthesized = to_unit_range(src.pixels);
    const auto target = to_unit_range(window_normalize(pairs[i].target, window).pixels);
    if (synthesized.height() != target.height() || synthesized.width() != target.width()) {
      throw ShapeError("transform changed the slice shape");
    }
    const auto mask = soft_tissue_mask(pairs[i].target, band);
    for (const auto& [r, c] : select_rois(mask, cfg.roi_size, cfg.roi_count, cfg.roi_min_fraction,
                                          mix_seed(cfg.roi_seed, i))) {
      rois.push_back({synthesized.crop(r, c, cfg.roi_size, cfg.roi_size), target.crop(r, c, cfg.roi_size, cfg.roi_size)});
    }
    out.residuals.push_back(residual_map(target, synthesized));
    images.emplace_back(target, synthesized);
  }
  out.report = build_metric_report(images, rois, extractors);
  return out;
}

}  // namespace cvhct
