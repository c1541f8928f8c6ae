#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "cvhct/config.hpp"
#include "cvhct/data_pipeline.hpp"
#include "cvhct/metrics.hpp"
#include "cvhct/synth.hpp"

namespace cvhct {

/// Reads `pairs.jsonl` ({"source", "target"} paths relative to the file).
std::vector<EvalPair> load_eval_pairs(const std::filesystem::path& pairs_file);

using SliceTransform = std::function<NormalizedImage(const NormalizedImage&)>;

struct PairEvaluation {
  MetricReport report;
  std::vector<ResidualMap> residuals;  ///< one per pair, on the [0, 1] scale
};

/// Native extractors for `cfg.quantization` plus one ExternalExtractor per
/// configured plugin.
std::vector<std::shared_ptr<FeatureExtractor>> configured_extractors(const EvalConfig& cfg, HuWindow window);

/// Windows each source, applies `transform` (identity when empty) and scores
/// it against the paired target. ROIs are drawn from the target's soft-tissue
/// mask, `cfg.roi_count` per pair, seeded by (roi_seed, pair index).
PairEvaluation evaluate_pairs(const std::vector<EvalPair>& pairs, const SliceTransform& transform,
                              const EvalConfig& cfg, HuWindow window, TissueBand band,
                              const std::vector<std::shared_ptr<FeatureExtractor>>& extractors);

}  // namespace cvhct
