#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvhct/data_pipeline.hpp"
#include "cvhct/metrics.hpp"
#include "cvhct/model_config.hpp"
#include "cvhct/synth.hpp"

namespace cvhct {

struct DataConfig {
  HuWindow window;
  TissueBand tissue_band;
  int patch_size = 80;
  int patches_per_slice = 8;
  double min_tissue_fraction = 0.5;
};

struct EvalConfig {
  int roi_size = 32;
  int roi_count = 30;
  double roi_min_fraction = 0.9;
  std::uint64_t roi_seed = 7;
  /// 32 gray levels over the soft-tissue band [-200, 300] HU of the default
  /// window, i.e. about 16 HU per level.
  Quantization quantization{32, Quantization::Range::kFixed, 800.0 / 1900.0, 1300.0 / 1900.0};
  /// Feature class name -> extractor command for the non-native classes.
  std::map<std::string, std::string> plugins;
};

/// One structured document holding every tunable of a run.
struct RunConfig {
  std::string profile = "standard";
  PhantomSpec synth;
  DataConfig data;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  PerceptualConfig perceptual;
  TrainConfig train;
  EvalConfig eval;
};

/// Full-size settings: 512^2 slices, 80^2 patches, batch 32, 50 epochs.
RunConfig standard_profile();
/// CPU-sized settings: 128^2 slices, 48^2 patches, batch 8, 30 epochs.
RunConfig desk_profile();

nlohmann::json to_json(const RunConfig& c);
/// Missing keys fall back to the profile named by "profile" (default "standard").
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies "dotted.key=value" overrides; the value is parsed as JSON when it
/// parses, otherwise taken as a string. Unknown keys are rejected.
nlohmann::json apply_overrides(nlohmann::json doc, const std::vector<std::string>& overrides);

/// Validates every section; throws ParameterError / ConfigError.
void validate(const RunConfig& c);

}  // namespace cvhct
