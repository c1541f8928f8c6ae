#include "cvhct/config.hpp"

#include <fstream>
#include <set>

namespace cvhct {

using nlohmann::json;

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kDomainLossOnly: return "domain_loss_only";
    case Ablation::kCbamOnly: return "cbam_only";
    case Ablation::kPlainCycleGan: return "plain_cyclegan";
  }
  return "unknown";
}

Ablation parse_ablation(const std::string& s) {
  for (Ablation a : {Ablation::kFull, Ablation::kDomainLossOnly, Ablation::kCbamOnly, Ablation::kPlainCycleGan}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown ablation '" + s + "' (full|domain_loss_only|cbam_only|plain_cyclegan)");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "momentum"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "momentum") return OptimizerKind::kMomentum;
  throw ConfigError("unknown optimizer '" + s + "' (adam|momentum)");
}

std::string to_string(SpatialGate g) { return g == SpatialGate::kSigmoid ? "sigmoid" : "softmax"; }

SpatialGate parse_spatial_gate(const std::string& s) {
  if (s == "sigmoid") return SpatialGate::kSigmoid;
  if (s == "softmax") return SpatialGate::kSoftmax;
  throw ConfigError("unknown spatial gate '" + s + "' (sigmoid|softmax)");
}

std::string to_string(GramNorm g) {
  switch (g) {
    case GramNorm::kNone: return "none";
    case GramNorm::kPositions: return "positions";
    case GramNorm::kChannelsPositions: return "channels_positions";
  }
  return "?";
}

GramNorm parse_gram_norm(const std::string& s) {
  if (s == "none") return GramNorm::kNone;
  if (s == "positions") return GramNorm::kPositions;
  if (s == "channels_positions") return GramNorm::kChannelsPositions;
  throw ConfigError("unknown gram normalization '" + s + "' (none|positions|channels_positions)");
}

AblationSwitches switches_for(Ablation a) {
  switch (a) {
    case Ablation::kFull: return {true, true};
    case Ablation::kDomainLossOnly: return {false, true};
    case Ablation::kCbamOnly: return {true, false};
    case Ablation::kPlainCycleGan: return {false, false};
  }
  return {false, false};
}

void validate(const GeneratorConfig& c) {
  if (c.stride != 1) throw ParameterError("generator stride must be 1");
  if (c.n_conv_layers < 2) throw ParameterError("generator needs at least two convolutions");
  if (c.filters < 1 || c.kernel < 1 || c.in_channels < 1) throw ParameterError("generator sizes must be positive");
  if (c.use_cbam) {
    if (static_cast<int>(c.cbam_after.size()) != c.n_cbam) {
      throw ParameterError("cbam_after must list exactly n_cbam positions");
    }
    std::set<int> seen;
    for (int p : c.cbam_after) {
      if (p < 1 || p >= c.n_conv_layers) {
        throw ParameterError("CBAM position " + std::to_string(p) + " must precede the output convolution");
      }
      if (!seen.insert(p).second) throw ParameterError("duplicate CBAM position");
    }
    if (c.cbam_mlp_reduction < 1) throw ParameterError("cbam_mlp_reduction must be positive");
    if (c.spatial_kernel < 1 || c.spatial_kernel % 2 == 0) throw ParameterError("spatial_kernel must be odd");
  }
}

void validate(const DiscriminatorConfig& c) {
  if (c.strides.empty()) throw ParameterError("discriminator needs hidden layers");
  for (int s : c.strides) {
    if (s < 1) throw ParameterError("discriminator strides must be positive");
  }
  for (int l : c.norm_layers) {
    if (l < 1 || l > c.n_hidden()) throw ParameterError("norm layer index out of range");
  }
  if (c.kernel < 1 || c.padding < 0 || c.base_filters < 1 || c.max_filters < c.base_filters) {
    throw ParameterError("invalid discriminator sizes");
  }
}

void validate(const StyleTaps& t) {
  if (t.layer_ids.empty()) throw ParameterError("at least one style tap is required");
  if (t.layer_ids.size() != t.weights.size()) throw ParameterError("one weight per style tap is required");
  double total = 0;
  for (double w : t.weights) {
    if (w < 0) throw ParameterError("style tap weights must be non-negative");
    total += w;
  }
  if (total <= 0) throw ParameterError("style tap weights must not all be zero");
}

void validate(const LossWeights& w) {
  for (double l : {w.lambda1, w.lambda2, w.lambda3}) {
    if (!(l >= 0.0 && l <= 1.0)) throw ParameterError("loss weights must lie in [0, 1]");
  }
}

void validate(const TrainConfig& c) {
  if (c.epochs < 1) throw ParameterError("epochs must be at least 1");
  if (!(c.lr > 0)) throw ParameterError("learning rate must be positive");
  if (c.batch < 1) throw ParameterError("batch must be positive");
  if (!(c.momentum_beta >= 0 && c.momentum_beta < 1)) throw ParameterError("momentum_beta must lie in [0, 1)");
  if (!(c.beta2 >= 0 && c.beta2 < 1)) throw ParameterError("beta2 must lie in [0, 1)");
  if (c.keep_checkpoints < 0) throw ParameterError("keep_checkpoints must be non-negative");
  validate(c.weights);
}

RunConfig standard_profile() {
  RunConfig c;
  c.synth.side = 512;
  return c;
}

RunConfig desk_profile() {
  RunConfig c;
  c.profile = "desk";
  c.synth.side = 128;
  c.synth.n_slices_per_domain = 16;
  c.synth.n_eval_pairs = 8;
  c.data.patch_size = 48;
  c.data.patches_per_slice = 4;
  c.train.batch = 8;
  c.train.epochs = 30;
  return c;
}

json to_json(const RunConfig& c) {
  json j;
  j["profile"] = c.profile;
  j["synth"] = to_json(c.synth);
  j["data"] = {{"window", {c.data.window.lo, c.data.window.hi}},
               {"tissue_band", {c.data.tissue_band.lo, c.data.tissue_band.hi}},
               {"patch_size", c.data.patch_size},
               {"patches_per_slice", c.data.patches_per_slice},
               {"min_tissue_fraction", c.data.min_tissue_fraction}};
  const auto& g = c.generator;
  j["generator"] = {{"n_conv_layers", g.n_conv_layers}, {"filters", g.filters},
                    {"kernel", g.kernel},               {"stride", g.stride},
                    {"n_cbam", g.n_cbam},               {"cbam_mlp_reduction", g.cbam_mlp_reduction},
                    {"spatial_kernel", g.spatial_kernel}, {"cbam_after", g.cbam_after},
                    {"use_cbam", g.use_cbam},           {"spatial_gate", to_string(g.spatial_gate)},
                    {"leaky_slope", g.leaky_slope},     {"in_channels", g.in_channels},
                    {"input_skip", g.input_skip}};
  const auto& d = c.discriminator;
  j["discriminator"] = {{"kernel", d.kernel},           {"padding", d.padding},
                        {"base_filters", d.base_filters}, {"max_filters", d.max_filters},
                        {"strides", d.strides},         {"norm_layers", d.norm_layers},
                        {"leaky_slope", d.leaky_slope}, {"in_channels", d.in_channels}};
  const auto& p = c.perceptual;
  j["perceptual"] = {{"weights_path", p.weights_path},
                     {"allow_random_fallback", p.allow_random_fallback},
                     {"fallback_seed", p.fallback_seed},
                     {"taps", p.taps.layer_ids},
                     {"tap_weights", p.taps.weights}};
  const auto& t = c.train;
  j["train"] = {{"epochs", t.epochs},
                {"lr", t.lr},
                {"momentum_beta", t.momentum_beta},
                {"beta2", t.beta2},
                {"batch", t.batch},
                {"weights", {{"lambda1", t.weights.lambda1}, {"lambda2", t.weights.lambda2}, {"lambda3", t.weights.lambda3}}},
                {"gram_norm", to_string(t.gram_norm)},
                {"ablation", to_string(t.ablation)},
                {"optimizer", to_string(t.optimizer)},
                {"seed", t.seed},
                {"keep_checkpoints", t.keep_checkpoints}};
  const auto& e = c.eval;
  j["eval"] = {{"roi_size", e.roi_size},
               {"roi_count", e.roi_count},
               {"roi_min_fraction", e.roi_min_fraction},
               {"roi_seed", e.roi_seed},
               {"quantization",
                {{"levels", e.quantization.levels},
                 {"range", e.quantization.range == Quantization::Range::kFixed ? "fixed" : "roi"},
                 {"lo", e.quantization.lo},
                 {"hi", e.quantization.hi}}},
               {"plugins", e.plugins}};
  return j;
}

namespace {

// Recursively checks that every key of `doc` exists in `schema`.
void reject_unknown(const json& doc, const json& schema, const std::string& path) {
  if (!doc.is_object()) return;
  for (const auto& [k, v] : doc.items()) {
    if (!schema.contains(k)) throw ConfigError("unknown config key '" + path + k + "'");
    if (v.is_object() && schema[k].is_object() && k != "plugins") reject_unknown(v, schema[k], path + k + ".");
  }
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  const std::string profile = j.value("profile", std::string("standard"));
  RunConfig c;
  if (profile == "desk") {
    c = desk_profile();
  } else if (profile != "standard") {
    throw ConfigError("unknown profile '" + profile + "' (standard|desk)");
  }
  // Merge the document over the profile's own serialization so partial
  // documents only override what they name.
  json base = to_json(c);
  reject_unknown(j, base, "");
  base.merge_patch(j);
  try {
    c.profile = base["profile"];
    c.synth = phantom_spec_from_json(base["synth"]);
    const auto& d = base["data"];
    c.data.window = {d["window"][0].get<int>(), d["window"][1].get<int>()};
    c.data.tissue_band = {d["tissue_band"][0].get<int>(), d["tissue_band"][1].get<int>()};
    c.data.patch_size = d["patch_size"];
    c.data.patches_per_slice = d["patches_per_slice"];
    c.data.min_tissue_fraction = d["min_tissue_fraction"];
    const auto& g = base["generator"];
    c.generator.n_conv_layers = g["n_conv_layers"];
    c.generator.filters = g["filters"];
    c.generator.kernel = g["kernel"];
    c.generator.stride = g["stride"];
    c.generator.n_cbam = g["n_cbam"];
    c.generator.cbam_mlp_reduction = g["cbam_mlp_reduction"];
    c.generator.spatial_kernel = g["spatial_kernel"];
    c.generator.cbam_after = g["cbam_after"].get<std::vector<int>>();
    c.generator.use_cbam = g["use_cbam"];
    c.generator.spatial_gate = parse_spatial_gate(g["spatial_gate"]);
    c.generator.leaky_slope = g["leaky_slope"];
    c.generator.in_channels = g["in_channels"];
    c.generator.input_skip = g["input_skip"];
    const auto& ds = base["discriminator"];
    c.discriminator.kernel = ds["kernel"];
    c.discriminator.padding = ds["padding"];
    c.discriminator.base_filters = ds["base_filters"];
    c.discriminator.max_filters = ds["max_filters"];
    c.discriminator.strides = ds["strides"].get<std::vector<int>>();
    c.discriminator.norm_layers = ds["norm_layers"].get<std::vector<int>>();
    c.discriminator.leaky_slope = ds["leaky_slope"];
    c.discriminator.in_channels = ds["in_channels"];
    const auto& p = base["perceptual"];
    c.perceptual.weights_path = p["weights_path"];
    c.perceptual.allow_random_fallback = p["allow_random_fallback"];
    c.perceptual.fallback_seed = p["fallback_seed"];
    c.perceptual.taps.layer_ids = p["taps"].get<std::vector<std::string>>();
    c.perceptual.taps.weights = p["tap_weights"].get<std::vector<double>>();
    const auto& t = base["train"];
    c.train.epochs = t["epochs"];
    c.train.lr = t["lr"];
    c.train.momentum_beta = t["momentum_beta"];
    c.train.beta2 = t["beta2"];
    c.train.batch = t["batch"];
    c.train.weights = {t["weights"]["lambda1"], t["weights"]["lambda2"], t["weights"]["lambda3"]};
    c.train.gram_norm = parse_gram_norm(t["gram_norm"]);
    c.train.ablation = parse_ablation(t["ablation"]);
    c.train.optimizer = parse_optimizer(t["optimizer"]);
    c.train.seed = t["seed"];
    c.train.keep_checkpoints = t["keep_checkpoints"];
    const auto& e = base["eval"];
    c.eval.roi_size = e["roi_size"];
    c.eval.roi_count = e["roi_count"];
    c.eval.roi_min_fraction = e["roi_min_fraction"];
    c.eval.roi_seed = e["roi_seed"];
    c.eval.quantization.levels = e["quantization"]["levels"];
    const std::string range = e["quantization"]["range"];
    if (range != "fixed" && range != "roi") throw ConfigError("quantization range must be fixed|roi");
    c.eval.quantization.range = range == "fixed" ? Quantization::Range::kFixed : Quantization::Range::kRoi;
    c.eval.quantization.lo = e["quantization"]["lo"];
    c.eval.quantization.hi = e["quantization"]["hi"];
    c.eval.plugins = e["plugins"].get<std::map<std::string, std::string>>();
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("malformed config: ") + ex.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  try {
    return run_config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

json apply_overrides(json doc, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    const std::string key = o.substr(0, eq), raw = o.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (part.empty()) throw ConfigError("override key '" + key + "' has an empty segment");
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
  return doc;
}

void validate(const RunConfig& c) {
  validate(c.synth);
  if (c.data.window.lo >= c.data.window.hi) throw ParameterError("window lo must be below hi");
  if (c.data.tissue_band.lo > c.data.tissue_band.hi) throw ParameterError("tissue band lo must not exceed hi");
  if (c.data.patch_size < 1) throw ParameterError("patch_size must be positive");
  if (c.data.patches_per_slice < 1) throw ParameterError("patches_per_slice must be positive");
  if (!(c.data.min_tissue_fraction > 0 && c.data.min_tissue_fraction <= 1)) {
    throw ParameterError("min_tissue_fraction must lie in (0, 1]");
  }
  validate(c.generator);
  validate(c.discriminator);
  validate(c.perceptual.taps);
  validate(c.train);
  if (c.eval.roi_size < 2 || c.eval.roi_count < 2) throw ParameterError("need ROIs of at least 2x2 and at least 2 ROIs");
  if (c.eval.quantization.levels < 1) throw ParameterError("quantization levels must be positive");
  for (const auto& [cls, cmd] : c.eval.plugins) {
    const auto fc = parse_feature_class(cls);
    if (fc == FeatureClass::kFirstOrder || fc == FeatureClass::kGlcm) {
      throw ConfigError("feature class '" + cls + "' is computed natively");
    }
    if (cmd.empty()) throw ConfigError("empty plugin command for '" + cls + "'");
  }
}

}  // namespace cvhct
