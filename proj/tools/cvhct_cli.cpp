// Command-line front end: synth-data, train, harmonize, evaluate, residual-map.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "cvhct/archive.hpp"
#include "cvhct/config.hpp"
#include "cvhct/errors.hpp"
#include "cvhct/evaluation.hpp"
#include "cvhct/hash.hpp"
#include "cvhct/run_manifest.hpp"
#include "cvhct/slice_io.hpp"
#include "cvhct/synth.hpp"
#include "cvhct/trainer.hpp"

namespace fs = std::filesystem;
using namespace cvhct;

namespace {

struct Common {
  std::string config_path;
  std::string profile;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Run configuration (JSON)");
  cmd->add_option("--profile", c.profile, "Base profile when no config file is given (standard|desk)");
  cmd->add_option("--set", c.overrides, "Override a config key: dotted.key=value")->take_all();
}

RunConfig resolve_config(const Common& c, std::vector<std::string> extra = {}) {
  nlohmann::json doc = nlohmann::json::object();
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw IoError("cannot open config '" + c.config_path + "'");
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("config is not JSON: ") + e.what());
    }
  }
  if (!c.profile.empty()) doc["profile"] = c.profile;
  auto overrides = c.overrides;
  overrides.insert(overrides.end(), extra.begin(), extra.end());
  // Overrides are applied over the fully expanded profile so any key can be named.
  auto full = to_json(run_config_from_json(doc));
  auto cfg = run_config_from_json(apply_overrides(std::move(full), overrides));
  if (cfg.perceptual.weights_path.empty()) {
    if (const char* dir = std::getenv("CVHCT_WEIGHTS_DIR")) {
      const fs::path p = fs::path(dir) / "vgg16.cvhc";
      if (fs::exists(p)) cfg.perceptual.weights_path = p.string();
    }
  }
  validate(cfg);
  return cfg;
}

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw ParameterError("output directory '" + dir.string() + "' is not empty (use --force)");
    fs::remove_all(dir);
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

std::string extractor_id(const PerceptualConfig& p) {
  if (!p.weights_path.empty() && fs::exists(p.weights_path)) return sha256_file(p.weights_path);
  return p.allow_random_fallback ? "random-fallback:" + std::to_string(p.fallback_seed) : "";
}

int cmd_synth(const Common& c, const std::string& out, const std::vector<std::string>& extra, bool force) {
  const auto cfg = resolve_config(c, extra);
  prepare_output_dir(out, force);
  write_phantom_datasets(gen_phantom_domains(cfg.synth), out);
  auto m = make_manifest("synth-data", to_json(cfg), cfg.synth.seed);
  m.dataset_hashes = hash_directory(out);
  write_manifest(m, out);
  std::cout << "dataset " << out << " digest " << directory_digest(m.dataset_hashes) << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& data, const std::string& out, const std::vector<std::string>& extra,
              bool force, bool resume, long max_steps) {
  const auto cfg = resolve_config(c, extra);
  if (!fs::is_directory(data)) throw IoError("dataset directory '" + data + "' does not exist");
  if (resume) {
    fs::create_directories(out);
  } else {
    prepare_output_dir(out, force);
  }
  PatchSpec spec;
  spec.size = cfg.data.patch_size;
  spec.count = cfg.data.patches_per_slice;
  spec.min_tissue_fraction = cfg.data.min_tissue_fraction;
  auto pool_a = load_domain_patches(fs::path(data) / "A", cfg.data.window, cfg.data.tissue_band, spec,
                                    mix_seed(cfg.train.seed, 0xA));
  auto pool_b = load_domain_patches(fs::path(data) / "B", cfg.data.window, cfg.data.tissue_band, spec,
                                    mix_seed(cfg.train.seed, 0xB));
  std::cout << "patches A=" << pool_a.size() << " B=" << pool_b.size() << " ablation=" << to_string(cfg.train.ablation)
            << "\n";

  auto m = make_manifest("train", to_json(cfg), cfg.train.seed);
  for (const auto& [k, v] : hash_directory(data)) m.dataset_hashes[k] = v;
  m.extractor_weights = extractor_id(cfg.perceptual);
  write_manifest(m, out);

  TrainOptions opt;
  opt.resume = resume;
  opt.max_steps = max_steps;
  opt.on_step = [](const LossLogRow& r) {
    std::cout << "epoch " << r.epoch << " step " << r.step << " total_g " << r.losses.total_g << " domain "
              << r.losses.domain << "\n";
  };
  const auto res = train(cfg, std::move(pool_a), std::move(pool_b), out, opt);
  std::cout << "trained " << res.epochs_done << " epochs; checkpoint " << res.final_checkpoint << "\n";
  return 0;
}

int cmd_harmonize(const std::string& input, const std::string& dir, const std::string& ckpt, const std::string& output) {
  const Direction d = parse_direction(dir);
  const auto ar = TensorArchive::load(ckpt);
  const auto cfg = run_config_from_json(ar.meta().at("config"));
  const auto slice = load_slice(input);
  const Domain expected = d == Direction::kA2B ? Domain::A : Domain::B;
  if (slice.domain != expected) {
    std::cerr << "warning: " << input << " is tagged " << to_string(slice.domain) << " but direction "
              << to_string(d) << " expects " << to_string(expected) << "\n";
  }
  Harmonizer h(ar, d);
  const auto out = h(window_normalize(slice, cfg.data.window));
  save_slice(CTSlice{denormalize(out), opposite(expected), slice.source_id}, output);
  std::cout << "wrote " << output << "\n";
  return 0;
}

void write_text(const fs::path& p, const std::string& text) {
  write_file_atomic(p, std::vector<std::uint8_t>(text.begin(), text.end()));
}

int cmd_evaluate(const Common& c, const std::string& pairs, const std::string& ckpt, const std::string& dir,
                 const std::string& out, long roi_seed, bool force) {
  RunConfig cfg;
  std::unique_ptr<Harmonizer> h;
  if (!ckpt.empty()) {
    const auto ar = TensorArchive::load(ckpt);
    cfg = run_config_from_json(ar.meta().at("config"));
    h = std::make_unique<Harmonizer>(ar, parse_direction(dir));
  } else {
    cfg = resolve_config(c);
  }
  if (roi_seed >= 0) cfg.eval.roi_seed = static_cast<std::uint64_t>(roi_seed);
  prepare_output_dir(out, force);
  SliceTransform transform;
  if (h) transform = [&h](const NormalizedImage& x) { return (*h)(x); };
  const auto ev = evaluate_pairs(load_eval_pairs(pairs), transform, cfg.eval, cfg.data.window, cfg.data.tissue_band,
                                 configured_extractors(cfg.eval, cfg.data.window));
  write_text(fs::path(out) / "report.csv", report_to_csv(ev.report));
  write_text(fs::path(out) / "report.json", report_to_json(ev.report).dump(2) + "\n");
  for (std::size_t i = 0; i < ev.residuals.size(); ++i) {
    write_ppm(ev.residuals[i].heat, fs::path(out) / ("residual_" + std::to_string(i) + ".ppm"));
  }
  auto m = make_manifest("evaluate", to_json(cfg), cfg.eval.roi_seed);
  m.dataset_hashes["pairs"] = sha256_file(pairs);
  if (!ckpt.empty()) m.dataset_hashes["checkpoint"] = sha256_file(ckpt);
  write_manifest(m, out);
  std::cout << report_to_csv(ev.report);
  return 0;
}

int cmd_residual(const std::string& target, const std::string& synth, const std::string& out) {
  const auto t = load_slice(target);
  const auto s = load_slice(synth);
  const auto rm = residual_map(to_unit_range(window_normalize(t).pixels), to_unit_range(window_normalize(s).pixels));
  write_ppm(rm.heat, out);
  std::cout << "mean " << rm.mean << " max " << rm.max << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unpaired CT texture harmonization"};
  app.require_subcommand(1);

  Common common;
  std::string out, data, input, direction = "A2B", ckpt, output, pairs, target, synth, ablation;
  bool force = false, resume = false;
  long seed = -1, roi_seed = -1, max_steps = -1;

  auto* synth_cmd = app.add_subcommand("synth-data", "Generate the two-domain phantom dataset");
  add_common(synth_cmd, common);
  synth_cmd->add_option("--out", out, "Dataset directory")->required();
  synth_cmd->add_option("--seed", seed, "Phantom seed");
  synth_cmd->add_flag("--force", force, "Replace a non-empty output directory");

  auto* train_cmd = app.add_subcommand("train", "Train both generators and critics");
  add_common(train_cmd, common);
  train_cmd->add_option("--data", data, "Dataset directory from synth-data")->required();
  train_cmd->add_option("--out", out, "Run directory")->required();
  train_cmd->add_option("--ablation", ablation, "full|domain_loss_only|cbam_only|plain_cyclegan");
  train_cmd->add_option("--seed", seed, "Training seed");
  train_cmd->add_option("--max-steps", max_steps, "Stop after this many global steps");
  train_cmd->add_flag("--resume", resume, "Continue from the newest checkpoint in --out");
  train_cmd->add_flag("--force", force, "Replace a non-empty run directory");

  auto* harm_cmd = app.add_subcommand("harmonize", "Translate one slice");
  harm_cmd->add_option("--input", input, "Input slice (.cvhs)")->required();
  harm_cmd->add_option("--direction", direction, "A2B|B2A");
  harm_cmd->add_option("--checkpoint", ckpt, "Training checkpoint (.cvhc)")->required();
  harm_cmd->add_option("--output", output, "Output slice (.cvhs)")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "Score harmonized slices against paired targets");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--pairs", pairs, "pairs.jsonl")->required();
  eval_cmd->add_option("--checkpoint", ckpt, "Checkpoint; omit to score the unharmonized input");
  eval_cmd->add_option("--direction", direction, "A2B|B2A");
  eval_cmd->add_option("--roi-seed", roi_seed, "ROI selection seed");
  eval_cmd->add_option("--out", out, "Report directory")->required();
  eval_cmd->add_flag("--force", force, "Replace a non-empty report directory");

  auto* res_cmd = app.add_subcommand("residual-map", "Heat map of |target - synthesized|");
  res_cmd->add_option("--target", target, "Target slice")->required();
  res_cmd->add_option("--synth", synth, "Synthesized slice")->required();
  res_cmd->add_option("--out", out, "Output .ppm")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kValidation);
  }

  try {
    std::vector<std::string> extra;
    if (*synth_cmd) {
      if (seed >= 0) extra.push_back("synth.seed=" + std::to_string(seed));
      return cmd_synth(common, out, extra, force);
    }
    if (*train_cmd) {
      if (seed >= 0) extra.push_back("train.seed=" + std::to_string(seed));
      if (!ablation.empty()) extra.push_back("train.ablation=\"" + ablation + "\"");
      return cmd_train(common, data, out, extra, force, resume, max_steps);
    }
    if (*harm_cmd) return cmd_harmonize(input, direction, ckpt, output);
    if (*eval_cmd) return cmd_evaluate(common, pairs, ckpt, direction, out, roi_seed, force);
    if (*res_cmd) return cmd_residual(target, synth, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kValidation);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kIo);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kRuntime);
  }
  return 0;
}
