#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <torch/optim/optimizer.h>

#include "cvhct/archive.hpp"
#include "cvhct/config.hpp"
#include "cvhct/data_pipeline.hpp"
#include "cvhct/discriminator.hpp"
#include "cvhct/generator.hpp"
#include "cvhct/losses.hpp"
#include "cvhct/perceptual.hpp"

namespace cvhct {

enum class Direction { kA2B, kB2A };
std::string to_string(Direction d);
Direction parse_direction(const std::string& s);

/// Generator configuration with the ablation's CBAM switch applied.
GeneratorConfig effective_generator(const RunConfig& cfg);

struct LossLogRow {
  long step = 0;  ///< 0-based global step
  int epoch = 0;  ///< 0-based
  LossBreakdown losses;
};

inline constexpr const char* kLossLogMagic = "# cvhct-loss-log v1";
std::string loss_log_to_csv(const std::vector<LossLogRow>& rows);
std::vector<LossLogRow> loss_log_from_csv(const std::string& text);

/// Owns the two generators, two critics, their optimizers and the frozen
/// perceptual extractor. Seeding happens in the constructor, so two trainers
/// built from the same config start from bit-identical weights.
class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg);

  /// One alternating update: both generators on the combined objective, then
  /// both critics on their least-squares losses against detached fakes.
  /// Inputs are (m, 1, s, s) in [-1, 1].
  LossBreakdown step(const torch::Tensor& batch_a, const torch::Tensor& batch_b);

  /// Overrides the learning rate of both optimizers (0 freezes all weights).
  void set_learning_rate(double lr);

  long global_step() const { return global_step_; }
  const RunConfig& config() const { return cfg_; }
  AblationSwitches switches() const { return switches_; }

  Generator& g_a2b() { return g_a2b_; }
  Generator& g_b2a() { return g_b2a_; }
  Discriminator& d_a() { return d_a_; }
  Discriminator& d_b() { return d_b_; }
  const PerceptualExtractor& extractor() const { return *extractor_; }

  /// Weights, optimizer state, counters and config echo. `epochs_done` and
  /// the loss log are stored so a resumed run continues where this one stopped.
  TensorArchive checkpoint(int epochs_done, const std::vector<LossLogRow>& log) const;
  /// Restores weights, optimizer state and counters; returns the epochs done.
  int restore(const TensorArchive& ar, std::vector<LossLogRow>* log = nullptr);

 private:
  RunConfig cfg_;
  AblationSwitches switches_;
  LossWeights weights_;
  Generator g_a2b_{nullptr}, g_b2a_{nullptr};
  Discriminator d_a_{nullptr}, d_b_{nullptr};
  std::unique_ptr<PerceptualExtractor> extractor_;
  std::unique_ptr<torch::optim::Optimizer> opt_g_, opt_d_;
  long global_step_ = 0;
};

/// (m, 1, s, s) tensor view of a packed batch.
torch::Tensor to_tensor(const PatchBatch& b);
torch::Tensor to_tensor(const Image<float>& img);
Image<float> to_image(const torch::Tensor& t);

struct TrainOptions {
  bool resume = false;
  /// Stop after this many global steps (negative: run every epoch).
  long max_steps = -1;
  std::function<void(const LossLogRow&)> on_step;
};

struct TrainResult {
  std::vector<LossLogRow> log;
  int epochs_done = 0;
  std::filesystem::path final_checkpoint;
};

/// Full training run. Writes `<out>/checkpoints/epoch_NNN.cvhc` after every
/// epoch (pruned to `train.keep_checkpoints`), `<out>/final.cvhc` and
/// `<out>/loss_log.csv`. With `resume`, continues from the newest epoch
/// checkpoint under `<out>/checkpoints`.
TrainResult train(const RunConfig& cfg, std::vector<Image<float>> pool_a, std::vector<Image<float>> pool_b,
                  const std::filesystem::path& out_dir, const TrainOptions& opt = {});

/// Loaded single-direction generator for inference.
class Harmonizer {
 public:
  /// Throws ConfigError when the archive carries no generator for `direction`.
  Harmonizer(const TensorArchive& checkpoint, Direction direction);

  /// Whole-image, single pass. Input and output are normalized to [-1, 1].
  NormalizedImage operator()(const NormalizedImage& image);
  Direction direction() const { return direction_; }

 private:
  Direction direction_;
  Generator g_{nullptr};
};

NormalizedImage harmonize(const NormalizedImage& image, Direction direction, const TensorArchive& checkpoint);

}  // namespace cvhct
