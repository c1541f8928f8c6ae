#include "cvhct/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "cvhct/errors.hpp"
#include "cvhct/hash.hpp"
#include "cvhct/slice_io.hpp"
#include "cvhct/version.hpp"

namespace cvhct {

namespace fs = std::filesystem;

std::string to_string(Direction d) { return d == Direction::kA2B ? "A2B" : "B2A"; }

Direction parse_direction(const std::string& s) {
  if (s == "A2B" || s == "a2b") return Direction::kA2B;
  if (s == "B2A" || s == "b2a") return Direction::kB2A;
  throw ConfigError("unknown direction '" + s + "' (A2B|B2A)");
}

GeneratorConfig effective_generator(const RunConfig& cfg) {
  GeneratorConfig g = cfg.generator;
  g.use_cbam = g.use_cbam && switches_for(cfg.train.ablation).use_cbam;
  return g;
}

// ---- loss log ---------------------------------------------------------------

std::string loss_log_to_csv(const std::vector<LossLogRow>& rows) {
  std::ostringstream os;
  os << kLossLogMagic << "\nstep,epoch";
  for (const auto& n : LossBreakdown::field_names()) os << ',' << n;
  os << '\n';
  char buf[32];
  for (const auto& r : rows) {
    os << r.step << ',' << r.epoch;
    for (double v : r.losses.values()) {
      std::snprintf(buf, sizeof buf, "%.9g", v);
      os << ',' << buf;
    }
    os << '\n';
  }
  return os.str();
}

std::vector<LossLogRow> loss_log_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kLossLogMagic) throw FormatError("loss log lacks the version line");
  if (!std::getline(is, line)) throw FormatError("loss log lacks a header");
  std::vector<LossLogRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> f;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(std::stod(cell));
    if (f.size() != 10) throw FormatError("loss log row has " + std::to_string(f.size()) + " fields");
    LossLogRow r;
    r.step = static_cast<long>(f[0]);
    r.epoch = static_cast<int>(f[1]);
    r.losses = {f[2], f[3], f[4], f[5], f[6], f[7], f[8], f[9]};
    rows.push_back(r);
  }
  return rows;
}

// ---- tensors ----------------------------------------------------------------

torch::Tensor to_tensor(const PatchBatch& b) {
  return torch::from_blob(const_cast<float*>(b.values.data()), {b.m, 1, b.size, b.size}, torch::kFloat32).clone();
}

torch::Tensor to_tensor(const Image<float>& img) {
  return torch::from_blob(const_cast<float*>(img.pixels().data()), {1, 1, img.height(), img.width()}, torch::kFloat32)
      .clone();
}

Image<float> to_image(const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kFloat32).contiguous();
  if (c.dim() != 4 || c.size(0) != 1 || c.size(1) != 1) throw ShapeError("expected a (1, 1, H, W) tensor");
  const int h = static_cast<int>(c.size(2)), w = static_cast<int>(c.size(3));
  const float* p = c.data_ptr<float>();
  return Image<float>(h, w, std::vector<float>(p, p + static_cast<std::size_t>(h) * w));
}

// ---- trainer ----------------------------------------------------------------

namespace {

std::unique_ptr<torch::optim::Optimizer> make_optimizer(const TrainConfig& t, std::vector<torch::Tensor> params) {
  if (t.optimizer == OptimizerKind::kAdam) {
    return std::make_unique<torch::optim::Adam>(
        std::move(params), torch::optim::AdamOptions(t.lr).betas({t.momentum_beta, t.beta2}));
  }
  return std::make_unique<torch::optim::SGD>(std::move(params), torch::optim::SGDOptions(t.lr).momentum(t.momentum_beta));
}

std::vector<torch::Tensor> joint_parameters(torch::nn::Module& a, torch::nn::Module& b) {
  auto p = a.parameters();
  auto q = b.parameters();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

void set_trainable(torch::nn::Module& m, bool on) {
  for (auto& p : m.parameters()) p.set_requires_grad(on);
}

std::vector<std::uint8_t> to_bytes(const std::string& s) { return {s.begin(), s.end()}; }

std::vector<std::uint8_t> save_optimizer(const torch::optim::Optimizer& o) {
  torch::serialize::OutputArchive ar;
  o.save(ar);
  std::ostringstream os;
  ar.save_to(os);
  return to_bytes(os.str());
}

void load_optimizer(torch::optim::Optimizer& o, const std::vector<std::uint8_t>& bytes) {
  std::istringstream is(std::string(bytes.begin(), bytes.end()));
  torch::serialize::InputArchive ar;
  ar.load_from(is);
  o.load(ar);
}

double scalar(const torch::Tensor& t) { return t.item<double>(); }

}  // namespace

Trainer::Trainer(const RunConfig& cfg) : cfg_(cfg), switches_(switches_for(cfg.train.ablation)) {
  validate(cfg_);
  weights_ = cfg_.train.weights;
  if (!switches_.use_domain_loss) weights_.lambda3 = 0.0;
  torch::manual_seed(cfg_.train.seed);
  const auto gcfg = effective_generator(cfg_);
  g_a2b_ = Generator(gcfg);
  g_b2a_ = Generator(gcfg);
  d_a_ = Discriminator(cfg_.discriminator);
  d_b_ = Discriminator(cfg_.discriminator);
  extractor_ = std::make_unique<PerceptualExtractor>(cfg_.perceptual);
  opt_g_ = make_optimizer(cfg_.train, joint_parameters(*g_a2b_, *g_b2a_));
  opt_d_ = make_optimizer(cfg_.train, joint_parameters(*d_a_, *d_b_));
}

void Trainer::set_learning_rate(double lr) {
  for (auto* o : {opt_g_.get(), opt_d_.get()}) {
    for (auto& g : o->param_groups()) g.options().set_lr(lr);
  }
}

LossBreakdown Trainer::step(const torch::Tensor& a, const torch::Tensor& b) {
  const long step_id = global_step_;
  LossBreakdown out;

  // Generator phase: critics are fixed inputs to the objective.
  set_trainable(*d_a_, false);
  set_trainable(*d_b_, false);
  const auto fake_b = g_a2b_(a);
  const auto fake_a = g_b2a_(b);
  const auto adv_a2b = adversarial_loss_generator(d_b_(fake_b));
  const auto adv_b2a = adversarial_loss_generator(d_a_(fake_a));
  const auto cyc = cycle_loss(g_b2a_(fake_b), a, g_a2b_(fake_a), b);
  const auto idt = (g_a2b_(b) - b).abs().mean() + (g_b2a_(a) - a).abs().mean();
  torch::Tensor dom = torch::zeros({});
  if (switches_.use_domain_loss) dom = domain_loss(fake_b, b, fake_a, a, *extractor_, cfg_.train.gram_norm).total;

  out.adv_g_a2b = scalar(adv_a2b);
  out.adv_g_b2a = scalar(adv_b2a);
  out.cyc = scalar(cyc);
  out.idt = scalar(idt);
  out.domain = scalar(dom);
  out.total_g = total_generator_loss(out, weights_, step_id);
  const auto total = adv_a2b + adv_b2a + weights_.lambda1 * cyc + weights_.lambda2 * idt + weights_.lambda3 * dom;
  opt_g_->zero_grad();
  total.backward();
  opt_g_->step();
  set_trainable(*d_a_, true);
  set_trainable(*d_b_, true);

  // Critic phase on detached synthetics.
  const auto loss_d_a = adversarial_loss_discriminator(d_a_(a), d_a_(fake_a.detach()));
  const auto loss_d_b = adversarial_loss_discriminator(d_b_(b), d_b_(fake_b.detach()));
  out.adv_d_a = scalar(loss_d_a);
  out.adv_d_b = scalar(loss_d_b);
  require_finite("adv_d_a", out.adv_d_a, step_id);
  require_finite("adv_d_b", out.adv_d_b, step_id);
  opt_d_->zero_grad();
  (loss_d_a + loss_d_b).backward();
  opt_d_->step();

  ++global_step_;
  return out;
}

TensorArchive Trainer::checkpoint(int epochs_done, const std::vector<LossLogRow>& log) const {
  TensorArchive ar;
  const auto cfg_json = to_json(cfg_);
  const auto cfg_text = cfg_json.dump();
  ar.meta() = {{"kind", "cvhct-checkpoint"},
               {"code_version", kVersion},
               {"config", cfg_json},
               {"config_hash", sha256_hex(std::string(kVersion) + "\n" + cfg_text)},
               {"epochs_done", epochs_done},
               {"global_step", global_step_},
               {"perceptual_weights", extractor_->weights_id()}};
  save_module(ar, "g_a2b", *g_a2b_);
  save_module(ar, "g_b2a", *g_b2a_);
  save_module(ar, "d_a", *d_a_);
  save_module(ar, "d_b", *d_b_);
  ar.put_bytes("optim.g", save_optimizer(*opt_g_));
  ar.put_bytes("optim.d", save_optimizer(*opt_d_));
  {
    auto gen = at::detail::getDefaultCPUGenerator();
    std::lock_guard<std::mutex> lock(gen.mutex());
    const auto state = gen.get_state();
    const auto* p = state.data_ptr<std::uint8_t>();
    ar.put_bytes("rng.cpu", std::vector<std::uint8_t>(p, p + state.numel()));
  }
  ar.put_bytes("loss_log", to_bytes(loss_log_to_csv(log)));
  return ar;
}

int Trainer::restore(const TensorArchive& ar, std::vector<LossLogRow>* log) {
  if (ar.meta().value("kind", "") != "cvhct-checkpoint") throw FormatError("archive is not a training checkpoint");
  const auto saved = run_config_from_json(ar.meta().at("config"));
  if (to_json(saved).dump() != to_json(cfg_).dump()) {
    throw ConfigError("checkpoint was written with a different configuration");
  }
  load_module(ar, "g_a2b", *g_a2b_);
  load_module(ar, "g_b2a", *g_b2a_);
  load_module(ar, "d_a", *d_a_);
  load_module(ar, "d_b", *d_b_);
  load_optimizer(*opt_g_, ar.bytes("optim.g"));
  load_optimizer(*opt_d_, ar.bytes("optim.d"));
  if (ar.has("rng.cpu")) {
    const auto& bytes = ar.bytes("rng.cpu");
    auto state = torch::empty({static_cast<int64_t>(bytes.size())}, torch::kUInt8);
    std::copy(bytes.begin(), bytes.end(), state.data_ptr<std::uint8_t>());
    auto gen = at::detail::getDefaultCPUGenerator();
    std::lock_guard<std::mutex> lock(gen.mutex());
    gen.set_state(state);
  }
  global_step_ = ar.meta().at("global_step").get<long>();
  if (log) {
    const auto& bytes = ar.bytes("loss_log");
    *log = loss_log_from_csv(std::string(bytes.begin(), bytes.end()));
  }
  return ar.meta().at("epochs_done").get<int>();
}

// ---- training loop ----------------------------------------------------------

namespace {

std::vector<fs::path> epoch_checkpoints(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.starts_with("epoch_") && e.path().extension() == ".cvhc") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string epoch_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.cvhc", epoch);
  return buf;
}

}  // namespace

TrainResult train(const RunConfig& cfg, std::vector<Image<float>> pool_a, std::vector<Image<float>> pool_b,
                  const fs::path& out_dir, const TrainOptions& opt) {
  validate(cfg);
  UnpairedBatchStream stream(std::move(pool_a), std::move(pool_b), cfg.train.batch, mix_seed(cfg.train.seed, 0x5354));
  if (stream.steps_per_epoch() == 0) {
    throw ParameterError("patch pools are smaller than one batch of " + std::to_string(cfg.train.batch));
  }
  const fs::path ckpt_dir = out_dir / "checkpoints";
  std::error_code ec;
  fs::create_directories(ckpt_dir, ec);
  if (ec) throw IoError("cannot create " + ckpt_dir.string() + ": " + ec.message());

  Trainer trainer(cfg);
  TrainResult result;
  int start_epoch = 0;
  if (opt.resume) {
    const auto existing = epoch_checkpoints(ckpt_dir);
    if (!existing.empty()) start_epoch = trainer.restore(TensorArchive::load(existing.back()), &result.log);
  }

  const auto write_log = [&] {
    const auto text = loss_log_to_csv(result.log);
    write_file_atomic(out_dir / "loss_log.csv", std::vector<std::uint8_t>(text.begin(), text.end()));
  };

  result.epochs_done = start_epoch;
  for (int epoch = start_epoch; epoch < cfg.train.epochs; ++epoch) {
    for (int s = 0; s < stream.steps_per_epoch(); ++s) {
      if (opt.max_steps >= 0 && trainer.global_step() >= opt.max_steps) {
        write_log();
        return result;
      }
      const auto [ba, bb] = stream.batch(epoch, s);
      LossLogRow row{trainer.global_step(), epoch, trainer.step(to_tensor(ba), to_tensor(bb))};
      result.log.push_back(row);
      if (opt.on_step) opt.on_step(row);
    }
    result.epochs_done = epoch + 1;
    const auto ar = trainer.checkpoint(result.epochs_done, result.log);
    ar.save(ckpt_dir / epoch_name(result.epochs_done));
    write_log();
    if (cfg.train.keep_checkpoints > 0) {
      auto all = epoch_checkpoints(ckpt_dir);
      const auto keep = static_cast<std::size_t>(cfg.train.keep_checkpoints);
      for (std::size_t i = 0; i + keep < all.size(); ++i) fs::remove(all[i], ec);
    }
  }
  result.final_checkpoint = out_dir / "final.cvhc";
  trainer.checkpoint(result.epochs_done, result.log).save(result.final_checkpoint);
  write_log();
  return result;
}

// ---- inference --------------------------------------------------------------

Harmonizer::Harmonizer(const TensorArchive& ar, Direction direction) : direction_(direction) {
  if (!ar.meta().contains("config")) throw ConfigError("checkpoint carries no configuration echo");
  const std::string prefix = direction == Direction::kA2B ? "g_a2b" : "g_b2a";
  if (ar.names_with_prefix(prefix + ".").empty()) {
    throw ConfigError("checkpoint has no " + to_string(direction) + " generator");
  }
  const auto cfg = run_config_from_json(ar.meta().at("config"));
  g_ = Generator(effective_generator(cfg));
  load_module(ar, prefix, *g_);
  g_->eval();
  for (auto& p : g_->parameters()) p.set_requires_grad(false);
}

NormalizedImage Harmonizer::operator()(const NormalizedImage& image) {
  torch::NoGradGuard guard;
  NormalizedImage out;
  out.window = image.window;
  out.pixels = to_image(g_(to_tensor(image.pixels)));
  return out;
}

NormalizedImage harmonize(const NormalizedImage& image, Direction direction, const TensorArchive& checkpoint) {
  Harmonizer h(checkpoint, direction);
  return h(image);
}

}  // namespace cvhct
