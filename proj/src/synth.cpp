#include "cvhct/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "cvhct/data_pipeline.hpp"

namespace cvhct {

namespace fs = std::filesystem;

void validate(const PhantomSpec& s) {
  if (s.n_slices_per_domain <= 0) throw ParameterError("n_slices_per_domain must be positive");
  if (s.side < 128) throw ParameterError("phantom side must be at least 128");
  if (s.side > 4096) throw ParameterError("phantom side must be at most 4096");
  if (s.ellipse_count_min < 0 || s.ellipse_count_max < s.ellipse_count_min) {
    throw ParameterError("invalid ellipse_count_range");
  }
  if (s.texture.noise_std < 0 || s.texture.blur_sigma < 0 || s.texture.unsharp_sigma < 0 ||
      s.base_noise_std < 0) {
    throw ParameterError("noise and blur parameters must be non-negative");
  }
  if (s.n_eval_pairs < 0) throw ParameterError("n_eval_pairs must be non-negative");
}

namespace {

// Stream tags for counter-based seed splitting.
constexpr std::uint64_t kTagAnatomyA = 1, kTagAnatomyB = 2, kTagAnatomyEval = 3;
constexpr std::uint64_t kTagGrainA = 11, kTagGrainB = 12, kTagGrainEvalA = 13, kTagGrainEvalB = 14;
constexpr std::uint64_t kTagNoiseB = 21, kTagNoiseEval = 22;

std::uint64_t stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  return mix_seed(mix_seed(seed, tag), index);
}

struct Ellipse {
  double cx, cy, a, b, theta, hu;
};

void paint(std::vector<double>& img, int side, const Ellipse& e) {
  const double c = std::cos(e.theta), s = std::sin(e.theta);
  const int r0 = std::max(0, static_cast<int>(e.cy - std::max(e.a, e.b)) - 1);
  const int r1 = std::min(side - 1, static_cast<int>(e.cy + std::max(e.a, e.b)) + 1);
  const int c0 = std::max(0, static_cast<int>(e.cx - std::max(e.a, e.b)) - 1);
  const int c1 = std::min(side - 1, static_cast<int>(e.cx + std::max(e.a, e.b)) + 1);
  for (int r = r0; r <= r1; ++r) {
    for (int col = c0; col <= c1; ++col) {
      const double dx = col + 0.5 - e.cx, dy = r + 0.5 - e.cy;
      const double u = (c * dx + s * dy) / e.a, v = (-s * dx + c * dy) / e.b;
      if (u * u + v * v <= 1.0) img[static_cast<std::size_t>(r) * side + col] = e.hu;
    }
  }
}

void add_noise(std::vector<double>& img, double std_hu, std::uint64_t seed) {
  if (std_hu <= 0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, std_hu);
  for (auto& v : img) v += n(rng);
}

CTSlice to_slice(const std::vector<double>& hu, int side, Domain d, std::string id) {
  std::vector<std::int16_t> px(hu.size());
  for (std::size_t i = 0; i < hu.size(); ++i) {
    px[i] = static_cast<std::int16_t>(std::clamp(std::round(hu[i]), -32768.0, 32767.0));
  }
  CTSlice s;
  s.hu = Image<std::int16_t>(side, side, std::move(px));
  s.domain = d;
  s.source_id = std::move(id);
  return s;
}

std::string numbered(const std::string& prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04d", prefix.c_str(), i);
  return buf;
}

}  // namespace

std::vector<double> render_anatomy(int side, int ellipse_min, int ellipse_max, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  std::vector<double> img(static_cast<std::size_t>(side) * side, -1000.0);
  const double mid = side / 2.0;
  // Body: fat envelope around a muscle core.
  const double ax = uniform(0.36, 0.44) * side, ay = uniform(0.30, 0.40) * side;
  const double tilt = uniform(-0.15, 0.15);
  const double ccx = mid + uniform(-0.03, 0.03) * side, ccy = mid + uniform(-0.03, 0.03) * side;
  paint(img, side, {ccx, ccy, ax, ay, tilt, -90.0});
  const double shell = uniform(0.82, 0.92);
  paint(img, side, {ccx, ccy, ax * shell, ay * shell, tilt, 45.0});

  // Organs and inclusions; mostly soft tissue, occasionally lung or bone.
  const int n = ellipse_min + static_cast<int>(u01(rng) * (ellipse_max - ellipse_min + 1));
  for (int k = 0; k < n; ++k) {
    const double pick = u01(rng);
    double hu;
    if (pick < 0.08) {
      hu = uniform(-850.0, -700.0);
    } else if (pick < 0.16) {
      hu = uniform(400.0, 800.0);
    } else {
      hu = uniform(-120.0, 180.0);
    }
    const double rr = uniform(0.0, 0.6), phi = uniform(0.0, 2.0 * std::numbers::pi);
    Ellipse e{ccx + rr * ax * shell * std::cos(phi), ccy + rr * ay * shell * std::sin(phi),
              uniform(0.04, 0.16) * side, uniform(0.04, 0.16) * side, uniform(0.0, std::numbers::pi), hu};
    paint(img, side, e);
  }
  return img;
}

std::vector<double> gaussian_blur(const std::vector<double>& img, int height, int width, double sigma) {
  if (sigma <= 0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;

  auto mirror = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
  };
  std::vector<double> tmp(img.size()), out(img.size());
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * img[r * width + mirror(c + i, width)];
      tmp[r * width + c] = acc;
    }
  }
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp[mirror(r + i, height) * width + c];
      out[r * width + c] = acc;
    }
  }
  return out;
}

std::vector<double> apply_texture_transform(const std::vector<double>& img, int height, int width,
                                            const TextureTransform& t, std::uint64_t seed) {
  auto out = gaussian_blur(img, height, width, t.blur_sigma);
  if (t.sharpen_gain != 0.0) {
    const auto soft = gaussian_blur(out, height, width, t.unsharp_sigma);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t.sharpen_gain * (out[i] - soft[i]);
  }
  add_noise(out, t.noise_std, seed);
  return out;
}

HuHistogram HuHistogram::of(const CTSlice& s) {
  HuHistogram h;
  h.counts.assign(bins(), 0);
  for (std::int16_t v : s.hu.pixels()) {
    if (v < kLo) {
      ++h.underflow;
    } else if (v >= kHi) {
      ++h.overflow;
    } else {
      ++h.counts[(v - kLo) / kBinWidth];
    }
  }
  return h;
}

PhantomDatasets gen_phantom_domains(const PhantomSpec& spec) {
  validate(spec);
  PhantomDatasets out;
  const int side = spec.side;
  for (int i = 0; i < spec.n_slices_per_domain; ++i) {
    auto a = render_anatomy(side, spec.ellipse_count_min, spec.ellipse_count_max, stream(spec.seed, kTagAnatomyA, i));
    add_noise(a, spec.base_noise_std, stream(spec.seed, kTagGrainA, i));
    out.domain_a.push_back(to_slice(a, side, Domain::A, numbered("a", i)));

    auto b = render_anatomy(side, spec.ellipse_count_min, spec.ellipse_count_max, stream(spec.seed, kTagAnatomyB, i));
    add_noise(b, spec.base_noise_std, stream(spec.seed, kTagGrainB, i));
    b = apply_texture_transform(b, side, side, spec.texture, stream(spec.seed, kTagNoiseB, i));
    out.domain_b.push_back(to_slice(b, side, Domain::B, numbered("b", i)));
  }
  for (int i = 0; i < spec.n_eval_pairs; ++i) {
    const auto anatomy =
        render_anatomy(side, spec.ellipse_count_min, spec.ellipse_count_max, stream(spec.seed, kTagAnatomyEval, i));
    auto a = anatomy;
    add_noise(a, spec.base_noise_std, stream(spec.seed, kTagGrainEvalA, i));
    auto b = anatomy;
    add_noise(b, spec.base_noise_std, stream(spec.seed, kTagGrainEvalB, i));
    b = apply_texture_transform(b, side, side, spec.texture, stream(spec.seed, kTagNoiseEval, i));
    out.eval_pairs.push_back({to_slice(a, side, Domain::A, numbered("eval_a", i)),
                              to_slice(b, side, Domain::B, numbered("eval_b", i))});
  }
  out.transform_record = {
      {"applied_to", "B"},
      {"order", {"gaussian_blur", "unsharp_mask", "additive_gaussian_noise"}},
      {"blur_sigma_px", spec.texture.blur_sigma},
      {"sharpen_gain", spec.texture.sharpen_gain},
      {"unsharp_sigma_px", spec.texture.unsharp_sigma},
      {"noise_std_hu", spec.texture.noise_std},
      {"base_noise_std_hu", spec.base_noise_std},
      {"seed", spec.seed},
      {"spec", to_json(spec)},
  };
  return out;
}

void write_phantom_datasets(const PhantomDatasets& data, const fs::path& root) {
  nlohmann::json hist;
  hist["lo_hu"] = HuHistogram::kLo;
  hist["hi_hu"] = HuHistogram::kHi;
  hist["bin_width_hu"] = HuHistogram::kBinWidth;
  hist["slices"] = nlohmann::json::object();
  auto record = [&](const CTSlice& s, const std::string& rel) {
    const auto h = HuHistogram::of(s);
    hist["slices"][rel] = {{"counts", h.counts}, {"underflow", h.underflow}, {"overflow", h.overflow}};
  };

  auto write_domain = [&](const std::vector<CTSlice>& slices, const std::string& dir) {
    fs::create_directories(root / dir);
    std::vector<ManifestRecord> recs;
    for (const auto& s : slices) {
      const std::string rel = dir + "/" + s.source_id + ".cvhs";
      save_slice(s, root / rel);
      record(s, rel);
      recs.push_back({s.source_id + ".cvhs", s.domain, s.source_id});
    }
    write_manifest(root / dir / "manifest.jsonl", recs);
  };
  write_domain(data.domain_a, "A");
  write_domain(data.domain_b, "B");

  if (!data.eval_pairs.empty()) {
    std::vector<CTSlice> src, tgt;
    for (const auto& p : data.eval_pairs) {
      src.push_back(p.source);
      tgt.push_back(p.target);
    }
    write_domain(src, "eval/A");
    write_domain(tgt, "eval/B");
    std::ofstream pairs(root / "eval" / "pairs.jsonl", std::ios::trunc);
    for (const auto& p : data.eval_pairs) {
      pairs << nlohmann::json{{"source", "A/" + p.source.source_id + ".cvhs"},
                              {"target", "B/" + p.target.source_id + ".cvhs"}}
                   .dump()
            << '\n';
    }
    if (!pairs) throw IoError("cannot write eval/pairs.jsonl");
  }

  auto dump = [&](const nlohmann::json& j, const fs::path& p) {
    std::ofstream f(p, std::ios::trunc);
    f << j.dump(2) << '\n';
    if (!f) throw IoError("cannot write '" + p.string() + "'");
  };
  dump(data.transform_record, root / "transform_record.json");
  dump(hist, root / "histograms.json");
}

nlohmann::json to_json(const PhantomSpec& s) {
  return {{"n_slices_per_domain", s.n_slices_per_domain},
          {"side", s.side},
          {"ellipse_count_range", {s.ellipse_count_min, s.ellipse_count_max}},
          {"base_noise_std", s.base_noise_std},
          {"texture_transform",
           {{"blur_sigma", s.texture.blur_sigma},
            {"noise_std", s.texture.noise_std},
            {"sharpen_gain", s.texture.sharpen_gain},
            {"unsharp_sigma", s.texture.unsharp_sigma}}},
          {"n_eval_pairs", s.n_eval_pairs},
          {"seed", s.seed}};
}

PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
  PhantomSpec s;
  try {
    s.n_slices_per_domain = j.value("n_slices_per_domain", s.n_slices_per_domain);
    s.side = j.value("side", s.side);
    if (j.contains("ellipse_count_range")) {
      s.ellipse_count_min = j.at("ellipse_count_range").at(0).get<int>();
      s.ellipse_count_max = j.at("ellipse_count_range").at(1).get<int>();
    }
    s.base_noise_std = j.value("base_noise_std", s.base_noise_std);
    if (j.contains("texture_transform")) {
      const auto& t = j.at("texture_transform");
      s.texture.blur_sigma = t.value("blur_sigma", s.texture.blur_sigma);
      s.texture.noise_std = t.value("noise_std", s.texture.noise_std);
      s.texture.sharpen_gain = t.value("sharpen_gain", s.texture.sharpen_gain);
      s.texture.unsharp_sigma = t.value("unsharp_sigma", s.texture.unsharp_sigma);
    }
    s.n_eval_pairs = j.value("n_eval_pairs", s.n_eval_pairs);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("phantom spec: ") + e.what());
  }
  return s;
}

}  // namespace cvhct
