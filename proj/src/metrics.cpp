#include "cvhct/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace cvhct {

namespace {

void require_same_shape(const Image<double>& a, const Image<double>& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError(std::string(what) + ": images differ in shape");
  }
  if (a.empty()) throw ShapeError(std::string(what) + ": empty image");
}

struct Moments {
  double mean_s = 0, mean_t = 0, var_s = 0, var_t = 0, cov = 0;
};

Moments moments(std::span<const double> s, std::span<const double> t) {
  const double n = static_cast<double>(s.size());
  Moments m;
  for (std::size_t i = 0; i < s.size(); ++i) {
    m.mean_s += s[i];
    m.mean_t += t[i];
  }
  m.mean_s /= n;
  m.mean_t /= n;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double ds = s[i] - m.mean_s, dt = t[i] - m.mean_t;
    m.var_s += ds * ds;
    m.var_t += dt * dt;
    m.cov += ds * dt;
  }
  m.var_s /= n;
  m.var_t /= n;
  m.cov /= n;
  return m;
}

}  // namespace

double ccc(std::span<const double> s, std::span<const double> t, CccDenominator form) {
  if (s.size() != t.size()) throw ParameterError("ccc: vectors differ in length");
  if (s.size() < 2) throw ParameterError("ccc: need at least two values");
  const Moments m = moments(s, t);
  const double gap = m.mean_s - m.mean_t;
  if (m.var_s == 0.0 && m.var_t == 0.0) return gap == 0.0 ? 1.0 : 0.0;
  const double denom =
      form == CccDenominator::kStandard ? m.var_s + m.var_t + gap * gap : m.var_s * m.var_t + gap * gap;
  if (denom == 0.0) return 0.0;
  return 2.0 * m.cov / denom;
}

double psnr(const Image<double>& target, const Image<double>& synthesized) {
  require_same_shape(target, synthesized, "psnr");
  double mse = 0.0, peak = -std::numeric_limits<double>::infinity();
  auto x = target.pixels();
  auto y = synthesized.pixels();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    mse += d * d;
    peak = std::max(peak, x[i]);
  }
  mse /= static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Image<double>& s, const Image<double>& t, double dynamic_range) {
  require_same_shape(s, t, "ssim");
  const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  const Moments m = moments(s.pixels(), t.pixels());
  return (2 * m.mean_s * m.mean_t + c1) * (2 * m.cov + c2) /
         ((m.mean_s * m.mean_s + m.mean_t * m.mean_t + c1) * (m.var_s + m.var_t + c2));
}

double ncc(const Image<double>& x, const Image<double>& x_hat) {
  require_same_shape(x, x_hat, "ncc");
  double xy = 0, xx = 0, yy = 0;
  auto a = x.pixels();
  auto b = x_hat.pixels();
  for (std::size_t i = 0; i < a.size(); ++i) {
    xy += a[i] * b[i];
    xx += a[i] * a[i];
    yy += b[i] * b[i];
  }
  if (xx == 0.0 || yy == 0.0) return 0.0;
  return xy / (std::sqrt(xx) * std::sqrt(yy));
}

Image<double> to_unit_range(const Image<float>& normalized) {
  Image<double> out(normalized.height(), normalized.width());
  auto src = normalized.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::clamp((src[i] + 1.0) * 0.5, 0.0, 1.0);
  return out;
}

// ---------------------------------------------------------------------------

Rgb heat_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  // Piecewise-linear jet: blue -> cyan -> green -> yellow -> red.
  auto ramp = [](double x) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(x, 0.0, 1.0))); };
  const double r = std::min(4.0 * v - 1.5, -4.0 * v + 4.5);
  const double g = std::min(4.0 * v - 0.5, -4.0 * v + 3.5);
  const double b = std::min(4.0 * v + 0.5, -4.0 * v + 2.5);
  return {ramp(r), ramp(g), ramp(b)};
}

ResidualMap residual_map(const Image<double>& target, const Image<double>& synthesized) {
  require_same_shape(target, synthesized, "residual_map");
  ResidualMap out;
  out.residual = Image<double>(target.height(), target.width());
  out.heat = Image<Rgb>(target.height(), target.width(), Rgb{0, 0, 0});
  auto x = target.pixels();
  auto y = synthesized.pixels();
  auto res = out.residual.pixels();
  auto heat = out.heat.pixels();
  double sum = 0.0;
  for (std::size_t i = 0; i < res.size(); ++i) {
    res[i] = std::abs(x[i] - y[i]);
    heat[i] = heat_color(res[i]);
    sum += res[i];
    out.max = std::max(out.max, res[i]);
  }
  out.mean = sum / static_cast<double>(res.size());
  return out;
}

void write_ppm(const Image<Rgb>& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
  for (const Rgb& p : img.pixels()) {
    const char px[3] = {static_cast<char>(p.r), static_cast<char>(p.g), static_cast<char>(p.b)};
    out.write(px, 3);
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace cvhct
