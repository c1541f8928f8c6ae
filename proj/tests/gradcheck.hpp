#pragma once

// Finite-difference check of autodiff gradients for a scalar loss.
//
// The analytic gradient is taken at 32-bit precision, the precision the
// library trains in. The reference central difference is evaluated on the same
// modules cast to 64-bit with a small step: at 32-bit a step large enough to
// beat rounding also crosses LeakyReLU, max-pool and L1 kinks, which biases the
// difference quotient by more than the tolerance. The 64-bit step of 1e-7 keeps
// rounding near 1e-10 while rarely straddling a kink.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace gradcheck {

struct Sample {
  std::string where;
  double analytic = 0;
  double numeric = 0;
  bool ok = false;
};

/// Loss evaluated with inputs cast to the given dtype.
using Loss = std::function<torch::Tensor(torch::Dtype)>;

/// Samples `count` entries of `params` (the largest-gradient entry of a random
/// 64-element window in a random tensor) where the loss is differentiable and
/// compares the autodiff gradient with a central difference at relative
/// tolerance `rel`. `modules` are every
/// module the loss runs through; they are cast to double and back.
inline std::vector<Sample> check(const Loss& loss, std::vector<torch::Tensor> params,
                                 const std::vector<torch::nn::Module*>& modules, int count, std::uint64_t seed,
                                 double eps = 1e-7, double rel = 5e-2) {
  for (auto& p : params) {
    if (p.grad().defined()) p.grad().zero_();
  }
  loss(torch::kFloat).backward();

  struct Pick {
    torch::Tensor param;
    int64_t index;
    double analytic;
  };
  std::mt19937_64 rng(seed);
  std::vector<Pick> picks;
  for (int tries = 0; static_cast<int>(picks.size()) < 4 * count && tries < 200 * count; ++tries) {
    auto& p = params[rng() % params.size()];
    if (!p.grad().defined()) continue;
    const auto grad = p.grad().view(-1);
    const int64_t n = grad.numel();
    const int64_t start = static_cast<int64_t>(rng() % n);
    const auto window = grad.slice(0, start, std::min(n, start + 64)).abs();
    const int64_t best = start + window.argmax().item<int64_t>();
    const double analytic = grad[best].item<double>();
    if (analytic == 0.0) continue;
    picks.push_back({p, best, analytic});
  }

  const auto close = [rel](double x, double y) { return std::abs(x - y) <= rel * std::max(std::abs(x), std::abs(y)); };
  for (auto* m : modules) m->to(torch::kDouble);
  std::vector<Sample> out;
  {
    torch::NoGradGuard ng;
    for (const auto& pick : picks) {
      if (static_cast<int>(out.size()) == count) break;
      const auto flat = pick.param.data().view(-1);
      const double orig = flat[pick.index].item<double>();
      const double mid = loss(torch::kDouble).item<double>();
      flat[pick.index] = orig + eps;
      const double up = loss(torch::kDouble).item<double>();
      flat[pick.index] = orig - eps;
      const double down = loss(torch::kDouble).item<double>();
      flat[pick.index] = orig;
      // Disagreeing one-sided differences mean a ReLU or max-pool kink lies
      // inside the step; the loss has no derivative to compare there.
      if (!close((up - mid) / eps, (mid - down) / eps)) continue;
      Sample s;
      s.where = std::to_string(pick.index);
      s.analytic = pick.analytic;
      s.numeric = (up - down) / (2 * eps);
      s.ok = close(s.analytic, s.numeric);
      out.push_back(s);
    }
  }
  for (auto* m : modules) m->to(torch::kFloat);
  return out;
}

inline bool all_ok(const std::vector<Sample>& v, int count) {
  return static_cast<int>(v.size()) >= count && std::all_of(v.begin(), v.end(), [](const Sample& s) { return s.ok; });
}

}  // namespace gradcheck
