#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>
#include <unistd.h>

#include "pg2/keypoints.hpp"
#include "pg2/toy_dataset.hpp"

namespace pg2::testing {

/// Fresh, empty scratch directory unique to this process.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("pg2_test_" + std::to_string(::getpid())) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// 4 training identities x 4 images plus 2 held-out identities, 64x32.
inline const ToyDataset& shared_toy() {
  static const ToyDataset ds = [] {
    ToySpec spec;
    spec.seed = 7;
    return make_toy_dataset(spec, scratch_dir("shared_toy"));
  }();
  return ds;
}

inline KeypointSet random_keypoints(std::mt19937_64& rng, int height, int width,
                                    double p_visible = 1.0) {
  std::uniform_int_distribution<int> xs(0, width - 1), ys(0, height - 1);
  std::bernoulli_distribution vis(p_visible);
  KeypointSet kp;
  for (auto& p : kp.points) {
    if (vis(rng)) p = Keypoint{xs(rng), ys(rng), true};
  }
  return kp;
}

/// Number of lattice offsets (dx, dy) with dx^2 + dy^2 <= r^2 that land
/// inside the image when added to (cx, cy).
inline int lattice_disk_count(int cx, int cy, int r, int height, int width) {
  int n = 0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy > r * r) continue;
      const int x = cx + dx, y = cy + dy;
      if (x >= 0 && x < width && y >= 0 && y < height) ++n;
    }
  }
  return n;
}

struct GradCheck {
  int checked = 0;
  double max_rel_error = 0.0;
};

/// Central finite differences against autograd at `count` random coordinates
/// of `params` (float64 leaves). The relative error is taken against
/// max(|analytic|, |numeric|, 1e-6 * max(1, |probe|)).
inline GradCheck check_gradients(const std::vector<torch::Tensor>& params,
                                 const std::function<torch::Tensor()>& probe, int count,
                                 std::uint64_t seed, double h = 1e-6) {
  for (const auto& p : params) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
  auto value = probe();
  value.backward();
  const double scale = std::max(1.0, std::abs(value.item<double>()));

  std::vector<int64_t> sizes;
  int64_t total = 0;
  for (const auto& p : params) {
    sizes.push_back(p.numel());
    total += p.numel();
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int64_t> pick(0, total - 1);
  GradCheck out;
  torch::NoGradGuard no_grad;
  for (int c = 0; c < count; ++c) {
    int64_t flat = pick(rng);
    std::size_t t = 0;
    while (flat >= sizes[t]) flat -= sizes[t++];
    auto p = params[t].view(-1);
    const double analytic = params[t].grad().view(-1)[flat].item<double>();
    const double orig = p[flat].item<double>();
    p[flat] = orig + h;
    const double plus = probe().item<double>();
    p[flat] = orig - h;
    const double minus = probe().item<double>();
    p[flat] = orig;
    const double numeric = (plus - minus) / (2 * h);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6 * scale});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic - numeric) / denom);
    ++out.checked;
  }
  return out;
}

/// Per-window SSIM by direct summation: 2-D Gaussian weights, variances as
/// weighted squared deviations, mean over windows then channels. Inputs are
/// [C, H, W] in [-1, 1].
inline double brute_force_ssim(const torch::Tensor& a_in, const torch::Tensor& b_in, int win = 11,
                               double sigma = 1.5) {
  auto a = ((a_in.to(torch::kFloat64) + 1.0) * 0.5).contiguous();
  auto b = ((b_in.to(torch::kFloat64) + 1.0) * 0.5).contiguous();
  const auto A = a.accessor<double, 3>();
  const auto B = b.accessor<double, 3>();
  const int c = static_cast<int>(a.size(0)), h = static_cast<int>(a.size(1)),
            w = static_cast<int>(a.size(2));
  std::vector<double> g(win);
  double gs = 0.0;
  for (int i = 0; i < win; ++i) {
    const double x = i - (win - 1) / 2.0;
    g[i] = std::exp(-x * x / (2 * sigma * sigma));
    gs += g[i];
  }
  for (auto& v : g) v /= gs;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  for (int ch = 0; ch < c; ++ch) {
    double channel = 0.0;
    int windows = 0;
    for (int y0 = 0; y0 + win <= h; ++y0) {
      for (int x0 = 0; x0 + win <= w; ++x0) {
        double mx = 0, my = 0;
        for (int u = 0; u < win; ++u)
          for (int v = 0; v < win; ++v) {
            const double wt = g[u] * g[v];
            mx += wt * A[ch][y0 + u][x0 + v];
            my += wt * B[ch][y0 + u][x0 + v];
          }
        double vx = 0, vy = 0, cxy = 0;
        for (int u = 0; u < win; ++u)
          for (int v = 0; v < win; ++v) {
            const double wt = g[u] * g[v];
            const double dx = A[ch][y0 + u][x0 + v] - mx, dy = B[ch][y0 + u][x0 + v] - my;
            vx += wt * dx * dx;
            vy += wt * dy * dy;
            cxy += wt * dx * dy;
          }
        channel += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++windows;
      }
    }
    total += channel / windows;
  }
  return total / c;
}

/// exp(mean_i KL(p_i || mean_j p_j)) of one split by plain loops.
inline double brute_force_is(const std::vector<std::vector<double>>& probs) {
  const std::size_t n = probs.size(), k = probs[0].size();
  std::vector<double> marginal(k, 0.0);
  for (const auto& row : probs)
    for (std::size_t j = 0; j < k; ++j) marginal[j] += row[j] / n;
  double kl = 0.0;
  for (const auto& row : probs)
    for (std::size_t j = 0; j < k; ++j)
      if (row[j] > 0) kl += row[j] * std::log(row[j] / marginal[j]);
  return std::exp(kl / n);
}

}  // namespace pg2::testing
