#include "pg2/metrics.hpp"

#include <cmath>
#include <future>
#include <vector>

#include "pg2/errors.hpp"

namespace pg2 {

namespace {

namespace F = torch::nn::functional;

std::string shape_of(const torch::Tensor& t) {
  std::string s = "[";
  for (int64_t i = 0; i < t.dim(); ++i) s += (i ? ", " : "") + std::to_string(t.size(i));
  return s + "]";
}

void check_pair(const torch::Tensor& a, const torch::Tensor& b, int window) {
  if (a.dim() != 3 || b.dim() != 3) throw DataError("ssim expects [C, H, W] images");
  if (a.sizes() != b.sizes()) {
    throw DataError("ssim shape mismatch: " + shape_of(a) + " vs " + shape_of(b));
  }
  if (a.size(1) < window || a.size(2) < window) {
    throw DataError("image " + shape_of(a) + " is smaller than the " + std::to_string(window) +
                    "x" + std::to_string(window) + " SSIM window");
  }
}

torch::Tensor to_unit(const torch::Tensor& x) { return (x.to(torch::kFloat64) + 1.0) * 0.5; }

struct WindowStats {
  torch::Tensor numerator_l, denominator_l, numerator_cs, denominator_cs;
};

// Local Gaussian statistics over valid windows; inputs are [C, H, W] float64.
WindowStats window_stats(const torch::Tensor& x, const torch::Tensor& y, const SsimParams& p) {
  const auto w = gaussian_window(p.window, p.sigma);
  const auto wr = w.view({1, 1, 1, p.window});
  const auto wc = w.view({1, 1, p.window, 1});
  auto filter = [&](const torch::Tensor& t) {
    return F::conv2d(F::conv2d(t.unsqueeze(1), wr), wc).squeeze(1);
  };
  const double c1 = std::pow(p.k1 * p.data_range, 2);
  const double c2 = std::pow(p.k2 * p.data_range, 2);
  auto mu_x = filter(x);
  auto mu_y = filter(y);
  auto sxx = filter(x * x) - mu_x * mu_x;
  auto syy = filter(y * y) - mu_y * mu_y;
  auto sxy = filter(x * y) - mu_x * mu_y;
  return {2.0 * mu_x * mu_y + c1, mu_x * mu_x + mu_y * mu_y + c1, 2.0 * sxy + c2, sxx + syy + c2};
}

double ssim_unit(const torch::Tensor& x, const torch::Tensor& y, const SsimParams& p) {
  const auto s = window_stats(x, y, p);
  const auto map = (s.numerator_l * s.numerator_cs) / (s.denominator_l * s.denominator_cs);
  return map.mean(std::vector<int64_t>{1, 2}).mean().item<double>();
}

void check_probs(const torch::Tensor& probs, int64_t expected_rows) {
  if (probs.dim() != 2 || probs.size(0) != expected_rows) {
    throw DataError("oracle returned " + shape_of(probs) + " for " + std::to_string(expected_rows) +
                    " images");
  }
  if (!torch::isfinite(probs).all().item<bool>()) throw DataError("oracle returned non-finite probabilities");
  if ((probs < 0).any().item<bool>()) throw DataError("oracle returned negative probabilities");
  const auto dev = (probs.sum(1) - 1.0).abs().max().item<double>();
  if (dev > kProbabilityTolerance) {
    throw DataError("oracle probabilities do not sum to 1 (max deviation " + std::to_string(dev) + ")");
  }
}

}  // namespace

torch::Tensor gaussian_window(int size, double sigma) {
  if (size < 1 || sigma <= 0) throw UsageError("gaussian window needs size >= 1 and sigma > 0");
  auto x = torch::arange(size, torch::kFloat64) - (size - 1) / 2.0;
  auto g = torch::exp(-(x * x) / (2.0 * sigma * sigma));
  return g / g.sum();
}

double ssim(const torch::Tensor& a, const torch::Tensor& b, const SsimParams& params) {
  check_pair(a, b, params.window);
  return ssim_unit(to_unit(a), to_unit(b), params);
}

double mask_ssim(const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& mask,
                 const SsimParams& params) {
  check_pair(a, b, params.window);
  if (mask.dim() != 2 || mask.size(0) != a.size(1) || mask.size(1) != a.size(2)) {
    throw DataError("mask " + shape_of(mask) + " does not match image " + shape_of(a));
  }
  const auto m = mask.to(torch::kFloat64).unsqueeze(0);
  return ssim_unit(to_unit(a) * m, to_unit(b) * m, params);
}

double ssim_contrast_structure(const torch::Tensor& a, const torch::Tensor& b,
                               const SsimParams& params) {
  check_pair(a, b, params.window);
  const auto s = window_stats(to_unit(a), to_unit(b), params);
  return (s.numerator_cs / s.denominator_cs).mean(std::vector<int64_t>{1, 2}).mean().item<double>();
}

torch::Tensor apply_mask(const torch::Tensor& image, const torch::Tensor& mask) {
  const bool single = image.dim() == 3;
  if (!(single && mask.dim() == 2) && !(image.dim() == 4 && mask.dim() == 3)) {
    throw DataError("apply_mask: image " + shape_of(image) + " and mask " + shape_of(mask) +
                    " are not [3, H, W]/[H, W] or [B, 3, H, W]/[B, H, W]");
  }
  const int64_t off = single ? 0 : 1;
  if ((!single && mask.size(0) != image.size(0)) || mask.size(off) != image.size(off + 1) ||
      mask.size(off + 1) != image.size(off + 2)) {
    throw DataError("apply_mask: mask " + shape_of(mask) + " does not match image " + shape_of(image));
  }
  const auto m = mask.to(image.scalar_type()).unsqueeze(off);
  return ((image + 1.0) * 0.5 * m) * 2.0 - 1.0;
}

ScoreStats inception_score_from_probs(const torch::Tensor& probs_in, int splits) {
  if (probs_in.dim() != 2 || probs_in.size(0) == 0) throw DataError("inception score of an empty batch");
  const int64_t n = probs_in.size(0);
  if (splits < 1 || splits > n) {
    throw UsageError("splits must be in [1, " + std::to_string(n) + "], got " + std::to_string(splits));
  }
  check_probs(probs_in, n);
  const auto probs = probs_in.to(torch::kFloat64).contiguous();
  const auto acc = probs.accessor<double, 2>();
  const int64_t c = probs.size(1);

  std::vector<double> scores;
  for (int k = 0; k < splits; ++k) {
    const int64_t lo = k * n / splits;
    const int64_t hi = (k + 1) * n / splits;
    std::vector<double> marginal(static_cast<std::size_t>(c), 0.0);
    for (int64_t i = lo; i < hi; ++i) {
      for (int64_t j = 0; j < c; ++j) marginal[j] += acc[i][j];
    }
    for (auto& v : marginal) v /= static_cast<double>(hi - lo);
    double kl_sum = 0.0;
    for (int64_t i = lo; i < hi; ++i) {
      for (int64_t j = 0; j < c; ++j) {
        const double p = acc[i][j];
        if (p > 0.0) kl_sum += p * (std::log(p) - std::log(marginal[j]));
      }
    }
    scores.push_back(std::exp(kl_sum / static_cast<double>(hi - lo)));
  }
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  return {mean, std::sqrt(var / static_cast<double>(scores.size()))};
}

torch::Tensor classify_all(const torch::Tensor& images, const ClassifierOracle& oracle,
                           const IsOptions& options) {
  if (!oracle.classify) throw UsageError("oracle '" + oracle.name + "' has no classifier");
  if (images.dim() != 4 || images.size(0) == 0) throw DataError("expected a nonempty [B, 3, H, W] batch");
  const int64_t n = images.size(0);
  const int64_t chunk = options.batch_size > 0 ? options.batch_size : n;
  std::vector<torch::Tensor> chunks;
  for (int64_t lo = 0; lo < n; lo += chunk) chunks.push_back(images.slice(0, lo, std::min(n, lo + chunk)));

  std::vector<torch::Tensor> out(chunks.size());
  auto run = [&](std::size_t i) {
    torch::NoGradGuard no_grad;
    out[i] = oracle.classify(chunks[i]).to(torch::kFloat64);
    check_probs(out[i], chunks[i].size(0));
  };
  const int workers = oracle.thread_safe ? std::max(1, options.workers) : 1;
  if (workers == 1) {
    for (std::size_t i = 0; i < chunks.size(); ++i) run(i);
  } else {
    for (std::size_t base = 0; base < chunks.size(); base += static_cast<std::size_t>(workers)) {
      std::vector<std::future<void>> jobs;
      for (std::size_t i = base; i < std::min(chunks.size(), base + workers); ++i) {
        jobs.push_back(std::async(std::launch::async, run, i));
      }
      for (auto& j : jobs) j.get();
    }
  }
  auto probs = torch::cat(out);
  if (oracle.num_classes > 0 && probs.size(1) != oracle.num_classes) {
    throw DataError("oracle '" + oracle.name + "' returned " + std::to_string(probs.size(1)) +
                    " classes, declared " + std::to_string(oracle.num_classes));
  }
  return probs;
}

ScoreStats inception_score(const torch::Tensor& images, const ClassifierOracle& oracle,
                           const IsOptions& options) {
  return inception_score_from_probs(classify_all(images, oracle, options), options.splits);
}

ScoreStats mask_is(const torch::Tensor& images, const torch::Tensor& masks,
                   const ClassifierOracle& oracle, const IsOptions& options) {
  if (images.dim() != 4 || masks.dim() != 3 || images.size(0) != masks.size(0)) {
    throw DataError("mask_is: " + std::to_string(images.dim() == 4 ? images.size(0) : -1) +
                    " images but " + std::to_string(masks.dim() == 3 ? masks.size(0) : -1) + " masks");
  }
  return inception_score(apply_mask(images, masks), oracle, options);
}

}  // namespace pg2
