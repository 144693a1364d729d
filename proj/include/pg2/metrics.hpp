#pragma once

#include <torch/torch.h>

#include <functional>
#include <string>

namespace pg2 {

/// Maps a batch of images ([B, 3, H, W] in [-1, 1]) to per-image class
/// probabilities ([B, C]). Oracles that cannot be called from several threads
/// at once must set `thread_safe = false`.
struct ClassifierOracle {
  std::string name;
  int num_classes = 0;
  bool thread_safe = true;
  std::function<torch::Tensor(const torch::Tensor&)> classify;
};

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

/// Mean SSIM over all valid 11x11 Gaussian windows of every channel.
/// Inputs are [C, H, W] in [-1, 1]; they are mapped to [0, 1] first.
double ssim(const torch::Tensor& a, const torch::Tensor& b, const SsimParams& params = {});

/// SSIM of the [0, 1]-mapped images after zeroing the background with `mask`
/// ([H, W], 1 on the body).
double mask_ssim(const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& mask,
                 const SsimParams& params = {});

/// Mean of the contrast-structure factor (2 s_ab + C2) / (s_a + s_b + C2)
/// over the same windows as `ssim`.
double ssim_contrast_structure(const torch::Tensor& a, const torch::Tensor& b,
                               const SsimParams& params = {});

/// Normalized 1-D Gaussian window, float64.
torch::Tensor gaussian_window(int size, double sigma);

/// Image times mask in the [0, 1] display domain, returned in [-1, 1]
/// (background becomes -1). Accepts [3, H, W] with [H, W] or [B, 3, H, W]
/// with [B, H, W].
torch::Tensor apply_mask(const torch::Tensor& image, const torch::Tensor& mask);

struct ScoreStats {
  double mean = 0.0;
  double std = 0.0;
};

inline constexpr int kDefaultSplits = 10;
inline constexpr double kProbabilityTolerance = 1e-6;

/// Inception Score of precomputed posteriors [N, C]. Split k covers rows
/// [floor(k N / s), floor((k + 1) N / s)); std is the population std over
/// splits.
ScoreStats inception_score_from_probs(const torch::Tensor& probs, int splits = kDefaultSplits);

struct IsOptions {
  int splits = kDefaultSplits;
  int batch_size = 64;  // images per oracle call
  int workers = 1;      // concurrent oracle calls; ignored unless the oracle is thread safe
};

ScoreStats inception_score(const torch::Tensor& images, const ClassifierOracle& oracle,
                           const IsOptions& options = {});

/// Inception Score of `apply_mask(images, masks)`.
ScoreStats mask_is(const torch::Tensor& images, const torch::Tensor& masks,
                   const ClassifierOracle& oracle, const IsOptions& options = {});

/// Runs the oracle over `images` in chunks and validates every row.
torch::Tensor classify_all(const torch::Tensor& images, const ClassifierOracle& oracle,
                           const IsOptions& options = {});

}  // namespace pg2
