#pragma once

#include <torch/torch.h>

#include <string>

namespace pg2 {

enum class Reduction { Sum, Mean };

std::string to_string(Reduction r);
Reduction reduction_from_string(const std::string& name);

struct LossConfig {
  double lambda = 10.0;  // weight of the masked L1 term in the stage-II generator loss
  Reduction reduction = Reduction::Sum;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

/// Probabilities are clamped to [kProbEps, 1 - kProbEps] before taking logs.
inline constexpr double kProbEps = 1e-7;

/// sum |gen - target| * (1 + mask).
///
/// gen/target: [3, H, W] or [B, 3, H, W]; mask: [H, W] or [B, H, W], broadcast
/// over channels. Sum reduction sums over channels and pixels and averages
/// over the batch; Mean reduction averages over every element.
torch::Tensor pose_mask_l1(const torch::Tensor& gen, const torch::Tensor& target,
                           const torch::Tensor& mask, Reduction reduction = Reduction::Sum);

double bce(double pred, int label);
/// Batch-mean binary cross-entropy of probabilities `pred` against a constant label.
torch::Tensor bce(const torch::Tensor& pred, double label);

double d_loss(double d_real, double d_fake);
torch::Tensor d_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake);

/// bce(d_fake, 1): the generator's adversarial term.
torch::Tensor g_adv_loss(const torch::Tensor& d_fake);

/// bce(d_fake, 1) + lambda * pose_mask_l1(gen, target, mask), where gen is the
/// refined image (coarse + difference map).
double g2_total_loss(double d_fake, const torch::Tensor& gen, const torch::Tensor& target,
                     const torch::Tensor& mask, const LossConfig& cfg);
torch::Tensor g2_total_loss(const torch::Tensor& d_fake, const torch::Tensor& gen,
                            const torch::Tensor& target, const torch::Tensor& mask,
                            const LossConfig& cfg);

}  // namespace pg2
