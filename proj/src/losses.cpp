#include "pg2/losses.hpp"

#include <cmath>

#include "pg2/errors.hpp"

namespace pg2 {

std::string to_string(Reduction r) { return r == Reduction::Sum ? "sum" : "mean"; }

Reduction reduction_from_string(const std::string& name) {
  if (name == "sum") return Reduction::Sum;
  if (name == "mean") return Reduction::Mean;
  throw UsageError("unknown reduction '" + name + "' (expected sum or mean)");
}

void LossConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw UsageError("lambda must be a finite non-negative number");
  }
}

torch::Tensor pose_mask_l1(const torch::Tensor& gen, const torch::Tensor& target,
                           const torch::Tensor& mask, Reduction reduction) {
  if (gen.sizes() != target.sizes()) {
    throw DataError("pose_mask_l1: generated and target shapes differ");
  }
  const bool batched = gen.dim() == 4;
  if (!batched && gen.dim() != 3) {
    throw DataError("pose_mask_l1: expected [3, H, W] or [B, 3, H, W] images");
  }
  const auto h = gen.size(-2);
  const auto w = gen.size(-1);
  torch::Tensor m;
  if (mask.dim() == 2 && mask.size(0) == h && mask.size(1) == w) {
    m = mask.unsqueeze(0);  // broadcast over channels (and batch)
  } else if (batched && mask.dim() == 3 && mask.size(0) == gen.size(0) && mask.size(1) == h &&
             mask.size(2) == w) {
    m = mask.unsqueeze(1);
  } else {
    throw DataError("pose_mask_l1: mask shape does not match the images");
  }
  auto weighted = (gen - target).abs() * (1.0 + m.to(gen.dtype()));
  if (reduction == Reduction::Mean) {
    return weighted.mean();
  }
  return batched ? weighted.sum() / static_cast<double>(gen.size(0)) : weighted.sum();
}

double bce(double pred, int label) {
  if (!(pred >= 0.0 && pred <= 1.0)) {
    throw UsageError("bce: prediction " + std::to_string(pred) + " is not a probability");
  }
  if (label != 0 && label != 1) {
    throw UsageError("bce: label must be 0 or 1");
  }
  const double p = std::clamp(pred, kProbEps, 1.0 - kProbEps);
  return label == 1 ? -std::log(p) : -std::log1p(-p);
}

torch::Tensor bce(const torch::Tensor& pred, double label) {
  if (pred.numel() == 0) {
    throw UsageError("bce: empty prediction tensor");
  }
  {
    torch::NoGradGuard no_grad;
    const bool ok = pred.ge(0.0).logical_and(pred.le(1.0)).all().item<bool>();
    if (!ok) {
      throw UsageError("bce: predictions outside [0, 1]");
    }
  }
  auto p = pred.clamp(kProbEps, 1.0 - kProbEps);
  auto loss = -(label * torch::log(p) + (1.0 - label) * torch::log1p(-p));
  return loss.mean();
}

double d_loss(double d_real, double d_fake) { return bce(d_real, 1) + bce(d_fake, 0); }

torch::Tensor d_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  return bce(d_real, 1.0) + bce(d_fake, 0.0);
}

torch::Tensor g_adv_loss(const torch::Tensor& d_fake) { return bce(d_fake, 1.0); }

double g2_total_loss(double d_fake, const torch::Tensor& gen, const torch::Tensor& target,
                     const torch::Tensor& mask, const LossConfig& cfg) {
  cfg.validate();
  torch::NoGradGuard no_grad;
  const double l1 = pose_mask_l1(gen, target, mask, cfg.reduction).item<double>();
  return bce(d_fake, 1) + cfg.lambda * l1;
}

torch::Tensor g2_total_loss(const torch::Tensor& d_fake, const torch::Tensor& gen,
                            const torch::Tensor& target, const torch::Tensor& mask,
                            const LossConfig& cfg) {
  cfg.validate();
  return g_adv_loss(d_fake) + cfg.lambda * pose_mask_l1(gen, target, mask, cfg.reduction);
}

}  // namespace pg2
