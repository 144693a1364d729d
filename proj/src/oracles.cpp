#include "pg2/oracles.hpp"

#include <torch/script.h>

#include <memory>
#include <mutex>

#include "pg2/errors.hpp"

namespace pg2 {

ClassifierOracle uniform_oracle(int num_classes) {
  if (num_classes < 1) throw UsageError("uniform oracle needs at least one class");
  ClassifierOracle o;
  o.name = "uniform";
  o.num_classes = num_classes;
  o.classify = [num_classes](const torch::Tensor& images) {
    return torch::full({images.size(0), num_classes}, 1.0 / num_classes, torch::kFloat64);
  };
  return o;
}

ClassifierOracle color_histogram_oracle(int num_bins) {
  if (num_bins < 1) throw UsageError("color-histogram oracle needs at least one bin");
  ClassifierOracle o;
  o.name = "color-histogram";
  o.num_classes = num_bins;
  o.classify = [num_bins](const torch::Tensor& images) {
    auto x = ((images.to(torch::kFloat64) + 1.0) * 0.5).clamp(0.0, 1.0);
    auto r = x.select(1, 0), g = x.select(1, 1), b = x.select(1, 2);
    auto maxc = torch::max(torch::max(r, g), b);
    auto minc = torch::min(torch::min(r, g), b);
    auto delta = maxc - minc;
    auto safe = delta.clamp_min(1e-12);
    // Hue in [0, 6).
    auto h = torch::where(maxc == r, torch::remainder((g - b) / safe, 6.0),
                          torch::where(maxc == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0));
    auto weight = torch::where(delta > 1e-6, delta, torch::zeros_like(delta));

    // Linear soft assignment of each pixel to its two nearest circular bins.
    auto pos = h / 6.0 * num_bins - 0.5;
    auto lo = torch::floor(pos);
    auto frac = pos - lo;
    auto lo_idx = torch::remainder(lo, num_bins).to(torch::kLong);
    auto hi_idx = torch::remainder(lo + 1, num_bins).to(torch::kLong);
    const auto n = images.size(0);
    auto hist = torch::zeros({n, num_bins}, torch::kFloat64);
    hist.scatter_add_(1, lo_idx.view({n, -1}), (weight * (1.0 - frac)).view({n, -1}));
    hist.scatter_add_(1, hi_idx.view({n, -1}), (weight * frac).view({n, -1}));
    auto total = hist.sum(1, true);
    auto uniform = torch::full_like(hist, 1.0 / num_bins);
    return torch::where(total > 0, hist / total.clamp_min(1e-300), uniform);
  };
  return o;
}

ClassifierOracle torchscript_oracle(const std::filesystem::path& module_path) {
  auto module = std::make_shared<torch::jit::script::Module>();
  try {
    *module = torch::jit::load(module_path.string());
  } catch (const c10::Error& e) {
    throw DataError("cannot load TorchScript classifier " + module_path.string() + ": " +
                    e.what_without_backtrace());
  }
  module->eval();
  auto lock = std::make_shared<std::mutex>();
  ClassifierOracle o;
  o.name = "torchscript:" + module_path.string();
  o.thread_safe = false;
  o.classify = [module, lock](const torch::Tensor& images) {
    std::lock_guard<std::mutex> guard(*lock);
    auto logits = module->forward({images.to(torch::kFloat32)}).toTensor();
    return torch::softmax(logits.to(torch::kFloat64), 1);
  };
  return o;
}

ClassifierOracle oracle_by_name(const std::string& name) {
  if (name == "uniform") return uniform_oracle();
  if (name == "color-histogram") return color_histogram_oracle();
  const std::string ts = "torchscript:";
  if (name.rfind(ts, 0) == 0) return torchscript_oracle(name.substr(ts.size()));
  throw UsageError("unknown oracle '" + name + "' (expected uniform, color-histogram or torchscript:<path>)");
}

}  // namespace pg2
