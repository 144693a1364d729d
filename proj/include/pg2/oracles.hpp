#pragma once

#include <filesystem>
#include <string>

#include "pg2/metrics.hpp"

namespace pg2 {

/// Uniform posterior for every image.
ClassifierOracle uniform_oracle(int num_classes = 10);

/// Soft hue histogram of the saturated pixels, one class per hue bin. Images
/// without colour fall back to the uniform posterior.
ClassifierOracle color_histogram_oracle(int num_bins = 10);

/// TorchScript classifier producing logits [B, C]; softmax is applied here.
/// Input images are passed in [-1, 1]. Declared single-threaded.
ClassifierOracle torchscript_oracle(const std::filesystem::path& module_path);

/// "uniform", "color-histogram" or "torchscript:<path>".
ClassifierOracle oracle_by_name(const std::string& name);

}  // namespace pg2
