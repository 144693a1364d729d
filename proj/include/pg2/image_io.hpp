#pragma once

#include <torch/torch.h>

#include <filesystem>

namespace pg2 {

// Images travel as float32 [3, H, W] tensors in [-1, 1]; 8-bit RGB maps
// linearly onto that range.

torch::Tensor load_image(const std::filesystem::path& path);
void save_image(const torch::Tensor& image, const std::filesystem::path& path);

/// [3, H, W] uint8 RGB -> float32 [-1, 1].
torch::Tensor from_rgb8(const torch::Tensor& rgb);
/// float32 [-1, 1] -> [3, H, W] uint8 RGB (rounded, clamped).
torch::Tensor to_rgb8(const torch::Tensor& image);

}  // namespace pg2
