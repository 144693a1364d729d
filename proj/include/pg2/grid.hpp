#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "pg2/pose_codec.hpp"

namespace pg2 {

/// Column order of the qualitative result grid.
inline const std::vector<std::string> kGridColumns = {"condition", "target pose", "target",
                                                      "coarse", "refined"};

/// Renders pose heatmaps as a colour image in [-1, 1] ([3, H, W]), one hue
/// per joint on a black background, with the skeleton drawn in grey.
torch::Tensor render_pose(const PoseTensor& pose, const KeypointSet& kp);

/// Tiles cells ([3, H, W] in [-1, 1], all the same size) into one image with
/// `pad` white pixels between cells. Undefined cells are left white.
torch::Tensor tile_grid(const std::vector<std::vector<torch::Tensor>>& rows, int pad = 2);

}  // namespace pg2
