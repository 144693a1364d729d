#include "pg2/grid.hpp"

#include <cmath>

#include "pg2/errors.hpp"

namespace pg2 {

torch::Tensor render_pose(const PoseTensor& pose, const KeypointSet& kp) {
  const auto h = pose.channels.size(1);
  const auto w = pose.channels.size(2);
  morphology::Binary bones(static_cast<std::size_t>(h * w), 0);
  for (const auto& [a, b] : default_skeleton_edges()) {
    if (!kp[a].visible || !kp[b].visible) continue;
    morphology::draw_segment(bones, static_cast<int>(h), static_cast<int>(w), kp[a].x, kp[a].y,
                             kp[b].x, kp[b].y, 1.0);
  }
  auto img = torch::zeros({3, h, w});
  auto skeleton = torch::from_blob(bones.data(), {h, w}, torch::kUInt8).to(torch::kFloat32);
  img += 0.5f * skeleton.unsqueeze(0);
  for (int k = 0; k < kNumJoints; ++k) {
    const double hue = 6.0 * k / kNumJoints;
    const double x = 1.0 - std::abs(std::fmod(hue, 2.0) - 1.0);
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hue)) {
      case 0: r = 1, g = x; break;
      case 1: r = x, g = 1; break;
      case 2: g = 1, b = x; break;
      case 3: g = x, b = 1; break;
      case 4: r = x, b = 1; break;
      default: r = 1, b = x; break;
    }
    auto on = pose.channels[k].unsqueeze(0) > 0.5f;
    auto colour = torch::tensor({static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)})
                      .view({3, 1, 1})
                      .expand({3, h, w});
    img = torch::where(on.expand({3, h, w}), colour, img);
  }
  return img * 2.0f - 1.0f;
}

torch::Tensor tile_grid(const std::vector<std::vector<torch::Tensor>>& rows, int pad) {
  int64_t cell_h = 0, cell_w = 0;
  std::size_t cols = 0;
  for (const auto& row : rows) {
    cols = std::max(cols, row.size());
    for (const auto& c : row) {
      if (!c.defined()) continue;
      if (c.dim() != 3 || c.size(0) != 3) throw DataError("grid cells must be [3, H, W]");
      if (cell_h == 0) {
        cell_h = c.size(1);
        cell_w = c.size(2);
      } else if (c.size(1) != cell_h || c.size(2) != cell_w) {
        throw DataError("grid cells differ in size");
      }
    }
  }
  if (rows.empty() || cols == 0 || cell_h == 0) throw DataError("grid has no cells");
  const auto n_rows = static_cast<int64_t>(rows.size());
  const auto n_cols = static_cast<int64_t>(cols);
  auto out = torch::ones({3, n_rows * cell_h + (n_rows + 1) * pad, n_cols * cell_w + (n_cols + 1) * pad});
  for (int64_t r = 0; r < n_rows; ++r) {
    for (int64_t c = 0; c < static_cast<int64_t>(rows[r].size()); ++c) {
      const auto& cell = rows[r][c];
      if (!cell.defined()) continue;
      const int64_t y = pad + r * (cell_h + pad);
      const int64_t x = pad + c * (cell_w + pad);
      out.slice(1, y, y + cell_h).slice(2, x, x + cell_w).copy_(cell.detach().to(torch::kFloat32));
    }
  }
  return out;
}

}  // namespace pg2
