#pragma once

#include <torch/torch.h>

#include <utility>
#include <vector>

#include "pg2/keypoints.hpp"

namespace pg2 {

inline constexpr int kDefaultHeatmapRadius = 4;

/// Parameters of the skeleton-to-foreground-mask construction.
///
/// Limbs are rasterized as the set of pixels within `limb_thickness / 2` of
/// the segment joining two visible joints; every visible joint additionally
/// contributes a disk of `keypoint_radius`. The union is dilated
/// `dilation_iterations` times by a disk of `dilation_radius`, then closed
/// (dilate + erode) `closing_iterations` times by a disk of `closing_radius`.
struct MorphologyParams {
  std::vector<Edge> edges = default_skeleton_edges();
  double limb_thickness = 8.0;
  int keypoint_radius = kDefaultHeatmapRadius;
  int dilation_radius = 5;  // 11-pixel diameter
  int dilation_iterations = 1;
  int closing_radius = 5;
  int closing_iterations = 1;

  bool operator==(const MorphologyParams&) const = default;
};

/// 18 binary channels, float32 [18, H, W], values exactly 0 or 1.
struct PoseTensor {
  torch::Tensor channels;
  int radius = kDefaultHeatmapRadius;
};

/// Binary foreground mask, float32 [H, W].
struct PoseMask {
  torch::Tensor mask;
  MorphologyParams params;
};

PoseTensor encode_heatmaps(const KeypointSet& kp, int height, int width,
                           int radius = kDefaultHeatmapRadius);

PoseMask compute_pose_mask(const KeypointSet& kp, int height, int width,
                           const MorphologyParams& params = {});

/// Mirrors a [3, H, W] image and its keypoints left-right, relabelling
/// symmetric joints.
std::pair<torch::Tensor, KeypointSet> flip_pair(const torch::Tensor& image, const KeypointSet& kp);

KeypointSet flip_keypoints(const KeypointSet& kp, int width);

/// Keypoint coordinates for the coordinate-embedding baseline: 36 floats,
/// (x / W, y / H) per joint, (-1, -1) for invisible joints.
torch::Tensor keypoint_coordinates(const KeypointSet& kp, int height, int width);

namespace morphology {

// Binary images are row-major uint8 buffers of size height * width.
using Binary = std::vector<std::uint8_t>;

Binary dilate(const Binary& in, int height, int width, int radius);
/// Pixels outside the image count as foreground, so closing never shrinks
/// the input.
Binary erode(const Binary& in, int height, int width, int radius);
Binary close(const Binary& in, int height, int width, int radius);

void draw_disk(Binary& img, int height, int width, int cx, int cy, int radius);
void draw_segment(Binary& img, int height, int width, int x0, int y0, int x1, int y1,
                  double thickness);

}  // namespace morphology

}  // namespace pg2
