#include "pg2/pose_codec.hpp"

#include <algorithm>
#include <cstdint>
#include <string>

#include "pg2/errors.hpp"

namespace pg2 {

KeypointSet KeypointSet::from_coordinates(const std::array<std::pair<int, int>, kNumJoints>& xy) {
  KeypointSet kp;
  for (std::size_t k = 0; k < kNumJoints; ++k) {
    const auto [x, y] = xy[k];
    if (x == -1 && y == -1) {
      kp.points[k] = Keypoint{};
    } else {
      kp.points[k] = Keypoint{x, y, true};
    }
  }
  return kp;
}

std::size_t KeypointSet::num_visible() const {
  return static_cast<std::size_t>(
      std::count_if(points.begin(), points.end(), [](const Keypoint& p) { return p.visible; }));
}

void KeypointSet::validate(int height, int width) const {
  for (std::size_t k = 0; k < kNumJoints; ++k) {
    const Keypoint& p = points[k];
    if (p.visible) {
      if (p.x < 0 || p.x >= width || p.y < 0 || p.y >= height) {
        throw UsageError("keypoint " + std::string(kJointNames[k]) + " at (" +
                         std::to_string(p.x) + ", " + std::to_string(p.y) +
                         ") lies outside a " + std::to_string(height) + "x" +
                         std::to_string(width) + " image");
      }
    } else if (p.x != -1 || p.y != -1) {
      throw UsageError("invisible keypoint " + std::string(kJointNames[k]) +
                       " must carry the (-1, -1) sentinel");
    }
  }
}

namespace {

void check_dims(int height, int width) {
  if (height <= 0 || width <= 0) {
    throw UsageError("image dimensions must be positive, got " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
}

torch::Tensor to_tensor(const morphology::Binary& img, int height, int width) {
  auto out = torch::empty({height, width}, torch::kFloat32);
  auto acc = out.accessor<float, 2>();
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      acc[i][j] = img[static_cast<std::size_t>(i) * width + j] ? 1.0f : 0.0f;
    }
  }
  return out;
}

}  // namespace

PoseTensor encode_heatmaps(const KeypointSet& kp, int height, int width, int radius) {
  check_dims(height, width);
  if (radius < 0) {
    throw UsageError("heatmap radius must be non-negative");
  }
  if (height < 2 * radius + 1 || width < 2 * radius + 1) {
    throw UsageError("image of " + std::to_string(height) + "x" + std::to_string(width) +
                     " is smaller than one heatmap disk of radius " + std::to_string(radius));
  }
  kp.validate(height, width);

  PoseTensor pose;
  pose.radius = radius;
  pose.channels = torch::zeros({static_cast<long>(kNumJoints), height, width}, torch::kFloat32);
  auto acc = pose.channels.accessor<float, 3>();
  const long r2 = static_cast<long>(radius) * radius;
  for (std::size_t k = 0; k < kNumJoints; ++k) {
    const Keypoint& p = kp[k];
    if (!p.visible) {
      continue;
    }
    const int i0 = std::max(0, p.y - radius);
    const int i1 = std::min(height - 1, p.y + radius);
    const int j0 = std::max(0, p.x - radius);
    const int j1 = std::min(width - 1, p.x + radius);
    for (int i = i0; i <= i1; ++i) {
      for (int j = j0; j <= j1; ++j) {
        const long di = i - p.y;
        const long dj = j - p.x;
        if (di * di + dj * dj <= r2) {
          acc[k][i][j] = 1.0f;
        }
      }
    }
  }
  return pose;
}

namespace morphology {

namespace {

std::vector<std::pair<int, int>> disk_offsets(int radius) {
  std::vector<std::pair<int, int>> offsets;
  for (int di = -radius; di <= radius; ++di) {
    for (int dj = -radius; dj <= radius; ++dj) {
      if (di * di + dj * dj <= radius * radius) {
        offsets.emplace_back(di, dj);
      }
    }
  }
  return offsets;
}

}  // namespace

Binary dilate(const Binary& in, int height, int width, int radius) {
  if (radius <= 0) {
    return in;
  }
  const auto offsets = disk_offsets(radius);
  Binary out(in.size(), 0);
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      if (!in[static_cast<std::size_t>(i) * width + j]) {
        continue;
      }
      for (const auto& [di, dj] : offsets) {
        const int y = i + di;
        const int x = j + dj;
        if (y >= 0 && y < height && x >= 0 && x < width) {
          out[static_cast<std::size_t>(y) * width + x] = 1;
        }
      }
    }
  }
  return out;
}

Binary erode(const Binary& in, int height, int width, int radius) {
  if (radius <= 0) {
    return in;
  }
  const auto offsets = disk_offsets(radius);
  Binary out(in.size(), 0);
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      bool keep = true;
      for (const auto& [di, dj] : offsets) {
        const int y = i + di;
        const int x = j + dj;
        if (y >= 0 && y < height && x >= 0 && x < width &&
            !in[static_cast<std::size_t>(y) * width + x]) {
          keep = false;
          break;
        }
      }
      out[static_cast<std::size_t>(i) * width + j] = keep ? 1 : 0;
    }
  }
  return out;
}

Binary close(const Binary& in, int height, int width, int radius) {
  return erode(dilate(in, height, width, radius), height, width, radius);
}

void draw_disk(Binary& img, int height, int width, int cx, int cy, int radius) {
  for (int i = std::max(0, cy - radius); i <= std::min(height - 1, cy + radius); ++i) {
    for (int j = std::max(0, cx - radius); j <= std::min(width - 1, cx + radius); ++j) {
      const int di = i - cy;
      const int dj = j - cx;
      if (di * di + dj * dj <= radius * radius) {
        img[static_cast<std::size_t>(i) * width + j] = 1;
      }
    }
  }
}

void draw_segment(Binary& img, int height, int width, int x0, int y0, int x1, int y1,
                  double thickness) {
  // Integer geometry keeps the rasterization exactly mirror-symmetric:
  // pixel P is on when dist(P, AB)^2 <= (thickness / 2)^2.
  const double limit4 = thickness * thickness;  // compared against 4 * dist^2
  const int reach = static_cast<int>(thickness / 2.0) + 1;
  const std::int64_t dx = x1 - x0;
  const std::int64_t dy = y1 - y0;
  const std::int64_t len2 = dx * dx + dy * dy;
  const int i0 = std::max(0, std::min(y0, y1) - reach);
  const int i1 = std::min(height - 1, std::max(y0, y1) + reach);
  const int j0 = std::max(0, std::min(x0, x1) - reach);
  const int j1 = std::min(width - 1, std::max(x0, x1) + reach);
  for (int i = i0; i <= i1; ++i) {
    for (int j = j0; j <= j1; ++j) {
      const std::int64_t px = j - x0;
      const std::int64_t py = i - y0;
      const std::int64_t t = px * dx + py * dy;
      bool on = false;
      if (len2 == 0 || t <= 0) {
        on = 4.0 * static_cast<double>(px * px + py * py) <= limit4;
      } else if (t >= len2) {
        const std::int64_t qx = j - x1;
        const std::int64_t qy = i - y1;
        on = 4.0 * static_cast<double>(qx * qx + qy * qy) <= limit4;
      } else {
        const std::int64_t cross = px * dy - py * dx;
        on = 4.0 * static_cast<double>(cross * cross) <= limit4 * static_cast<double>(len2);
      }
      if (on) {
        img[static_cast<std::size_t>(i) * width + j] = 1;
      }
    }
  }
}

}  // namespace morphology

PoseMask compute_pose_mask(const KeypointSet& kp, int height, int width,
                           const MorphologyParams& params) {
  check_dims(height, width);
  kp.validate(height, width);

  morphology::Binary img(static_cast<std::size_t>(height) * width, 0);
  if (kp.num_visible() >= 2) {
    for (const auto& [a, b] : params.edges) {
      if (a >= kNumJoints || b >= kNumJoints) {
        throw UsageError("skeleton edge references joint index out of range");
      }
      const Keypoint& pa = kp[a];
      const Keypoint& pb = kp[b];
      if (pa.visible && pb.visible) {
        morphology::draw_segment(img, height, width, pa.x, pa.y, pb.x, pb.y,
                                 params.limb_thickness);
      }
    }
    for (const Keypoint& p : kp.points) {
      if (p.visible) {
        morphology::draw_disk(img, height, width, p.x, p.y, params.keypoint_radius);
      }
    }
    for (int it = 0; it < params.dilation_iterations; ++it) {
      img = morphology::dilate(img, height, width, params.dilation_radius);
    }
    for (int it = 0; it < params.closing_iterations; ++it) {
      img = morphology::close(img, height, width, params.closing_radius);
    }
  }
  return PoseMask{to_tensor(img, height, width), params};
}

KeypointSet flip_keypoints(const KeypointSet& kp, int width) {
  KeypointSet out;
  for (std::size_t k = 0; k < kNumJoints; ++k) {
    const Keypoint& p = kp[k];
    Keypoint& q = out.points[mirror_joint(k)];
    q = p.visible ? Keypoint{width - 1 - p.x, p.y, true} : Keypoint{};
  }
  return out;
}

std::pair<torch::Tensor, KeypointSet> flip_pair(const torch::Tensor& image, const KeypointSet& kp) {
  const int width = static_cast<int>(image.size(-1));
  return {image.flip({-1}), flip_keypoints(kp, width)};
}

torch::Tensor keypoint_coordinates(const KeypointSet& kp, int height, int width) {
  auto out = torch::empty({static_cast<long>(2 * kNumJoints)}, torch::kFloat32);
  auto acc = out.accessor<float, 1>();
  for (std::size_t k = 0; k < kNumJoints; ++k) {
    const Keypoint& p = kp[k];
    acc[2 * k] = p.visible ? static_cast<float>(p.x) / static_cast<float>(width) : -1.0f;
    acc[2 * k + 1] = p.visible ? static_cast<float>(p.y) / static_cast<float>(height) : -1.0f;
  }
  return out;
}

}  // namespace pg2
