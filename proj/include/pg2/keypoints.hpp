#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <utility>
#include <vector>

namespace pg2 {

inline constexpr std::size_t kNumJoints = 18;

// 18-joint skeleton in the layout emitted by common bottom-up pose estimators.
enum class Joint : std::size_t {
  Nose = 0,
  Neck = 1,
  RShoulder = 2,
  RElbow = 3,
  RWrist = 4,
  LShoulder = 5,
  LElbow = 6,
  LWrist = 7,
  RHip = 8,
  RKnee = 9,
  RAnkle = 10,
  LHip = 11,
  LKnee = 12,
  LAnkle = 13,
  REye = 14,
  LEye = 15,
  REar = 16,
  LEar = 17,
};

inline constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "nose",      "neck",   "r_shoulder", "r_elbow", "r_wrist", "l_shoulder",
    "l_elbow",   "l_wrist", "r_hip",     "r_knee",  "r_ankle", "l_hip",
    "l_knee",    "l_ankle", "r_eye",     "l_eye",   "r_ear",   "l_ear"};

using Edge = std::pair<std::size_t, std::size_t>;

/// The 17 limbs connecting the 18 joints (tree rooted at the neck).
inline const std::vector<Edge>& default_skeleton_edges() {
  static const std::vector<Edge> edges = {
      {1, 2}, {1, 5}, {2, 3},  {3, 4},   {5, 6},   {6, 7},  {1, 8},   {8, 9},  {9, 10},
      {1, 11}, {11, 12}, {12, 13}, {1, 0}, {0, 14}, {14, 16}, {0, 15}, {15, 17}};
  return edges;
}

/// Index of the mirror-image joint; self for nose and neck.
constexpr std::size_t mirror_joint(std::size_t k) {
  constexpr std::array<std::size_t, kNumJoints> table = {0, 1, 5, 6, 7, 2, 3, 4, 11,
                                                         12, 13, 8, 9, 10, 15, 14, 17, 16};
  return table[k];
}

struct Keypoint {
  int x = -1;  // column
  int y = -1;  // row
  bool visible = false;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

/// Invisible joints carry the sentinel (-1, -1).
struct KeypointSet {
  std::array<Keypoint, kNumJoints> points{};

  static KeypointSet from_coordinates(const std::array<std::pair<int, int>, kNumJoints>& xy);

  std::size_t num_visible() const;

  /// Throws UsageError if a visible point lies outside [0,width) x [0,height)
  /// or an invisible point does not carry the sentinel.
  void validate(int height, int width) const;

  const Keypoint& operator[](std::size_t k) const { return points[k]; }
  Keypoint& operator[](std::size_t k) { return points[k]; }

  friend bool operator==(const KeypointSet&, const KeypointSet&) = default;
};

}  // namespace pg2
