#include "doctest_torch.hpp"

#include <algorithm>
#include <random>

#include "pg2/errors.hpp"
#include "pg2/pose_codec.hpp"
#include "pg2/toy_dataset.hpp"
#include "support.hpp"

using namespace pg2;

namespace {

constexpr std::size_t J(Joint j) { return static_cast<std::size_t>(j); }

KeypointSet single(int joint, int x, int y) {
  KeypointSet kp;
  kp.points[joint] = Keypoint{x, y, true};
  return kp;
}

bool mask_contains(const torch::Tensor& outer, const torch::Tensor& inner) {
  return (inner > 0.5).logical_and(outer < 0.5).sum().item<int64_t>() == 0;
}

MorphologyParams bare_morphology(double thickness) {
  MorphologyParams p;
  p.limb_thickness = thickness;
  p.keypoint_radius = 0;
  p.dilation_iterations = 0;
  p.closing_iterations = 0;
  return p;
}

}  // namespace

TEST_SUITE("pose_codec") {

TEST_CASE("centered radius-4 disk has 49 pixels") {
  auto pose = encode_heatmaps(single(0, 32, 32), 64, 64, 4);
  CHECK(pose.channels[0].sum().item<int64_t>() == 49);
  CHECK(testing::lattice_disk_count(32, 32, 4, 64, 64) == 49);
}

TEST_CASE("corner disk is clipped to the quarter disk") {
  auto pose = encode_heatmaps(single(0, 0, 0), 64, 64, 4);
  CHECK(pose.channels[0].sum().item<int64_t>() == 17);
  CHECK(testing::lattice_disk_count(0, 0, 4, 64, 64) == 17);
}

TEST_CASE("channel counts match the lattice oracle for random keypoints") {
  std::mt19937_64 rng(11);
  const int h = 48, w = 40;
  int checked = 0;
  while (checked < 100) {
    auto kp = testing::random_keypoints(rng, h, w, 0.8);
    auto pose = encode_heatmaps(kp, h, w, 4);
    for (int k = 0; k < static_cast<int>(kNumJoints) && checked < 100; ++k) {
      const auto count = pose.channels[k].sum().item<int64_t>();
      if (!kp[k].visible) {
        CHECK(count == 0);
        continue;
      }
      CHECK(count == testing::lattice_disk_count(kp[k].x, kp[k].y, 4, h, w));
      ++checked;
    }
  }
}

TEST_CASE("heatmaps are binary and confined to the disk") {
  std::mt19937_64 rng(3);
  auto kp = testing::random_keypoints(rng, 32, 32, 0.7);
  auto pose = encode_heatmaps(kp, 32, 32, 3);
  auto c = pose.channels;
  CHECK(c.eq(0).logical_or(c.eq(1)).all().item<bool>());
  auto ys = torch::arange(32).view({32, 1}).expand({32, 32});
  auto xs = torch::arange(32).view({1, 32}).expand({32, 32});
  for (int k = 0; k < static_cast<int>(kNumJoints); ++k) {
    if (!kp[k].visible) {
      CHECK(c[k].sum().item<float>() == 0.0f);
      continue;
    }
    auto d2 = (ys - kp[k].y).pow(2) + (xs - kp[k].x).pow(2);
    CHECK((c[k] > 0.5).logical_and(d2 > 9).sum().item<int64_t>() == 0);
    CHECK(c[k].sum().item<float>() > 0.0f);
  }
}

TEST_CASE("encode_heatmaps is deterministic") {
  std::mt19937_64 rng(5);
  auto kp = testing::random_keypoints(rng, 64, 32);
  CHECK(torch::equal(encode_heatmaps(kp, 64, 32).channels, encode_heatmaps(kp, 64, 32).channels));
}

TEST_CASE("encode_heatmaps rejects bad geometry") {
  CHECK_THROWS_AS(encode_heatmaps(KeypointSet{}, 0, 10), UsageError);
  CHECK_THROWS_AS(encode_heatmaps(KeypointSet{}, 10, -1), UsageError);
  CHECK_THROWS_AS(encode_heatmaps(KeypointSet{}, 8, 64, 4), UsageError);
  CHECK_THROWS_AS(encode_heatmaps(single(3, 64, 10), 64, 64), UsageError);
  CHECK_THROWS_AS(encode_heatmaps(single(3, 5, -2), 64, 64), UsageError);
}

TEST_CASE("segment rasterization matches a distance-to-segment oracle") {
  KeypointSet kp;
  kp.points[J(Joint::Neck)] = Keypoint{10, 10, true};
  kp.points[J(Joint::RHip)] = Keypoint{10, 50, true};
  auto params = bare_morphology(3.0);
  params.edges = {{J(Joint::Neck), J(Joint::RHip)}};
  auto mask = compute_pose_mask(kp, 64, 64, params).mask;
  int on_segment = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      // Distance from (x, y) to the segment x = 10, 10 <= y <= 50.
      const double cy = std::clamp<double>(y, 10.0, 50.0);
      const double d = std::hypot(x - 10.0, y - cy);
      const bool expected = d <= 1.5;
      CHECK_MESSAGE((mask[y][x].item<float>() > 0.5f) == expected, "pixel ", x, ",", y);
      if (x == 10 && y >= 10 && y <= 50) on_segment += mask[y][x].item<float>() > 0.5f;
    }
  }
  CHECK(on_segment == 41);
}

TEST_CASE("degenerate poses give an empty mask") {
  CHECK(compute_pose_mask(KeypointSet{}, 64, 32).mask.sum().item<float>() == 0.0f);
  CHECK(compute_pose_mask(single(J(Joint::Nose), 10, 10), 64, 32).mask.sum().item<float>() == 0.0f);
  KeypointSet two;
  two.points[J(Joint::Nose)] = Keypoint{10, 10, true};
  two.points[J(Joint::Neck)] = Keypoint{10, 20, true};
  CHECK(compute_pose_mask(two, 64, 32).mask.sum().item<float>() > 0.0f);
}

TEST_CASE("mask covers every heatmap disk") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto kp = testing::random_keypoints(rng, 64, 48, 0.6);
    if (kp.num_visible() < 2) continue;
    auto mask = compute_pose_mask(kp, 64, 48).mask;
    auto disks = std::get<0>(encode_heatmaps(kp, 64, 48).channels.max(0));
    CHECK(mask_contains(mask, disks));
    CHECK(mask.eq(0).logical_or(mask.eq(1)).all().item<bool>());
  }
}

TEST_CASE("toy stick figure mask covers all 18 heatmap disks") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    auto look = sample_appearance(rng);
    auto kp = sample_toy_pose(rng, look, 64, 32);
    CHECK(kp.num_visible() == kNumJoints);
    auto mask = compute_pose_mask(kp, 64, 32).mask;
    auto disks = std::get<0>(encode_heatmaps(kp, 64, 32).channels.max(0));
    CHECK(mask_contains(mask, disks));
  }
}

TEST_CASE("mask does not depend on edge order") {
  std::mt19937_64 rng(29);
  auto kp = testing::random_keypoints(rng, 64, 64, 0.9);
  MorphologyParams a;
  MorphologyParams b = a;
  std::reverse(b.edges.begin(), b.edges.end());
  std::shuffle(b.edges.begin(), b.edges.end(), rng);
  CHECK(torch::equal(compute_pose_mask(kp, 64, 64, a).mask, compute_pose_mask(kp, 64, 64, b).mask));
}

TEST_CASE("mask is mirror equivariant") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    auto kp = testing::random_keypoints(rng, 64, 40, 0.8);
    auto m = compute_pose_mask(kp, 64, 40).mask;
    auto mf = compute_pose_mask(flip_keypoints(kp, 40), 64, 40).mask;
    CHECK(torch::equal(mf, m.flip({1})));
  }
}

TEST_CASE("flip mirrors x and swaps symmetric joints") {
  KeypointSet kp;
  kp.points[J(Joint::LShoulder)] = Keypoint{10, 7, true};
  auto f = flip_keypoints(kp, 64);
  CHECK(f[J(Joint::RShoulder)].visible);
  CHECK(f[J(Joint::RShoulder)].x == 53);
  CHECK(f[J(Joint::RShoulder)].y == 7);
  CHECK_FALSE(f[J(Joint::LShoulder)].visible);
  CHECK(f[J(Joint::LShoulder)].x == -1);
}

TEST_CASE("flip_pair is an involution") {
  std::mt19937_64 rng(37);
  auto kp = testing::random_keypoints(rng, 32, 24, 0.7);
  auto img = torch::rand({3, 32, 24}) * 2 - 1;
  auto [img1, kp1] = flip_pair(img, kp);
  auto [img2, kp2] = flip_pair(img1, kp1);
  CHECK(torch::equal(img2, img));
  CHECK(kp2 == kp);
  CHECK(torch::equal(img1, img.flip({2})));
}

TEST_CASE("closing never shrinks and dilation of a point is a disk") {
  const int h = 21, w = 21;
  morphology::Binary point(h * w, 0);
  point[10 * w + 10] = 1;
  auto d = morphology::dilate(point, h, w, 3);
  int count = 0;
  for (auto v : d) count += v;
  CHECK(count == testing::lattice_disk_count(10, 10, 3, h, w));

  std::mt19937_64 rng(41);
  std::bernoulli_distribution on(0.2);
  morphology::Binary noise(h * w);
  for (auto& v : noise) v = on(rng);
  auto closed = morphology::close(noise, h, w, 2);
  for (int i = 0; i < h * w; ++i) {
    if (noise[i]) CHECK(closed[i] == 1);
  }
}

}  // TEST_SUITE
