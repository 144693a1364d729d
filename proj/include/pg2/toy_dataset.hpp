#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>

#include "pg2/config.hpp"
#include "pg2/data.hpp"
#include "pg2/pose_codec.hpp"

namespace pg2 {

using Rgb = std::array<std::uint8_t, 3>;

/// Per-identity look of a synthetic stick figure.
struct ToyAppearance {
  Rgb background{};
  Rgb skin{};
  Rgb torso{};
  Rgb stripe{};
  Rgb arms{};
  Rgb legs{};
  int stripe_period = 0;          // rows; 0 means a plain torso
  double shoulder_half_width = 0;  // fraction of image width
  double hip_half_width = 0;
};

ToyAppearance sample_appearance(std::mt19937_64& rng);

/// Random upright pose with all 18 joints visible and inside the image.
KeypointSet sample_toy_pose(std::mt19937_64& rng, const ToyAppearance& look, int height, int width);

struct ToyRender {
  torch::Tensor rgb;           // uint8 [3, H, W]
  morphology::Binary figure;   // 1 where the figure (not background) was drawn
};

ToyRender render_toy_figure(const ToyAppearance& look, const KeypointSet& kp, int height, int width);

struct ToySpec {
  int num_identities = 4;       // training identities
  int images_per_identity = 4;
  int num_test_identities = 2;  // held out, disjoint from the training identities
  int image_height = 64;
  int image_width = 32;
  std::uint64_t seed = 0;

  void validate() const;
  json to_json() const;
  static ToySpec from_json(const json& j);
};

struct ToyDataset {
  std::filesystem::path root;
  DatasetIndex train;
  DatasetIndex test;
};

/// Writes images/, annotations.csv, index_train.csv, index_test.csv and
/// toy_manifest.json under `out_dir`. Output is a pure function of `spec`.
ToyDataset make_toy_dataset(const ToySpec& spec, const std::filesystem::path& out_dir);

}  // namespace pg2
