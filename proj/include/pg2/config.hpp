#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "pg2/adam.hpp"
#include "pg2/losses.hpp"
#include "pg2/nets.hpp"
#include "pg2/pose_codec.hpp"

namespace pg2 {

using json = nlohmann::json;

enum class Stage { Stage1, Stage2, OneStage };

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& name);

struct TrainSettings {
  Stage stage = Stage::Stage1;
  AdamOptions adam{};
  int batch_size = 16;
  std::int64_t max_iterations = 22000;
  std::uint64_t seed = 0;
  bool augment_flip = true;
  std::int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::int64_t log_every = 100;
  int d_steps_per_g_step = 1;
  bool finetune_g1 = false;          // stage II only
  int max_pairs_per_identity = 0;    // 0 keeps every ordered pair
};

struct DataSettings {
  std::string train_index;
  std::string test_index;
  int test_pairs = 0;  // 0 evaluates every test pair
  std::uint64_t test_seed = 0;
};

/// Every hyperparameter of a run. Default-constructed values reproduce the
/// 128x64 re-identification setting (N = 5, batch 16, 22k stage-I iterations).
struct RunConfig {
  G1Config g1{};
  int heatmap_radius = kDefaultHeatmapRadius;
  int g2_base_filters = 0;  // 0: same as g1.base_filters
  int d_base_filters = 64;
  int d_num_layers = 4;
  double d_leaky_slope = 0.2;
  LossConfig loss{};
  MorphologyParams morphology{};
  TrainSettings train{};
  DataSettings data{};

  G2Config g2() const;
  DConfig d() const;
  int image_height() const { return g1.image_height; }
  int image_width() const { return g1.image_width; }

  void validate() const;

  json to_json() const;
  static RunConfig from_json(const json& j);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Hash of everything that affects training numerics; excludes run-length
  /// and bookkeeping fields (iterations, logging cadence, data paths).
  std::uint64_t training_hash() const;
  /// Hash of the stage-I generator geometry; stage II and inference refuse
  /// G1 weights whose hash differs.
  std::uint64_t model_hash() const;

  static RunConfig market_preset();
  static RunConfig fashion_preset();
  /// Desk-scale setting used with the synthetic stick-figure dataset.
  static RunConfig toy_preset();
};

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace pg2
