#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pg2/config.hpp"
#include "pg2/data.hpp"
#include "pg2/metrics.hpp"
#include "pg2/trainer.hpp"

namespace pg2 {

LoadOptions load_options_for(const RunConfig& config);

/// Training pairs of `config.data.train_index` (capped per identity as configured).
PairDataset open_train_set(const RunConfig& config);
/// Seeded subset of `config.data.test_pairs` test pairs (all when 0).
PairDataset open_test_set(const RunConfig& config, const std::string& test_index = {});

struct PairScores {
  std::size_t pair = 0;
  std::string identity;
  double ssim = 0.0;
  double mask_ssim = 0.0;
};

/// One row of the quantitative table.
struct VariantReport {
  std::string model;
  std::vector<PairScores> pairs;
  double mean_ssim = 0.0;
  double mean_mask_ssim = 0.0;
  ScoreStats is;
  ScoreStats mask_is;
};

/// "G1", "G1+D" or "G1+G2+D" depending on the states given.
std::string variant_name(const TrainState& generator, const TrainState* refiner);

/// Generates every pair of `data` without augmentation and scores it against
/// its target. mask-SSIM and mask-IS use the target pose mask.
VariantReport evaluate_variant(const TrainState& generator, const TrainState* refiner,
                               const PairDataset& data, const ClassifierOracle& oracle,
                               IsOptions is_options = {});

void write_table(std::ostream& out, const std::vector<VariantReport>& reports);
void write_pair_scores(std::ostream& out, const std::vector<VariantReport>& reports);

}  // namespace pg2
