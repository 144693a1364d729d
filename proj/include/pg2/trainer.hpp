#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "pg2/adam.hpp"
#include "pg2/checkpoint.hpp"
#include "pg2/config.hpp"
#include "pg2/data.hpp"
#include "pg2/nets.hpp"

namespace pg2 {

/// Networks, optimizer moments and progress of one run. Move-only: the
/// optimizers hold handles to the network parameters.
class TrainState {
 public:
  TrainState() = default;
  TrainState(TrainState&&) = default;
  TrainState& operator=(TrainState&&) = default;
  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

  /// Fresh networks for a stage-I or one-stage run, initialized from
  /// config.train.seed.
  static TrainState fresh(const RunConfig& config);
  /// Fresh G2 and D on top of a deep copy of a completed stage-I G1.
  static TrainState fresh_stage2(const RunConfig& config, const TrainState& stage1);

  static TrainState from_checkpoint(const Checkpoint& ckpt);
  static TrainState load(const std::filesystem::path& path);
  Checkpoint to_checkpoint() const;
  void save(const std::filesystem::path& path) const;

  RunConfig config;
  Stage stage = Stage::Stage1;
  std::int64_t iteration = 0;
  std::uint64_t training_hash = 0;

  G1 g1{nullptr};
  G2 g2{nullptr};
  Discriminator d{nullptr};
  std::optional<Adam> g1_opt;
  std::optional<Adam> g2_opt;
  std::optional<Adam> d_opt;

  /// Snapshot of the G1 weights (deep copies), keyed by parameter name.
  TensorMap g1_parameters() const;
};

/// One row of the loss log; adversarial columns are NaN for stage I.
struct LossRecord {
  std::int64_t iteration = 0;
  double masked_l1 = 0.0;
  double d_loss = std::numeric_limits<double>::quiet_NaN();
  double g_adv = std::numeric_limits<double>::quiet_NaN();
  double d_real = std::numeric_limits<double>::quiet_NaN();
  double d_fake = std::numeric_limits<double>::quiet_NaN();
};

/// First sample of the batch at a logged stage-II iteration.
struct RefinementSample {
  std::int64_t iteration = 0;
  torch::Tensor coarse;
  torch::Tensor diff;
  torch::Tensor refined;
};

/// Whole-dataset evaluation at the end of a run (no augmentation).
struct FinalEvaluation {
  double masked_l1 = 0.0;
  double mean_d_real = std::numeric_limits<double>::quiet_NaN();
  double mean_d_fake = std::numeric_limits<double>::quiet_NaN();
};

struct TrainRun {
  TrainState state;
  std::vector<LossRecord> log;
  std::vector<RefinementSample> samples;
  FinalEvaluation final_eval;
};

struct RunIO {
  /// Checkpoints, loss_log.csv and failure dumps go here when set.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const LossRecord&)> on_log;
  bool keep_samples = true;
  bool final_evaluation = true;
};

/// Mini-batch composition as a pure function of (seed, iteration): the
/// stream of samples is the concatenation of seeded per-epoch permutations.
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, int batch_size, std::uint64_t seed, bool augment_flip);

  struct Slot {
    std::size_t index;
    bool flip;
  };
  /// Batch consumed by zero-based iteration `iteration`.
  std::vector<Slot> batch(std::int64_t iteration) const;

 private:
  const std::vector<std::size_t>& permutation(std::uint64_t epoch) const;

  std::size_t size_;
  int batch_size_;
  std::uint64_t seed_;
  bool augment_;
  mutable std::map<std::uint64_t, std::vector<std::size_t>> cache_;
};

struct Batch {
  torch::Tensor condition;    // [B, 3, H, W]
  torch::Tensor target;       // [B, 3, H, W]
  PoseBatch pose;             // heatmaps [B, 18, H, W], coordinates [B, 36]
  torch::Tensor mask;         // [B, H, W]
};

Batch collate(const std::vector<PairSample>& samples);
Batch make_batch(const PairDataset& data, const std::vector<BatchSampler::Slot>& slots);

/// Stage-I: G1 minimizing the pose-mask L1 loss.
class Stage1Trainer {
 public:
  Stage1Trainer(const PairDataset& data, TrainState& state);

  /// Runs iteration state.iteration + 1 and returns its losses.
  LossRecord step();
  /// Flattened gradient of the G1 loss on the batch of the next iteration;
  /// parameters are not updated.
  torch::Tensor generator_gradient();

 private:
  torch::Tensor generator_loss(const Batch& batch);

  const PairDataset& data_;
  TrainState& state_;
  BatchSampler sampler_;
};

/// Alternating D / generator updates; the generator is G2 (stage II) or G1
/// (one-stage baseline).
class AdversarialTrainer {
 public:
  AdversarialTrainer(const PairDataset& data, TrainState& state);

  LossRecord step(RefinementSample* sample = nullptr);
  torch::Tensor generator_gradient();

  /// Mean D output on real and generated pairs, and the masked L1 of the
  /// generated images, over the whole dataset.
  FinalEvaluation evaluate() const;

 private:
  struct Generated {
    torch::Tensor coarse;
    torch::Tensor diff;
    torch::Tensor image;
  };
  Generated generate(const Batch& batch);

  const PairDataset& data_;
  TrainState& state_;
  BatchSampler sampler_;
};

TrainRun train_stage1(const PairDataset& data, const RunConfig& config, const RunIO& io = {},
                      std::optional<TrainState> resume = std::nullopt);
TrainRun train_stage2(const PairDataset& data, const TrainState& stage1, const RunConfig& config,
                      const RunIO& io = {}, std::optional<TrainState> resume = std::nullopt);
TrainRun train_one_stage(const PairDataset& data, const RunConfig& config, const RunIO& io = {},
                         std::optional<TrainState> resume = std::nullopt);

/// Masked L1 of G1 output over a dataset (no augmentation), averaged per sample.
double evaluate_stage1(const PairDataset& data, TrainState& state);

struct Generation {
  torch::Tensor coarse;                  // [K, 3, H, W]
  std::optional<torch::Tensor> refined;  // [K, 3, H, W] when a refiner is given
  std::optional<torch::Tensor> diff;
};

/// Renders `condition` ([3, H, W]) into every pose of `poses`. `refiner`
/// may be a stage-II state; its stage-I geometry must match `stage1`.
Generation generate(const TrainState& stage1, const TrainState* refiner,
                    const torch::Tensor& condition, const std::vector<KeypointSet>& poses);

}  // namespace pg2
