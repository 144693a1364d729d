#include "pg2/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "pg2/errors.hpp"
#include "pg2/losses.hpp"

namespace pg2 {

namespace fs = std::filesystem;

namespace {

std::string kind_of(Stage stage) {
  switch (stage) {
    case Stage::Stage1:
      return "stage1";
    case Stage::Stage2:
      return "stage2";
    case Stage::OneStage:
      return "one-stage";
  }
  return "?";
}

Stage stage_of_kind(const std::string& kind) {
  if (kind == "stage1") return Stage::Stage1;
  if (kind == "stage2") return Stage::Stage2;
  if (kind == "one-stage") return Stage::OneStage;
  throw DataError("checkpoint has unknown kind '" + kind + "'");
}

void copy_parameters(torch::nn::Module& dst, const torch::nn::Module& src) {
  torch::NoGradGuard no_grad;
  auto src_params = src.named_parameters(true);
  for (auto& p : dst.named_parameters(true)) {
    p.value().copy_(src_params[p.key()]);
  }
}

void export_parameters(const torch::nn::Module& module, const std::string& prefix, TensorMap& out) {
  for (const auto& p : module.named_parameters(true)) {
    out[prefix + p.key()] = p.value().detach();
  }
}

void import_parameters(torch::nn::Module& module, const std::string& prefix, const TensorMap& in) {
  torch::NoGradGuard no_grad;
  for (auto& p : module.named_parameters(true)) {
    auto it = in.find(prefix + p.key());
    if (it == in.end()) {
      throw DataError("checkpoint is missing parameter '" + prefix + p.key() + "'");
    }
    if (it->second.sizes() != p.value().sizes()) {
      throw DataError("checkpoint parameter '" + prefix + p.key() + "' has the wrong shape");
    }
    p.value().copy_(it->second);
  }
}

void set_requires_grad(torch::nn::Module& module, bool flag) {
  for (auto& p : module.parameters(true)) p.requires_grad_(flag);
}

void require_finite(double value, const char* what, std::int64_t iteration) {
  if (!std::isfinite(value)) {
    throw NumericalError(std::string("non-finite ") + what + " at iteration " +
                         std::to_string(iteration));
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

torch::Tensor flat_gradient(const torch::nn::Module& module) {
  std::vector<torch::Tensor> parts;
  for (const auto& p : module.parameters(true)) {
    parts.push_back(p.grad().defined() ? p.grad().flatten().clone()
                                       : torch::zeros({p.numel()}, p.options()));
  }
  return torch::cat(parts);
}

void zero_grads(torch::nn::Module& module) {
  for (auto& p : module.parameters(true)) {
    if (p.grad().defined()) p.mutable_grad().reset();
  }
}

void check_dataset(const PairDataset& data, const RunConfig& config) {
  if (data.empty()) throw DataError("training dataset has no pairs");
  if (data.options().height != config.image_height() ||
      data.options().width != config.image_width()) {
    throw DataError("dataset resolution does not match the model configuration");
  }
}

fs::path log_path(const fs::path& dir) { return dir / "loss_log.csv"; }

void append_log(const fs::path& dir, const LossRecord& r) {
  const auto path = log_path(dir);
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot append to " + path.string());
  if (fresh) out << "iteration,masked_l1,d_loss,g_adv,d_real,d_fake\n";
  out.precision(10);
  out << r.iteration << ',' << r.masked_l1 << ',' << r.d_loss << ',' << r.g_adv << ',' << r.d_real
      << ',' << r.d_fake << '\n';
}

template <typename StepFn>
void run_loop(TrainState& state, const RunIO& io, TrainRun& run, StepFn&& step) {
  const auto& train = state.config.train;
  if (io.out_dir) fs::create_directories(*io.out_dir);
  try {
    while (state.iteration < train.max_iterations) {
      const std::int64_t next = state.iteration + 1;
      const bool log_now = next == 1 || next % train.log_every == 0 || next == train.max_iterations;
      RefinementSample sample;
      LossRecord rec = step(log_now && io.keep_samples ? &sample : nullptr);
      if (log_now) {
        run.log.push_back(rec);
        if (sample.refined.defined()) run.samples.push_back(std::move(sample));
        if (io.out_dir) append_log(*io.out_dir, rec);
        if (io.on_log) io.on_log(rec);
      }
      if (io.out_dir && train.checkpoint_every > 0 && state.iteration % train.checkpoint_every == 0) {
        state.save(*io.out_dir / ("checkpoint_" + std::to_string(state.iteration) + ".ckpt"));
      }
    }
  } catch (const NumericalError&) {
    if (io.out_dir) state.save(*io.out_dir / "failure_state.ckpt");
    throw;
  }
  if (io.out_dir) state.save(*io.out_dir / "final.ckpt");
}

TrainState resume_or(std::optional<TrainState>& resume, const RunConfig& config, Stage stage) {
  if (resume->stage != stage) {
    throw DataError("resume checkpoint is a " + kind_of(resume->stage) + " state, expected " +
                    kind_of(stage));
  }
  if (resume->training_hash != config.training_hash()) {
    throw DataError("resume checkpoint config hash does not match the run config");
  }
  TrainState state = std::move(*resume);
  state.config = config;
  return state;
}

}  // namespace

// ---------------------------------------------------------------------------
// TrainState
// ---------------------------------------------------------------------------

TrainState TrainState::fresh(const RunConfig& config) {
  config.validate();
  if (config.train.stage == Stage::Stage2) {
    throw UsageError("stage-II states are built from a stage-I state");
  }
  TrainState s;
  s.config = config;
  s.stage = config.train.stage;
  s.training_hash = config.training_hash();
  torch::manual_seed(config.train.seed);
  s.g1 = G1(config.g1);
  s.g1_opt.emplace(named_parameters_of(*s.g1, ""), config.train.adam);
  if (s.stage == Stage::OneStage) {
    s.d = Discriminator(config.d());
    s.d_opt.emplace(named_parameters_of(*s.d, ""), config.train.adam);
  }
  return s;
}

TrainState TrainState::fresh_stage2(const RunConfig& config, const TrainState& stage1) {
  config.validate();
  if (config.train.stage != Stage::Stage2) throw UsageError("config is not a stage-II config");
  if (stage1.stage != Stage::Stage1 || !stage1.g1) {
    throw DataError("stage II needs a stage-I G1 checkpoint");
  }
  if (stage1.iteration == 0) {
    throw DataError("stage-I checkpoint has not been trained");
  }
  if (stage1.config.model_hash() != config.model_hash()) {
    throw DataError("stage-I checkpoint geometry hash does not match the stage-II config");
  }
  TrainState s;
  s.config = config;
  s.stage = Stage::Stage2;
  s.training_hash = config.training_hash();
  s.g1 = G1(config.g1);
  copy_parameters(*s.g1, *stage1.g1);
  torch::manual_seed(config.train.seed);
  s.g2 = G2(config.g2());
  s.d = Discriminator(config.d());
  s.g2_opt.emplace(named_parameters_of(*s.g2, ""), config.train.adam);
  s.d_opt.emplace(named_parameters_of(*s.d, ""), config.train.adam);
  if (config.train.finetune_g1) {
    s.g1_opt.emplace(named_parameters_of(*s.g1, ""), config.train.adam);
  } else {
    set_requires_grad(*s.g1, false);
  }
  return s;
}

Checkpoint TrainState::to_checkpoint() const {
  Checkpoint c;
  c.kind = kind_of(stage);
  c.config = config.to_json();
  c.training_hash = training_hash;
  c.model_hash = config.model_hash();
  c.iteration = iteration;
  if (g1) export_parameters(*g1, "g1.", c.tensors);
  if (g2) export_parameters(*g2, "g2.", c.tensors);
  if (d) export_parameters(*d, "d.", c.tensors);
  if (g1_opt) g1_opt->save_state(c.tensors, "opt.g1.");
  if (g2_opt) g2_opt->save_state(c.tensors, "opt.g2.");
  if (d_opt) d_opt->save_state(c.tensors, "opt.d.");
  return c;
}

TrainState TrainState::from_checkpoint(const Checkpoint& ckpt) {
  TrainState s;
  s.config = RunConfig::from_json(ckpt.config);
  s.stage = stage_of_kind(ckpt.kind);
  s.config.train.stage = s.stage;
  s.iteration = ckpt.iteration;
  s.training_hash = ckpt.training_hash;
  const auto has = [&](const std::string& key) { return ckpt.tensors.count(key) > 0; };

  s.g1 = G1(s.config.g1);
  import_parameters(*s.g1, "g1.", ckpt.tensors);
  if (s.stage == Stage::Stage2) {
    s.g2 = G2(s.config.g2());
    import_parameters(*s.g2, "g2.", ckpt.tensors);
  }
  if (s.stage != Stage::Stage1) {
    s.d = Discriminator(s.config.d());
    import_parameters(*s.d, "d.", ckpt.tensors);
  }
  const auto& adam = s.config.train.adam;
  if (has("opt.g1.steps")) {
    s.g1_opt.emplace(named_parameters_of(*s.g1, ""), adam);
    s.g1_opt->load_state(ckpt.tensors, "opt.g1.");
  } else if (s.stage == Stage::Stage2) {
    set_requires_grad(*s.g1, false);
  }
  if (has("opt.g2.steps")) {
    s.g2_opt.emplace(named_parameters_of(*s.g2, ""), adam);
    s.g2_opt->load_state(ckpt.tensors, "opt.g2.");
  }
  if (has("opt.d.steps")) {
    s.d_opt.emplace(named_parameters_of(*s.d, ""), adam);
    s.d_opt->load_state(ckpt.tensors, "opt.d.");
  }
  return s;
}

TrainState TrainState::load(const fs::path& path) { return from_checkpoint(load_checkpoint(path)); }

void TrainState::save(const fs::path& path) const { save_checkpoint(to_checkpoint(), path); }

TensorMap TrainState::g1_parameters() const {
  TensorMap out;
  for (const auto& p : g1->named_parameters(true)) out[p.key()] = p.value().detach().clone();
  return out;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

BatchSampler::BatchSampler(std::size_t dataset_size, int batch_size, std::uint64_t seed,
                           bool augment_flip)
    : size_(dataset_size), batch_size_(batch_size), seed_(seed), augment_(augment_flip) {
  if (size_ == 0) throw DataError("cannot sample batches from an empty dataset");
  if (batch_size_ < 1) throw UsageError("batch size must be positive");
}

const std::vector<std::size_t>& BatchSampler::permutation(std::uint64_t epoch) const {
  auto it = cache_.find(epoch);
  if (it != cache_.end()) return it->second;
  if (cache_.size() > 4) cache_.clear();
  std::vector<std::size_t> perm(size_);
  std::iota(perm.begin(), perm.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(perm.begin(), perm.end(), rng);
  return cache_.emplace(epoch, std::move(perm)).first->second;
}

std::vector<BatchSampler::Slot> BatchSampler::batch(std::int64_t iteration) const {
  std::vector<Slot> slots;
  slots.reserve(static_cast<std::size_t>(batch_size_));
  for (int s = 0; s < batch_size_; ++s) {
    const auto q = static_cast<std::uint64_t>(iteration) * static_cast<std::uint64_t>(batch_size_) +
                   static_cast<std::uint64_t>(s);
    const auto& perm = permutation(q / size_);
    const bool flip = augment_ && (splitmix64(seed_ ^ splitmix64(q)) & 1ULL);
    slots.push_back({perm[q % size_], flip});
  }
  return slots;
}

Batch collate(const std::vector<PairSample>& samples) {
  std::vector<torch::Tensor> cond, target, heat, coords, mask;
  for (const auto& s : samples) {
    cond.push_back(s.condition_image);
    target.push_back(s.target_image);
    heat.push_back(s.target_pose.channels);
    coords.push_back(keypoint_coordinates(s.target_keypoints,
                                          static_cast<int>(s.target_image.size(1)),
                                          static_cast<int>(s.target_image.size(2))));
    mask.push_back(s.target_mask.mask);
  }
  return Batch{torch::stack(cond), torch::stack(target), PoseBatch{torch::stack(heat), torch::stack(coords)},
               torch::stack(mask)};
}

Batch make_batch(const PairDataset& data, const std::vector<BatchSampler::Slot>& slots) {
  std::vector<PairSample> samples;
  samples.reserve(slots.size());
  for (const auto& slot : slots) samples.push_back(data.sample(slot.index, slot.flip));
  return collate(samples);
}

// ---------------------------------------------------------------------------
// Stage I
// ---------------------------------------------------------------------------

Stage1Trainer::Stage1Trainer(const PairDataset& data, TrainState& state)
    : data_(data),
      state_(state),
      sampler_(data.size(), state.config.train.batch_size, state.config.train.seed,
               state.config.train.augment_flip) {
  if (!state_.g1 || !state_.g1_opt) throw UsageError("stage-I trainer needs G1 and its optimizer");
}

torch::Tensor Stage1Trainer::generator_loss(const Batch& batch) {
  auto out = state_.g1(batch.condition, batch.pose);
  return pose_mask_l1(out, batch.target, batch.mask, state_.config.loss.reduction);
}

LossRecord Stage1Trainer::step() {
  const auto batch = make_batch(data_, sampler_.batch(state_.iteration));
  state_.g1_opt->zero_grad();
  auto loss = generator_loss(batch);
  const double value = loss.item<double>();
  require_finite(value, "masked L1 loss", state_.iteration + 1);
  loss.backward();
  state_.g1_opt->step();
  ++state_.iteration;
  return LossRecord{state_.iteration, value};
}

torch::Tensor Stage1Trainer::generator_gradient() {
  const auto batch = make_batch(data_, sampler_.batch(state_.iteration));
  zero_grads(*state_.g1);
  generator_loss(batch).backward();
  auto g = flat_gradient(*state_.g1);
  zero_grads(*state_.g1);
  return g;
}

double evaluate_stage1(const PairDataset& data, TrainState& state) {
  torch::NoGradGuard no_grad;
  const int bs = state.config.train.batch_size;
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(bs)) {
    std::vector<BatchSampler::Slot> slots;
    for (std::size_t i = start; i < std::min(data.size(), start + bs); ++i) slots.push_back({i, false});
    const auto batch = make_batch(data, slots);
    auto out = state.g1(batch.condition, batch.pose);
    total += pose_mask_l1(out, batch.target, batch.mask, state.config.loss.reduction).item<double>() *
             static_cast<double>(slots.size());
  }
  return total / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Adversarial stages
// ---------------------------------------------------------------------------

AdversarialTrainer::AdversarialTrainer(const PairDataset& data, TrainState& state)
    : data_(data),
      state_(state),
      sampler_(data.size(), state.config.train.batch_size, state.config.train.seed,
               state.config.train.augment_flip) {
  if (!state_.d || !state_.d_opt) throw UsageError("adversarial trainer needs D and its optimizer");
  if (state_.stage == Stage::Stage2 && (!state_.g2 || !state_.g2_opt)) {
    throw UsageError("stage-II trainer needs G2 and its optimizer");
  }
  if (state_.stage == Stage::OneStage && !state_.g1_opt) {
    throw UsageError("one-stage trainer needs the G1 optimizer");
  }
  if (state_.stage == Stage::Stage1) throw UsageError("stage-I states carry no discriminator");
}

AdversarialTrainer::Generated AdversarialTrainer::generate(const Batch& batch) {
  Generated g;
  if (state_.stage == Stage::OneStage) {
    g.image = state_.g1(batch.condition, batch.pose);
    g.coarse = g.image;
    return g;
  }
  if (state_.g1_opt) {
    g.coarse = state_.g1(batch.condition, batch.pose);
  } else {
    torch::NoGradGuard no_grad;
    g.coarse = state_.g1(batch.condition, batch.pose);
  }
  auto r = state_.g2(batch.condition, g.coarse);
  g.diff = r.diff;
  g.image = r.refined;
  return g;
}

LossRecord AdversarialTrainer::step(RefinementSample* sample) {
  const auto& cfg = state_.config;
  const std::int64_t it = state_.iteration + 1;
  const auto batch = make_batch(data_, sampler_.batch(state_.iteration));
  LossRecord rec;
  rec.iteration = it;

  for (int k = 0; k < cfg.train.d_steps_per_g_step; ++k) {
    torch::Tensor fake;
    {
      torch::NoGradGuard no_grad;
      fake = generate(batch).image;
    }
    state_.d_opt->zero_grad();
    auto d_real = state_.d(batch.condition, batch.target);
    auto d_fake = state_.d(batch.condition, fake);
    auto loss = d_loss(d_real, d_fake);
    rec.d_loss = loss.item<double>();
    rec.d_real = d_real.mean().item<double>();
    rec.d_fake = d_fake.mean().item<double>();
    require_finite(rec.d_loss, "discriminator loss", it);
    loss.backward();
    state_.d_opt->step();
  }

  set_requires_grad(*state_.d, false);
  Adam& gen_opt = state_.stage == Stage::Stage2 ? *state_.g2_opt : *state_.g1_opt;
  gen_opt.zero_grad();
  if (state_.stage == Stage::Stage2 && state_.g1_opt) state_.g1_opt->zero_grad();
  auto gen = generate(batch);
  auto adv = g_adv_loss(state_.d(batch.condition, gen.image));
  auto l1 = pose_mask_l1(gen.image, batch.target, batch.mask, cfg.loss.reduction);
  auto total = adv + cfg.loss.lambda * l1;
  rec.g_adv = adv.item<double>();
  rec.masked_l1 = l1.item<double>();
  try {
    require_finite(total.item<double>(), "generator loss", it);
  } catch (...) {
    set_requires_grad(*state_.d, true);
    throw;
  }
  total.backward();
  set_requires_grad(*state_.d, true);
  gen_opt.step();
  if (state_.stage == Stage::Stage2 && state_.g1_opt) state_.g1_opt->step();
  ++state_.iteration;

  if (sample) {
    sample->iteration = it;
    sample->coarse = gen.coarse[0].detach().clone();
    sample->refined = gen.image[0].detach().clone();
    sample->diff = gen.diff.defined() ? gen.diff[0].detach().clone()
                                      : torch::zeros_like(sample->refined);
  }
  return rec;
}

torch::Tensor AdversarialTrainer::generator_gradient() {
  const auto batch = make_batch(data_, sampler_.batch(state_.iteration));
  torch::nn::Module& gen_module =
      state_.stage == Stage::Stage2 ? static_cast<torch::nn::Module&>(*state_.g2)
                                    : static_cast<torch::nn::Module&>(*state_.g1);
  zero_grads(gen_module);
  set_requires_grad(*state_.d, false);
  auto gen = generate(batch);
  auto total = g_adv_loss(state_.d(batch.condition, gen.image)) +
               state_.config.loss.lambda *
                   pose_mask_l1(gen.image, batch.target, batch.mask, state_.config.loss.reduction);
  total.backward();
  set_requires_grad(*state_.d, true);
  auto g = flat_gradient(gen_module);
  zero_grads(gen_module);
  return g;
}

FinalEvaluation AdversarialTrainer::evaluate() const {
  torch::NoGradGuard no_grad;
  auto& self = const_cast<AdversarialTrainer&>(*this);
  const int bs = state_.config.train.batch_size;
  FinalEvaluation ev{0.0, 0.0, 0.0};
  for (std::size_t start = 0; start < data_.size(); start += static_cast<std::size_t>(bs)) {
    std::vector<BatchSampler::Slot> slots;
    for (std::size_t i = start; i < std::min(data_.size(), start + bs); ++i) slots.push_back({i, false});
    const auto batch = make_batch(data_, slots);
    const auto gen = self.generate(batch);
    const double n = static_cast<double>(slots.size());
    ev.mean_d_real += state_.d(batch.condition, batch.target).sum().item<double>();
    ev.mean_d_fake += state_.d(batch.condition, gen.image).sum().item<double>();
    ev.masked_l1 +=
        pose_mask_l1(gen.image, batch.target, batch.mask, state_.config.loss.reduction).item<double>() * n;
  }
  const double total = static_cast<double>(data_.size());
  ev.mean_d_real /= total;
  ev.mean_d_fake /= total;
  ev.masked_l1 /= total;
  return ev;
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

TrainRun train_stage1(const PairDataset& data, const RunConfig& config, const RunIO& io,
                      std::optional<TrainState> resume) {
  config.validate();
  if (config.train.stage != Stage::Stage1) throw UsageError("config is not a stage-I config");
  check_dataset(data, config);
  TrainRun run;
  run.state = resume ? resume_or(resume, config, Stage::Stage1) : TrainState::fresh(config);
  Stage1Trainer trainer(data, run.state);
  run_loop(run.state, io, run, [&](RefinementSample*) { return trainer.step(); });
  if (io.final_evaluation) run.final_eval.masked_l1 = evaluate_stage1(data, run.state);
  return run;
}

TrainRun train_stage2(const PairDataset& data, const TrainState& stage1, const RunConfig& config,
                      const RunIO& io, std::optional<TrainState> resume) {
  config.validate();
  if (config.train.stage != Stage::Stage2) throw UsageError("config is not a stage-II config");
  check_dataset(data, config);
  TrainRun run;
  run.state = resume ? resume_or(resume, config, Stage::Stage2)
                     : TrainState::fresh_stage2(config, stage1);
  AdversarialTrainer trainer(data, run.state);
  run_loop(run.state, io, run, [&](RefinementSample* s) { return trainer.step(s); });
  if (io.final_evaluation) run.final_eval = trainer.evaluate();
  return run;
}

TrainRun train_one_stage(const PairDataset& data, const RunConfig& config, const RunIO& io,
                         std::optional<TrainState> resume) {
  config.validate();
  if (config.train.stage != Stage::OneStage) throw UsageError("config is not a one-stage config");
  check_dataset(data, config);
  TrainRun run;
  run.state = resume ? resume_or(resume, config, Stage::OneStage) : TrainState::fresh(config);
  AdversarialTrainer trainer(data, run.state);
  run_loop(run.state, io, run, [&](RefinementSample*) { return trainer.step(nullptr); });
  if (io.final_evaluation) run.final_eval = trainer.evaluate();
  return run;
}

Generation generate(const TrainState& stage1, const TrainState* refiner,
                    const torch::Tensor& condition, const std::vector<KeypointSet>& poses) {
  if (!stage1.g1) throw DataError("generate: state has no G1");
  const int h = stage1.config.image_height();
  const int w = stage1.config.image_width();
  if (condition.dim() != 3 || condition.size(0) != 3 || condition.size(1) != h ||
      condition.size(2) != w) {
    throw DataError("generate: condition image does not match the model resolution " +
                    std::to_string(h) + "x" + std::to_string(w));
  }
  if (poses.empty()) throw UsageError("generate: no target poses given");
  if (refiner) {
    if (refiner->stage != Stage::Stage2 || !refiner->g2) {
      throw DataError("generate: refiner is not a stage-II state");
    }
    if (refiner->config.model_hash() != stage1.config.model_hash()) {
      throw DataError("generate: stage-II state was trained on a different stage-I geometry");
    }
  }
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> heat, coords;
  for (const auto& kp : poses) {
    heat.push_back(encode_heatmaps(kp, h, w, stage1.config.heatmap_radius).channels);
    coords.push_back(keypoint_coordinates(kp, h, w));
  }
  const auto k = static_cast<long>(poses.size());
  auto cond = condition.unsqueeze(0).expand({k, 3, h, w}).contiguous();
  Generation out;
  out.coarse = G1(stage1.g1)(cond, PoseBatch{torch::stack(heat), torch::stack(coords)});
  if (refiner) {
    auto r = G2(refiner->g2)(cond, out.coarse);
    out.refined = r.refined;
    out.diff = r.diff;
  }
  return out;
}

}  // namespace pg2
