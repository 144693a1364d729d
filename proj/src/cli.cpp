#include "pg2/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>

#include "pg2/config.hpp"
#include "pg2/data.hpp"
#include "pg2/errors.hpp"
#include "pg2/grid.hpp"
#include "pg2/image_io.hpp"
#include "pg2/oracles.hpp"
#include "pg2/report.hpp"
#include "pg2/toy_dataset.hpp"
#include "pg2/trainer.hpp"

#ifndef PG2_BUILD_ID
#define PG2_BUILD_ID "unknown"
#endif

namespace pg2 {

namespace fs = std::filesystem;

const char* build_id() { return PG2_BUILD_ID; }

json RunManifest::to_json() const {
  return {{"command", command},   {"argv", argv},         {"config", config},
          {"seed", seed},         {"build_id", build_id}, {"outputs", outputs},
          {"duration_seconds", duration_seconds},         {"status", status}};
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void RunManifest::write(const fs::path& dir) const {
  write_file_atomic(dir / kFileName, to_json().dump(2) + "\n");
}

namespace {

using Clock = std::chrono::steady_clock;

std::string format_number(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("'" + item + "' is not a number");
    }
  }
  if (out.empty()) throw UsageError("empty list '" + text + "'");
  return out;
}

std::vector<KeypointSet> read_pose_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pose file " + path.string());
  std::vector<KeypointSet> poses;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("image_id", 0) == 0) continue;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    poses.push_back(parse_annotation_line(line, path.string()).keypoints);
  }
  if (poses.empty()) throw DataError("pose file " + path.string() + " has no poses");
  return poses;
}

RunConfig preset(const std::string& name) {
  if (name == "market") return RunConfig::market_preset();
  if (name == "fashion") return RunConfig::fashion_preset();
  if (name == "toy") return RunConfig::toy_preset();
  throw UsageError("unknown preset '" + name + "'");
}

// Shared by every subcommand that writes artifacts.
class Run {
 public:
  Run(std::string command, std::vector<std::string> argv, fs::path dir)
      : dir_(std::move(dir)), start_(Clock::now()) {
    manifest_.command = std::move(command);
    manifest_.argv = std::move(argv);
    manifest_.build_id = build_id();
    if (fs::exists(dir_ / RunManifest::kFileName)) {
      throw UsageError("output directory " + dir_.string() + " already holds a run; pick a fresh --out");
    }
    fs::create_directories(dir_);
  }

  RunManifest& manifest() { return manifest_; }
  const fs::path& dir() const { return dir_; }
  void output(const fs::path& p) { manifest_.outputs.push_back(fs::relative(p, dir_).string()); }

  void finish(const std::string& status = "ok") {
    manifest_.status = status;
    manifest_.duration_seconds = std::chrono::duration<double>(Clock::now() - start_).count();
    manifest_.write(dir_);
  }

 private:
  fs::path dir_;
  Clock::time_point start_;
  RunManifest manifest_;
};

// Writes the manifest with a failure status before the error propagates.
template <typename Fn>
int guarded(Run& run, Fn&& fn) {
  try {
    fn();
  } catch (const NumericalError&) {
    run.finish("numerical-error");
    throw;
  } catch (const DataError&) {
    run.finish("data-error");
    throw;
  } catch (const UsageError&) {
    run.finish("usage-error");
    throw;
  }
  run.finish();
  return kExitOk;
}

void print_record(std::ostream& out, const std::string& prefix, const LossRecord& r) {
  out << prefix << "iter " << r.iteration << " masked_l1 " << r.masked_l1;
  if (!std::isnan(r.d_loss)) {
    out << " d_loss " << r.d_loss << " g_adv " << r.g_adv << " d_real " << r.d_real << " d_fake "
        << r.d_fake;
  }
  out << "\n";
}

void save_refinement_samples(Run& run, const std::vector<RefinementSample>& samples,
                             const std::string& subdir = "samples") {
  for (const auto& s : samples) {
    std::ostringstream name;
    name << "iter_" << std::setw(6) << std::setfill('0') << s.iteration << ".png";
    const auto path = run.dir() / subdir / name.str();
    save_image(tile_grid({{s.coarse, s.diff.clamp(-1, 1), s.refined}}), path);
    run.output(path);
  }
}

// ---------------------------------------------------------------------------
// make-toy-dataset
// ---------------------------------------------------------------------------

struct ToyFlags {
  std::string out;
  std::uint64_t seed = 0;
  ToySpec spec;
};

void cmd_make_toy_dataset(const ToyFlags& f, const std::vector<std::string>& argv, std::ostream& out) {
  ToySpec spec = f.spec;
  spec.seed = f.seed;
  spec.validate();
  Run run("make-toy-dataset", argv, f.out);
  run.manifest().seed = f.seed;
  run.manifest().config = spec.to_json();
  guarded(run, [&] {
    auto ds = make_toy_dataset(spec, f.out);
    for (const char* p : {"annotations.csv", "index_train.csv", "index_test.csv", "toy_manifest.json"}) {
      run.output(ds.root / p);
    }
    for (const auto& rec : ds.train.images) run.output(rec.image_path);
    for (const auto& rec : ds.test.images) run.output(rec.image_path);
    out << "wrote " << ds.train.images.size() << " training and " << ds.test.images.size()
        << " test images to " << ds.root.string() << "\n";
  });
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainFlags {
  std::string stage, config, preset = "market", resume, g1, out, train_index;
  std::uint64_t seed = 0;
  std::int64_t iterations = 0, log_every = 0, checkpoint_every = -1;
  double lambda = -1.0;
  bool quiet = false;
  CLI::Option* seed_opt = nullptr;
};

void apply_overrides(RunConfig& cfg, const TrainFlags& f) {
  if (!f.stage.empty()) cfg.train.stage = stage_from_string(f.stage);
  if (f.seed_opt && f.seed_opt->count()) cfg.train.seed = f.seed;
  if (f.iterations > 0) cfg.train.max_iterations = f.iterations;
  if (f.log_every > 0) cfg.train.log_every = f.log_every;
  if (f.checkpoint_every >= 0) cfg.train.checkpoint_every = f.checkpoint_every;
  if (f.lambda >= 0) cfg.loss.lambda = f.lambda;
  if (!f.train_index.empty()) cfg.data.train_index = f.train_index;
}

void cmd_train(const TrainFlags& f, const std::vector<std::string>& argv, std::ostream& out) {
  std::optional<TrainState> resume;
  std::optional<TrainState> stage1;
  if (!f.resume.empty()) resume = TrainState::load(f.resume);
  if (!f.g1.empty()) stage1 = TrainState::load(f.g1);

  RunConfig cfg;
  if (!f.config.empty()) {
    cfg = RunConfig::load(f.config);
  } else if (resume) {
    cfg = resume->config;
  } else if (stage1 && f.stage == "2") {
    cfg = stage1->config;
    cfg.train.stage = Stage::Stage2;
  } else {
    cfg = preset(f.preset);
  }
  apply_overrides(cfg, f);
  cfg.validate();
  if (cfg.train.stage == Stage::Stage2 && !resume && !stage1) {
    throw UsageError("stage 2 needs --g1 <stage-1 checkpoint> (or --resume)");
  }

  Run run("train", argv, f.out);
  run.manifest().seed = cfg.train.seed;
  run.manifest().config = cfg.to_json();
  guarded(run, [&] {
    cfg.save(run.dir() / "config.json");
    run.output(run.dir() / "config.json");
    const auto data = open_train_set(cfg);
    out << "stage " << to_string(cfg.train.stage) << ": " << data.size() << " training pairs, "
        << cfg.train.max_iterations << " iterations\n";

    RunIO io;
    io.out_dir = run.dir();
    if (!f.quiet) io.on_log = [&](const LossRecord& r) { print_record(out, "", r); };
    TrainRun result;
    try {
      switch (cfg.train.stage) {
        case Stage::Stage1:
          result = train_stage1(data, cfg, io, std::move(resume));
          break;
        case Stage::Stage2: {
          TrainState none;
          result = train_stage2(data, stage1 ? *stage1 : none, cfg, io, std::move(resume));
          break;
        }
        case Stage::OneStage:
          result = train_one_stage(data, cfg, io, std::move(resume));
          break;
      }
    } catch (const NumericalError&) {
      if (fs::exists(run.dir() / "failure_state.ckpt")) run.output(run.dir() / "failure_state.ckpt");
      throw;
    }
    for (const auto& entry : fs::directory_iterator(run.dir())) {
      if (entry.path().extension() == ".ckpt") run.output(entry.path());
    }
    run.output(run.dir() / "loss_log.csv");
    save_refinement_samples(run, result.samples);
    out << "final masked_l1 " << result.final_eval.masked_l1;
    if (!std::isnan(result.final_eval.mean_d_real)) {
      out << " mean D(real) " << result.final_eval.mean_d_real << " mean D(fake) "
          << result.final_eval.mean_d_fake;
    }
    out << "\n";
  });
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateFlags {
  std::string g1, g2, condition, poses, out;
};

void cmd_generate(const GenerateFlags& f, const std::vector<std::string>& argv, std::ostream& out) {
  const auto stage1 = TrainState::load(f.g1);
  std::optional<TrainState> refiner;
  if (!f.g2.empty()) refiner = TrainState::load(f.g2);
  const auto condition = load_image(f.condition);
  const auto poses = read_pose_list(f.poses);

  Run run("generate", argv, f.out);
  run.manifest().seed = stage1.config.train.seed;
  run.manifest().config = {{"g1", f.g1}, {"g2", f.g2}, {"condition", f.condition}, {"poses", f.poses},
                           {"model", stage1.config.to_json()}};
  guarded(run, [&] {
    const auto gen = generate(stage1, refiner ? &*refiner : nullptr, condition, poses);
    const int h = stage1.config.image_height(), w = stage1.config.image_width();
    std::vector<std::vector<torch::Tensor>> rows;
    for (std::size_t k = 0; k < poses.size(); ++k) {
      const auto i = static_cast<int64_t>(k);
      std::ostringstream stem;
      stem << "pose_" << std::setw(2) << std::setfill('0') << k;
      const auto coarse_path = run.dir() / (stem.str() + "_coarse.png");
      save_image(gen.coarse[i], coarse_path);
      run.output(coarse_path);
      torch::Tensor refined;
      if (gen.refined) {
        refined = (*gen.refined)[i];
        const auto refined_path = run.dir() / (stem.str() + "_refined.png");
        save_image(refined, refined_path);
        run.output(refined_path);
      }
      const auto pose = encode_heatmaps(poses[k], h, w, stage1.config.heatmap_radius);
      rows.push_back({condition, render_pose(pose, poses[k]), torch::Tensor(), gen.coarse[i], refined});
    }
    const auto grid_path = run.dir() / "grid.png";
    save_image(tile_grid(rows), grid_path);
    run.output(grid_path);
    out << "generated " << poses.size() << " poses into " << run.dir().string() << "\n";
  });
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvalFlags {
  std::string g1, g2, one_stage, test_index, oracle = "color-histogram", out;
  int pairs = -1, splits = kDefaultSplits, grid_rows = 8;
  std::uint64_t test_seed = 0;
  bool include_untrained = false;
  CLI::Option* test_seed_opt = nullptr;
};

torch::Tensor first_images(const TrainState& gen, const TrainState* refiner, const Batch& batch,
                           torch::Tensor* coarse) {
  torch::NoGradGuard no_grad;
  auto c = G1(gen.g1)(batch.condition, batch.pose);
  if (coarse) *coarse = c;
  return refiner ? G2(refiner->g2)(batch.condition, c).refined : c;
}

void cmd_evaluate(const EvalFlags& f, const std::vector<std::string>& argv, std::ostream& out) {
  const auto stage1 = TrainState::load(f.g1);
  std::optional<TrainState> refiner, one_stage;
  if (!f.g2.empty()) refiner = TrainState::load(f.g2);
  if (!f.one_stage.empty()) one_stage = TrainState::load(f.one_stage);
  RunConfig cfg = stage1.config;
  if (f.pairs >= 0) cfg.data.test_pairs = f.pairs;
  if (f.test_seed_opt && f.test_seed_opt->count()) cfg.data.test_seed = f.test_seed;
  const auto oracle = oracle_by_name(f.oracle);
  IsOptions is_opts;
  is_opts.splits = f.splits;
  if (is_opts.splits < 1) throw UsageError("--splits must be positive");

  Run run("evaluate", argv, f.out);
  run.manifest().seed = cfg.data.test_seed;
  run.manifest().config = {{"g1", f.g1}, {"g2", f.g2}, {"one_stage", f.one_stage},
                           {"oracle", f.oracle}, {"splits", f.splits}, {"model", cfg.to_json()}};
  guarded(run, [&] {
    const auto data = open_test_set(cfg, f.test_index);
    std::vector<VariantReport> reports;
    if (f.include_untrained) {
      RunConfig fresh_cfg = cfg;
      fresh_cfg.train.stage = Stage::Stage1;
      const auto untrained = TrainState::fresh(fresh_cfg);
      reports.push_back(evaluate_variant(untrained, nullptr, data, oracle, is_opts));
      reports.back().model = "G1 (untrained)";
    }
    reports.push_back(evaluate_variant(stage1, nullptr, data, oracle, is_opts));
    if (one_stage) reports.push_back(evaluate_variant(*one_stage, nullptr, data, oracle, is_opts));
    if (refiner) reports.push_back(evaluate_variant(stage1, &*refiner, data, oracle, is_opts));

    std::ostringstream table, per_pair;
    write_table(table, reports);
    write_pair_scores(per_pair, reports);
    write_file_atomic(run.dir() / "metrics.csv", table.str());
    write_file_atomic(run.dir() / "pair_scores.csv", per_pair.str());
    run.output(run.dir() / "metrics.csv");
    run.output(run.dir() / "pair_scores.csv");
    out << table.str();

    std::vector<BatchSampler::Slot> slots;
    for (std::size_t i = 0; i < std::min<std::size_t>(data.size(), f.grid_rows); ++i) slots.push_back({i, false});
    if (!slots.empty()) {
      const auto batch = make_batch(data, slots);
      torch::Tensor coarse;
      const auto refined = first_images(stage1, refiner ? &*refiner : nullptr, batch, &coarse);
      std::vector<std::vector<torch::Tensor>> rows;
      for (std::size_t k = 0; k < slots.size(); ++k) {
        const auto i = static_cast<int64_t>(k);
        const auto sample = data.sample(slots[k].index, false);
        rows.push_back({batch.condition[i], render_pose(sample.target_pose, sample.target_keypoints),
                        batch.target[i], coarse[i], refiner ? refined[i] : torch::Tensor()});
      }
      save_image(tile_grid(rows), run.dir() / "grid.png");
      run.output(run.dir() / "grid.png");
    }
  });
}

// ---------------------------------------------------------------------------
// sweep-lambda
// ---------------------------------------------------------------------------

struct SweepFlags {
  std::string g1, config, lambdas = "0,1,100", out, test_index, oracle = "color-histogram";
  std::int64_t iterations = 0;
  std::uint64_t seed = 0;
  bool parallel = false;
  int grid_rows = 4;
  CLI::Option* seed_opt = nullptr;
};

void cmd_sweep_lambda(const SweepFlags& f, const std::vector<std::string>& argv, std::ostream& out) {
  const auto stage1 = TrainState::load(f.g1);
  RunConfig base;
  if (!f.config.empty()) {
    base = RunConfig::load(f.config);
  } else {
    base = stage1.config;
  }
  base.train.stage = Stage::Stage2;
  if (f.iterations > 0) base.train.max_iterations = f.iterations;
  if (f.seed_opt && f.seed_opt->count()) base.train.seed = f.seed;
  if (!f.test_index.empty()) base.data.test_index = f.test_index;
  const auto lambdas = parse_list(f.lambdas);
  for (double l : lambdas) {
    if (l < 0) throw UsageError("lambda values must be non-negative");
  }
  base.validate();

  Run run("sweep-lambda", argv, f.out);
  run.manifest().seed = base.train.seed;
  run.manifest().config = {{"g1", f.g1}, {"lambdas", lambdas}, {"parallel", f.parallel},
                           {"oracle", f.oracle}, {"base", base.to_json()}};
  guarded(run, [&] {
    const auto data = open_train_set(base);
    std::optional<PairDataset> test;
    if (!base.data.test_index.empty()) test.emplace(open_test_set(base));
    const auto oracle = oracle_by_name(f.oracle);

    struct Point {
      double lambda;
      RunConfig cfg;
      fs::path dir;
      TrainRun result;
    };
    std::vector<Point> points;
    for (double l : lambdas) {
      Point p{l, base, run.dir() / ("lambda_" + format_number(l)), {}};
      p.cfg.loss.lambda = l;
      if (fs::exists(p.dir)) throw UsageError("duplicate lambda " + format_number(l));
      points.push_back(std::move(p));
    }

    std::mutex log_mutex;
    auto train_point = [&](Point& p, TrainState state) {
      RunIO io;
      io.out_dir = p.dir;
      io.on_log = [&, l = p.lambda](const LossRecord& r) {
        std::lock_guard<std::mutex> lock(log_mutex);
        print_record(out, "lambda " + format_number(l) + " ", r);
      };
      const auto start = Clock::now();
      p.cfg.save(p.dir / "config.json");
      p.result = train_stage2(data, stage1, p.cfg, io, std::move(state));
      RunManifest m;
      m.command = "sweep-lambda/train";
      m.argv = argv;
      m.config = p.cfg.to_json();
      m.seed = p.cfg.train.seed;
      m.build_id = build_id();
      m.outputs = {"config.json", "final.ckpt", "loss_log.csv"};
      m.duration_seconds = std::chrono::duration<double>(Clock::now() - start).count();
      m.write(p.dir);
    };

    // Networks are built sequentially: initialization draws from the global generator.
    std::vector<TrainState> states;
    for (auto& p : points) {
      fs::create_directories(p.dir);
      states.push_back(TrainState::fresh_stage2(p.cfg, stage1));
    }
    if (f.parallel) {
      std::vector<std::future<void>> jobs;
      for (std::size_t i = 0; i < points.size(); ++i) {
        jobs.push_back(std::async(std::launch::async, train_point, std::ref(points[i]), std::move(states[i])));
      }
      std::exception_ptr first;
      for (auto& j : jobs) {
        try {
          j.get();
        } catch (...) {
          if (!first) first = std::current_exception();
        }
      }
      if (first) std::rethrow_exception(first);
    } else {
      for (std::size_t i = 0; i < points.size(); ++i) train_point(points[i], std::move(states[i]));
    }

    std::ostringstream table;
    table << "lambda,final_masked_l1,mean_d_real,mean_d_fake";
    if (test) table << ",SSIM,IS,mask-SSIM,mask-IS";
    table << "\n" << std::setprecision(6);
    for (auto& p : points) {
      const auto& ev = p.result.final_eval;
      table << format_number(p.lambda) << ',' << ev.masked_l1 << ',' << ev.mean_d_real << ','
            << ev.mean_d_fake;
      if (test) {
        const auto r = evaluate_variant(stage1, &p.result.state, *test, oracle);
        table << ',' << r.mean_ssim << ',' << r.is.mean << ',' << r.mean_mask_ssim << ',' << r.mask_is.mean;
      }
      table << '\n';
      for (const char* name : {"config.json", "final.ckpt", "loss_log.csv", RunManifest::kFileName}) {
        run.output(p.dir / name);
      }
    }
    write_file_atomic(run.dir() / "sweep.csv", table.str());
    run.output(run.dir() / "sweep.csv");
    out << table.str();

    const PairDataset& shown = test ? *test : data;
    std::vector<BatchSampler::Slot> slots;
    for (std::size_t i = 0; i < std::min<std::size_t>(shown.size(), f.grid_rows); ++i) slots.push_back({i, false});
    const auto batch = make_batch(shown, slots);
    torch::Tensor coarse;
    first_images(stage1, nullptr, batch, &coarse);
    std::vector<std::vector<torch::Tensor>> rows;
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const auto i = static_cast<int64_t>(k);
      const auto sample = shown.sample(slots[k].index, false);
      rows.push_back({batch.condition[i], render_pose(sample.target_pose, sample.target_keypoints),
                      batch.target[i], coarse[i]});
    }
    for (auto& p : points) {
      const auto refined = first_images(stage1, &p.result.state, batch, nullptr);
      for (std::size_t k = 0; k < slots.size(); ++k) rows[k].push_back(refined[static_cast<int64_t>(k)]);
    }
    save_image(tile_grid(rows), run.dir() / "grid.png");
    run.output(run.dir() / "grid.png");
  });
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pose-guided person image generation", "pg2"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(build_id()));

  ToyFlags toy;
  auto* toy_cmd = app.add_subcommand("make-toy-dataset", "Render the synthetic stick-figure dataset");
  toy_cmd->add_option("--out", toy.out, "Output directory")->required();
  toy_cmd->add_option("--seed", toy.seed, "Generator seed");
  toy_cmd->add_option("--identities", toy.spec.num_identities, "Training identities");
  toy_cmd->add_option("--images-per-identity", toy.spec.images_per_identity, "Images per identity");
  toy_cmd->add_option("--test-identities", toy.spec.num_test_identities, "Held-out identities");
  toy_cmd->add_option("--height", toy.spec.image_height, "Image height");
  toy_cmd->add_option("--width", toy.spec.image_width, "Image width");

  TrainFlags train;
  auto* train_cmd = app.add_subcommand("train", "Train stage I, stage II or the one-stage baseline");
  train_cmd->add_option("--stage", train.stage, "1, 2 or one-stage")
      ->check(CLI::IsMember({"1", "2", "one-stage"}));
  train_cmd->add_option("--config", train.config, "Run config (JSON)");
  train_cmd->add_option("--preset", train.preset, "market, fashion or toy when no config is given")
      ->check(CLI::IsMember({"market", "fashion", "toy"}));
  train_cmd->add_option("--resume", train.resume, "Checkpoint to resume from");
  train_cmd->add_option("--g1", train.g1, "Stage-I checkpoint (stage 2)");
  train_cmd->add_option("--out", train.out, "Run directory")->required();
  train_cmd->add_option("--train-index", train.train_index, "Training index file");
  train.seed_opt = train_cmd->add_option("--seed", train.seed, "Training seed");
  train_cmd->add_option("--iterations", train.iterations, "Total iterations");
  train_cmd->add_option("--log-every", train.log_every, "Logging cadence");
  train_cmd->add_option("--checkpoint-every", train.checkpoint_every, "Checkpoint cadence (0: final only)");
  train_cmd->add_option("--lambda", train.lambda, "Masked-L1 weight of the adversarial stages");
  train_cmd->add_flag("--quiet", train.quiet, "Do not print loss lines");

  GenerateFlags gen;
  auto* gen_cmd = app.add_subcommand("generate", "Render a condition image into target poses");
  gen_cmd->add_option("--g1", gen.g1, "Stage-I or one-stage checkpoint")->required();
  gen_cmd->add_option("--g2", gen.g2, "Stage-II checkpoint");
  gen_cmd->add_option("--condition", gen.condition, "Condition image")->required();
  gen_cmd->add_option("--poses", gen.poses, "Keypoint file, one target pose per line")->required();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  EvalFlags ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score trained variants on test pairs");
  eval_cmd->add_option("--g1", ev.g1, "Stage-I checkpoint")->required();
  eval_cmd->add_option("--g2", ev.g2, "Stage-II checkpoint");
  eval_cmd->add_option("--one-stage", ev.one_stage, "One-stage baseline checkpoint");
  eval_cmd->add_option("--test-index", ev.test_index, "Test index (default: from the config)");
  eval_cmd->add_option("--pairs", ev.pairs, "Number of test pairs (0: all)");
  ev.test_seed_opt = eval_cmd->add_option("--test-seed", ev.test_seed, "Test pair sampling seed");
  eval_cmd->add_option("--oracle", ev.oracle, "uniform, color-histogram or torchscript:<path>");
  eval_cmd->add_option("--splits", ev.splits, "Inception Score splits");
  eval_cmd->add_option("--grid-rows", ev.grid_rows, "Pairs shown in grid.png");
  eval_cmd->add_flag("--include-untrained", ev.include_untrained, "Add a freshly initialized G1 row");
  eval_cmd->add_option("--out", ev.out, "Output directory")->required();

  SweepFlags sw;
  auto* sweep_cmd = app.add_subcommand("sweep-lambda", "Train stage II for several lambda values");
  sweep_cmd->add_option("--g1", sw.g1, "Stage-I checkpoint")->required();
  sweep_cmd->add_option("--config", sw.config, "Base stage-II config");
  sweep_cmd->add_option("--lambdas", sw.lambdas, "Comma-separated lambda values");
  sweep_cmd->add_option("--iterations", sw.iterations, "Stage-II iterations per point");
  sw.seed_opt = sweep_cmd->add_option("--seed", sw.seed, "Training seed");
  sweep_cmd->add_option("--test-index", sw.test_index, "Test index for per-lambda metric rows");
  sweep_cmd->add_option("--oracle", sw.oracle, "IS oracle");
  sweep_cmd->add_option("--grid-rows", sw.grid_rows, "Pairs shown in grid.png");
  sweep_cmd->add_flag("--parallel", sw.parallel, "Train lambda points concurrently");
  sweep_cmd->add_option("--out", sw.out, "Output directory")->required();

  std::vector<const char*> c_args{"pg2"};
  for (const auto& a : args) c_args.push_back(a.c_str());
  std::vector<std::string> argv{"pg2"};
  argv.insert(argv.end(), args.begin(), args.end());

  try {
    app.parse(static_cast<int>(c_args.size()), c_args.data());
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "pg2: error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (toy_cmd->parsed()) cmd_make_toy_dataset(toy, argv, out);
    if (train_cmd->parsed()) cmd_train(train, argv, out);
    if (gen_cmd->parsed()) cmd_generate(gen, argv, out);
    if (eval_cmd->parsed()) cmd_evaluate(ev, argv, out);
    if (sweep_cmd->parsed()) cmd_sweep_lambda(sw, argv, out);
  } catch (const UsageError& e) {
    err << "pg2: error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "pg2: numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "pg2: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const c10::Error& e) {
    err << "pg2: data error: " << e.what_without_backtrace() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "pg2: data error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace pg2
