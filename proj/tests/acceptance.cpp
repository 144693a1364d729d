// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <torch/torch.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pg2/config.hpp"
#include "pg2/losses.hpp"
#include "pg2/metrics.hpp"
#include "pg2/nets.hpp"
#include "pg2/oracles.hpp"
#include "pg2/pose_codec.hpp"
#include "pg2/report.hpp"
#include "pg2/toy_dataset.hpp"
#include "pg2/trainer.hpp"
#include "support.hpp"

using namespace pg2;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-12); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

bool same_parameters(const TensorMap& a, const TensorMap& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [k, v] : a) {
    if (!b.count(k) || !torch::equal(v, b.at(k))) return false;
  }
  return true;
}

PoseBatch random_pose(int64_t b, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<torch::Tensor> heat, coords;
  for (int64_t i = 0; i < b; ++i) {
    auto kp = testing::random_keypoints(rng, h, w, 0.8);
    heat.push_back(encode_heatmaps(kp, h, w).channels);
    coords.push_back(keypoint_coordinates(kp, h, w));
  }
  return {torch::stack(heat), torch::stack(coords)};
}

std::vector<torch::Tensor> double_parameters(torch::nn::Module& m) {
  m.to(torch::kFloat64);
  return m.parameters();
}

// ---------------------------------------------------------------------------

Outcome heatmap_geometry() {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  const int h = 128, w = 64;
  int checked = 0, mismatches = 0;
  while (checked < 100) {
    auto kp = testing::random_keypoints(rng, h, w, 0.8);
    auto pose = encode_heatmaps(kp, h, w, 4);
    auto counts = pose.channels.sum({1, 2});
    for (std::size_t k = 0; k < kNumJoints && checked < 100; ++k) {
      if (!kp[k].visible) continue;
      mismatches += counts[k].item<int64_t>() != testing::lattice_disk_count(kp[k].x, kp[k].y, 4, h, w);
      ++checked;
    }
  }
  KeypointSet centered;
  centered.points[0] = Keypoint{32, 32, true};
  const auto ones = encode_heatmaps(centered, 64, 64, 4).channels[0].sum().item<int64_t>();
  const double t = seconds_since(start);
  return {mismatches == 0 && ones == 49 && t < 1.0,
          std::to_string(checked) + " keypoints, " + std::to_string(mismatches) +
              " mismatches; centered disk " + std::to_string(ones) + " ones; " + fmt("%.3f s", t)};
}

Outcome loss_analytics() {
  const double ln2 = std::log(2.0);
  const double e1 = std::abs(bce(0.5, 1) - ln2);
  const double e2 = std::abs(d_loss(0.5, 0.5) - 2 * ln2);
  const double l1 = pose_mask_l1(torch::full({1, 1, 1}, 0.5, torch::kFloat64),
                                 torch::zeros({1, 1, 1}, torch::kFloat64),
                                 torch::ones({1, 1}, torch::kFloat64))
                        .item<double>();
  const double e3 = std::abs(l1 - 1.0);
  const double worst = std::max({e1, e2, e3});
  return {worst <= 1e-6, "bce " + fmt("%.3g", e1) + ", d_loss " + fmt("%.3g", e2) +
                             ", masked L1 " + fmt("%.3g", e3) + " abs error"};
}

Outcome gradient_checks() {
  const auto start = Clock::now();
  torch::manual_seed(31);
  const int h = 32, w = 16, b = 2, coords = 60;
  std::ostringstream detail;
  double worst = 0.0;
  int fewest = coords;
  auto record = [&](const char* name, const testing::GradCheck& g) {
    worst = std::max(worst, g.max_rel_error);
    fewest = std::min(fewest, g.checked);
    detail << name << " " << fmt("%.2e", g.max_rel_error) << " (" << g.checked << "), ";
  };

  {
    auto gen = (torch::rand({b, 3, h, w}, torch::kFloat64) * 2 - 1).requires_grad_();
    auto target = torch::rand({b, 3, h, w}, torch::kFloat64) * 2 - 1;
    auto mask = (torch::rand({b, h, w}) > 0.5).to(torch::kFloat64);
    record("pose_mask_l1", testing::check_gradients({gen}, [&] { return pose_mask_l1(gen, target, mask); },
                                                    coords, 1));
  }

  G1Config gc;
  gc.num_blocks = 4;
  gc.base_filters = 4;
  gc.bottleneck_dim = 8;
  gc.image_height = h;
  gc.image_width = w;
  gc.init_std = 0.2;
  auto cond = torch::rand({b, 3, h, w}, torch::kFloat64) * 2 - 1;
  auto pose = random_pose(b, h, w, 3);
  pose.heatmaps = pose.heatmaps.to(torch::kFloat64);
  pose.coordinates = pose.coordinates.to(torch::kFloat64);
  {
    G1 g1(gc);
    auto params = double_parameters(*g1);
    auto proj = torch::randn({b, 3, h, w}, torch::kFloat64);
    record("G1", testing::check_gradients(params, [&] { return (g1(cond, pose) * proj).sum(); }, coords, 2));
  }
  {
    auto g2cfg = G2Config::from_g1(gc);
    g2cfg.init_std = 0.2;
    G2 g2(g2cfg);
    auto params = double_parameters(*g2);
    auto coarse = torch::rand({b, 3, h, w}, torch::kFloat64) * 1.6 - 0.8;
    auto pd = torch::randn({b, 3, h, w}, torch::kFloat64);
    auto pr = torch::randn({b, 3, h, w}, torch::kFloat64);
    record("G2", testing::check_gradients(params, [&] {
             auto r = g2(cond, coarse);
             return (r.diff * pd).sum() + (r.refined * pr).sum();
           }, coords, 3));
  }
  {
    DConfig dc;
    dc.base_filters = 4;
    dc.num_layers = 4;
    dc.image_height = h;
    dc.image_width = w;
    dc.init_std = 0.2;
    Discriminator d(dc);
    auto params = double_parameters(*d);
    auto cand = torch::rand({b, 3, h, w}, torch::kFloat64) * 2 - 1;
    record("D", testing::check_gradients(params, [&] { return d(cond, cand).sum(); }, coords, 4));
  }
  const double t = seconds_since(start);
  detail << "max rel error " << fmt("%.2e", worst) << "; " << fmt("%.1f s", t);
  return {worst <= 1e-3 && fewest >= 50 && t < 120.0, detail.str()};
}

Outcome ssim_oracle() {
  torch::manual_seed(41);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    auto a = torch::rand({3, 64, 64}, torch::kFloat64) * 2 - 1;
    auto b = (a + (torch::rand({3, 64, 64}, torch::kFloat64) * 2 - 1) * (0.05 * (i + 1))).clamp(-1, 1);
    worst = std::max(worst, std::abs(ssim(a, b) - testing::brute_force_ssim(a, b)));
  }
  auto a = torch::rand({3, 64, 64}, torch::kFloat64) * 2 - 1;
  const double self = ssim(a, a);
  return {worst <= 1e-6 && self == 1.0,
          "20 pairs, max |module - brute force| " + fmt("%.2e", worst) + "; ssim(a,a) " + fmt("%.17g", self)};
}

Outcome is_analytics() {
  auto images = torch::zeros({100, 3, 8, 8});
  IsOptions one_split;
  one_split.splits = 1;
  const double uniform = inception_score(images, uniform_oracle(10), one_split).mean;
  auto probs = torch::zeros({100, 10}, torch::kFloat64);
  for (int i = 0; i < 100; ++i) probs[i][i % 10] = 1.0;
  const double balanced = inception_score_from_probs(probs, 1).mean;
  return {std::abs(uniform - 1.0) <= 1e-6 && std::abs(balanced - 10.0) <= 1e-6,
          "uniform " + fmt("%.9f", uniform) + ", balanced one-hot " + fmt("%.9f", balanced)};
}

Outcome architecture_audit() {
  torch::NoGradGuard no_grad;
  torch::manual_seed(51);
  std::ostringstream detail;
  bool ok = true;
  for (auto [n, h, w] : {std::tuple{5, 128, 64}, std::tuple{6, 256, 256}}) {
    G1Config c;
    c.num_blocks = n;
    c.image_height = h;
    c.image_width = w;
    G1 g1(c);
    G2 g2(G2Config::from_g1(c));
    auto x = torch::rand({1, 3, h, w}) * 2 - 1;
    auto pose = random_pose(1, h, w, 5);
    auto coarse = g1(x, pose);
    const bool deterministic = torch::equal(coarse, g1(x, pose));
    auto refined = g2(x, coarse).refined;
    int blocks = 0, fc = 0;
    for (const auto& p : g2->named_parameters()) {
      if (p.key().rfind("encoder.block", 0) == 0 && p.key().find(".conv_a.weight") != std::string::npos) ++blocks;
      if (p.value().dim() == 2 || p.key().find("fc") != std::string::npos) ++fc;
    }
    const bool shapes = coarse.sizes() == x.sizes() && refined.sizes() == x.sizes();
    ok = ok && shapes && deterministic && blocks == n - 2 && fc == 0;
    detail << "N=" << n << " " << h << "x" << w << ": shapes " << (shapes ? "ok" : "bad") << ", G2 blocks "
           << blocks << ", G2 fc params " << fc << ", deterministic " << (deterministic ? "yes" : "no")
           << "; ";
  }
  return {ok, detail.str()};
}

// The toy pipeline shared by criteria 7-10.
struct Toy {
  ToyDataset dataset;
  RunConfig config;
  std::optional<PairDataset> train;
  std::optional<TrainState> stage1;
  std::optional<TrainState> stage2;
};

Toy& toy() {
  static Toy t = [] {
    Toy x;
    ToySpec spec;  // 4 identities x 4 images, 2 held-out identities, 64x32
    spec.seed = 7;
    x.dataset = make_toy_dataset(spec, testing::scratch_dir("acceptance_toy"));
    x.config = RunConfig::toy_preset();
    x.train.emplace(x.dataset.train, build_pairs(x.dataset.train), load_options_for(x.config));
    return x;
  }();
  return t;
}

RunConfig stage2_config(double lambda) {
  auto cfg = toy().config;
  cfg.train.stage = Stage::Stage2;
  cfg.train.max_iterations = 500;
  cfg.train.log_every = 1;
  cfg.loss.lambda = lambda;
  return cfg;
}

Outcome toy_stage1() {
  auto& t = toy();
  const auto start = Clock::now();
  auto run = train_stage1(*t.train, t.config);
  const double secs = seconds_since(start);
  const double first = run.log.front().masked_l1;
  const double last = run.log.back().masked_l1;
  const double final_eval = run.final_eval.masked_l1;
  t.stage1.emplace(std::move(run.state));
  return {final_eval <= 0.5 * first && t.config.train.max_iterations <= 2000 && secs <= 900.0,
          std::to_string(t.train->size()) + " pairs, batch " + std::to_string(t.config.train.batch_size) + ", " +
              std::to_string(t.config.train.max_iterations) + " iterations: iteration-1 " + fmt("%.4f", first) +
              ", final training-set " + fmt("%.4f", final_eval) + " (" + fmt("%.1f%%", 100 * final_eval / first) +
              "), last batch " + fmt("%.4f", last) + "; " + fmt("%.1f s", secs)};
}

Outcome toy_stage2() {
  auto& t = toy();
  if (!t.stage1) return {false, "stage-I run unavailable"};
  const auto before = t.stage1->g1_parameters();
  const auto start = Clock::now();
  auto run = train_stage2(*t.train, *t.stage1, stage2_config(t.config.loss.lambda));
  const double secs = seconds_since(start);
  bool finite = run.log.size() == 500;
  for (const auto& r : run.log) {
    finite = finite && std::isfinite(r.d_loss) && std::isfinite(r.g_adv) && std::isfinite(r.masked_l1);
  }
  int identity_ok = 0;
  for (const auto& s : run.samples) {
    identity_ok += torch::equal(s.refined, torch::clamp(s.coarse + s.diff, -1.0, 1.0));
  }
  const bool frozen = same_parameters(before, run.state.g1_parameters());
  const auto& ev = run.final_eval;
  const bool ok = finite && ev.mean_d_real > ev.mean_d_fake &&
                  identity_ok == static_cast<int>(run.samples.size()) && run.samples.size() == 500 && frozen;
  std::string detail = std::to_string(run.log.size()) + " iterations, losses " +
                       (finite ? "finite" : "NOT finite") + "; mean D(real) " + fmt("%.4f", ev.mean_d_real) +
                       ", mean D(fake) " + fmt("%.4f", ev.mean_d_fake) + "; refinement identity " +
                       std::to_string(identity_ok) + "/" + std::to_string(run.samples.size()) +
                       " samples; G1 " + (frozen ? "bit-identical" : "CHANGED") + "; " + fmt("%.1f s", secs);
  t.stage2.emplace(std::move(run.state));
  return {ok, detail};
}

Outcome lambda_sweep() {
  auto& t = toy();
  if (!t.stage1) return {false, "stage-I run unavailable"};
  std::vector<double> l1;
  std::ostringstream detail;
  const auto start = Clock::now();
  for (double lambda : {0.0, 1.0, 100.0}) {
    auto run = train_stage2(*t.train, *t.stage1, stage2_config(lambda));
    l1.push_back(run.final_eval.masked_l1);
    detail << "lambda " << lambda << ": " << fmt("%.4f", l1.back()) << "; ";
  }
  detail << fmt("%.1f s", seconds_since(start));
  return {l1[0] >= l1[1] && l1[1] >= l1[2], detail.str()};
}

Outcome metric_discrimination() {
  auto& t = toy();
  if (!t.stage1 || !t.stage2) return {false, "trained states unavailable"};
  PairDataset test(t.dataset.test, build_pairs(t.dataset.test), load_options_for(t.config));
  auto untrained_cfg = t.config;
  untrained_cfg.train.seed = 1234;
  auto untrained = TrainState::fresh(untrained_cfg);
  const auto oracle = color_histogram_oracle();
  IsOptions is;
  is.splits = 4;
  const auto base = evaluate_variant(untrained, nullptr, test, oracle, is);
  const auto trained = evaluate_variant(*t.stage1, &*t.stage2, test, oracle, is);
  const double gap = trained.mean_mask_ssim - base.mean_mask_ssim;
  return {gap >= 0.05, std::to_string(test.size()) + " held-out pairs: mask-SSIM untrained " +
                           fmt("%.4f", base.mean_mask_ssim) + ", " + trained.model + " " +
                           fmt("%.4f", trained.mean_mask_ssim) + " (gap " + fmt("%.4f", gap) + ")"};
}

Outcome determinism() {
  auto& t = toy();
  if (!t.stage1) return {false, "stage-I run unavailable"};
  auto cfg = t.config;
  cfg.train.max_iterations = 1;
  RunIO io;
  io.final_evaluation = false;
  const double s1a = train_stage1(*t.train, cfg, io).log[0].masked_l1;
  const double s1b = train_stage1(*t.train, cfg, io).log[0].masked_l1;
  auto cfg2 = stage2_config(t.config.loss.lambda);
  cfg2.train.max_iterations = 1;
  auto r2a = train_stage2(*t.train, *t.stage1, cfg2, io).log[0];
  auto r2b = train_stage2(*t.train, *t.stage1, cfg2, io).log[0];
  const double seed_err = std::max({rel_diff(s1a, s1b), rel_diff(r2a.d_loss, r2b.d_loss),
                                    rel_diff(r2a.g_adv, r2b.g_adv), rel_diff(r2a.masked_l1, r2b.masked_l1)});

  const auto dir = testing::scratch_dir("acceptance_ckpt");
  cfg.train.max_iterations = 3;
  auto s1 = train_stage1(*t.train, cfg, io).state;
  s1.save(dir / "s1.ckpt");
  auto s1_loaded = TrainState::load(dir / "s1.ckpt");
  const double c1 = rel_diff(Stage1Trainer(*t.train, s1_loaded).step().masked_l1,
                             Stage1Trainer(*t.train, s1).step().masked_l1);
  cfg2.train.max_iterations = 3;
  auto s2 = train_stage2(*t.train, *t.stage1, cfg2, io).state;
  s2.save(dir / "s2.ckpt");
  auto s2_loaded = TrainState::load(dir / "s2.ckpt");
  auto a = AdversarialTrainer(*t.train, s2).step();
  auto b = AdversarialTrainer(*t.train, s2_loaded).step();
  const double c2 = std::max({rel_diff(b.d_loss, a.d_loss), rel_diff(b.g_adv, a.g_adv),
                              rel_diff(b.masked_l1, a.masked_l1)});
  const double ckpt_err = std::max(c1, c2);
  return {seed_err <= 1e-6 && ckpt_err <= 1e-6,
          "same-seed iteration-1 rel diff " + fmt("%.2e", seed_err) + " (stage I and II); checkpoint round-trip "
          "next-step rel diff " + fmt("%.2e", ckpt_err)};
}

}  // namespace

int main() {
  torch::set_num_threads(1);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"heatmap geometry", heatmap_geometry},
      {"loss analytics", loss_analytics},
      {"gradient checks", gradient_checks},
      {"SSIM oracle equivalence", ssim_oracle},
      {"IS analytics", is_analytics},
      {"architecture audit", architecture_audit},
      {"toy stage I", toy_stage1},
      {"toy stage II", toy_stage2},
      {"lambda sweep", lambda_sweep},
      {"metric discrimination", metric_discrimination},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
