#include "doctest_torch.hpp"

#include <cmath>
#include <fstream>

#include "pg2/adam.hpp"
#include "pg2/checkpoint.hpp"
#include "pg2/config.hpp"
#include "pg2/errors.hpp"
#include "support.hpp"

using namespace pg2;

TEST_SUITE("state") {

TEST_CASE("Adam matches a hand-computed update") {
  // f(x, y) = 3x + y^2 at (1, -2): gradient (3, -4).
  auto x = torch::tensor({1.0, -2.0}, torch::kFloat64).requires_grad_();
  AdamOptions opt;
  opt.learning_rate = 0.1;
  Adam adam({{"x", x}}, opt);
  double m[2] = {0, 0}, v[2] = {0, 0}, ref[2] = {1.0, -2.0};
  for (int t = 1; t <= 3; ++t) {
    adam.zero_grad();
    auto f = 3 * x[0] + x[1] * x[1];
    f.backward();
    adam.step();
    const double g[2] = {3.0, 2.0 * ref[1]};
    for (int i = 0; i < 2; ++i) {
      m[i] = opt.beta1 * m[i] + (1 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1 - opt.beta2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(opt.beta1, t));
      const double vh = v[i] / (1 - std::pow(opt.beta2, t));
      ref[i] -= opt.learning_rate * mh / (std::sqrt(vh) + opt.eps);
    }
    CHECK(std::abs(x[0].item<double>() - ref[0]) <= 1e-10);
    CHECK(std::abs(x[1].item<double>() - ref[1]) <= 1e-10);
  }
  CHECK(adam.steps() == 3);
}

TEST_CASE("Adam state round-trips through a tensor map") {
  auto w = torch::randn({3, 2}, torch::kFloat64).requires_grad_();
  Adam a({{"w", w}}, AdamOptions{});
  (w * w).sum().backward();
  a.step();
  TensorMap saved;
  a.save_state(saved, "opt.");
  CHECK(saved.count("opt.m.w") == 1);
  CHECK(saved.count("opt.v.w") == 1);
  Adam b({{"w", w}}, AdamOptions{});
  b.load_state(saved, "opt.");
  CHECK(b.steps() == 1);
  TensorMap again;
  b.save_state(again, "opt.");
  CHECK(torch::equal(again["opt.m.w"], saved["opt.m.w"]));
  CHECK_THROWS_AS(b.load_state(TensorMap{}, "opt."), DataError);
}

TEST_CASE("Adam option validation") {
  AdamOptions o;
  o.learning_rate = 0;
  CHECK_THROWS_AS(o.validate(), UsageError);
  o = AdamOptions{};
  o.beta1 = 1.0;
  CHECK_THROWS_AS(o.validate(), UsageError);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  auto dir = testing::scratch_dir("ckpt");
  Checkpoint c;
  c.kind = "stage1";
  c.config = RunConfig::toy_preset().to_json();
  c.training_hash = 0x1234abcdULL;
  c.model_hash = 42;
  c.iteration = 17;
  c.tensors["a"] = torch::randn({4, 5});
  c.tensors["b"] = torch::randn({3}, torch::kFloat64);
  c.tensors["c"] = torch::tensor({7}, torch::kInt64);
  c.tensors["d"] = torch::randint(0, 255, {2, 2}, torch::kUInt8);
  save_checkpoint(c, dir / "x.ckpt");
  CHECK_FALSE(std::filesystem::exists(dir / "x.ckpt.tmp"));
  auto r = load_checkpoint(dir / "x.ckpt");
  CHECK(r.kind == c.kind);
  CHECK(r.config == c.config);
  CHECK(r.training_hash == c.training_hash);
  CHECK(r.model_hash == c.model_hash);
  CHECK(r.iteration == 17);
  REQUIRE(r.tensors.size() == 4);
  for (const auto& [name, t] : c.tensors) {
    CHECK(r.tensors[name].dtype() == t.dtype());
    CHECK(torch::equal(r.tensors[name], t));
  }
}

TEST_CASE("corrupt checkpoints are rejected") {
  auto dir = testing::scratch_dir("ckpt_bad");
  Checkpoint c;
  c.kind = "stage1";
  c.config = json::object();
  c.tensors["a"] = torch::ones({8});
  save_checkpoint(c, dir / "x.ckpt");
  {
    std::fstream f(dir / "x.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "x.ckpt"), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), DataError);
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint at all";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), DataError);
}

TEST_CASE("config JSON round trip and validation") {
  auto cfg = RunConfig::fashion_preset();
  cfg.g1.embedding_mode = EmbeddingMode::Coordinate;
  cfg.morphology.dilation_radius = 3;
  cfg.data.train_index = "x/index.csv";
  auto back = RunConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.training_hash() == cfg.training_hash());

  json j = cfg.to_json();
  j["train"]["bogus"] = 1;
  CHECK_THROWS_AS(RunConfig::from_json(j), UsageError);
  j = cfg.to_json();
  j["extra"] = json::object();
  CHECK_THROWS_AS(RunConfig::from_json(j), UsageError);

  RunConfig bad;
  bad.train.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = RunConfig{};
  bad.g1.image_height = 100;
  CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("full-scale presets") {
  auto market = RunConfig::market_preset();
  CHECK(market.g1.num_blocks == 5);
  CHECK(market.train.batch_size == 16);
  CHECK(market.train.max_iterations == 22000);
  CHECK(market.train.adam.learning_rate == 2e-5);
  CHECK(market.train.adam.beta1 == 0.5);
  CHECK(market.train.adam.beta2 == 0.999);
  CHECK(market.heatmap_radius == 4);
  CHECK_NOTHROW(market.validate());
  auto fashion = RunConfig::fashion_preset();
  CHECK(fashion.g1.num_blocks == 6);
  CHECK(fashion.train.batch_size == 8);
  CHECK(fashion.train.max_iterations == 30000);
  CHECK_NOTHROW(fashion.validate());
}

TEST_CASE("training hash ignores run length but not numerics") {
  auto a = RunConfig::toy_preset();
  auto b = a;
  b.train.max_iterations = 99;
  b.train.log_every = 3;
  b.data.train_index = "elsewhere.csv";
  CHECK(a.training_hash() == b.training_hash());
  b.loss.lambda = 1.0;
  CHECK(a.training_hash() != b.training_hash());
  CHECK(a.model_hash() == b.model_hash());
  b.g1.base_filters = 8;
  CHECK(a.model_hash() != b.model_hash());
}

}  // TEST_SUITE
