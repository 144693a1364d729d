#include "doctest_torch.hpp"

#include <atomic>
#include <chrono>
#include <thread>

#include "pg2/errors.hpp"
#include "pg2/metrics.hpp"
#include "pg2/oracles.hpp"
#include "support.hpp"

using namespace pg2;

namespace {

torch::Tensor random_image(int64_t c, int64_t h, int64_t w) {
  return torch::rand({c, h, w}, torch::kFloat64) * 2 - 1;
}

ClassifierOracle one_hot_oracle(int classes) {
  ClassifierOracle o;
  o.name = "one-hot";
  o.num_classes = classes;
  o.classify = [classes](const torch::Tensor& images) {
    // class = round of the first pixel, stored there by the test
    auto idx = ((images.select(1, 0).select(1, 0).select(1, 0) + 1.0) * 0.5 * (classes - 1))
                   .round()
                   .to(torch::kLong);
    return torch::one_hot(idx, classes).to(torch::kFloat64);
  };
  return o;
}

torch::Tensor class_images(const std::vector<int>& labels, int classes) {
  auto images = torch::zeros({static_cast<int64_t>(labels.size()), 3, 4, 4}, torch::kFloat64);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    images[i][0][0][0] = labels[i] * 2.0 / (classes - 1) - 1.0;
  }
  return images;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("SSIM matches a per-window brute-force oracle") {
  torch::manual_seed(12);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = random_image(3, 32, 24);
    auto b = (a + 0.3 * random_image(3, 32, 24)).clamp(-1, 1);
    CHECK(std::abs(ssim(a, b) - testing::brute_force_ssim(a, b)) <= 1e-6);
  }
}

TEST_CASE("SSIM of an image with itself is exactly one") {
  torch::manual_seed(13);
  auto a = random_image(3, 40, 20);
  CHECK(ssim(a, a) == 1.0);
  CHECK(ssim_contrast_structure(a, a) == 1.0);
}

TEST_CASE("SSIM closed form for constant images") {
  const double u = 0.2, v = 0.7;  // [0, 1] values
  auto a = torch::full({3, 16, 16}, 2 * u - 1, torch::kFloat64);
  auto b = torch::full({3, 16, 16}, 2 * v - 1, torch::kFloat64);
  const double c1 = 1e-4;
  CHECK(ssim(a, b) == doctest::Approx((2 * u * v + c1) / (u * u + v * v + c1)).epsilon(1e-9));
  CHECK(ssim(a, b) < 1.0);
}

TEST_CASE("contrast-structure term ignores a joint brightness shift") {
  torch::manual_seed(14);
  auto a = random_image(3, 24, 24) * 0.5;
  auto b = random_image(3, 24, 24) * 0.5;
  const double base = ssim_contrast_structure(a, b);
  CHECK(ssim_contrast_structure(a + 0.3, b + 0.3) == doctest::Approx(base).epsilon(1e-9));
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
}

TEST_CASE("SSIM rejects incompatible inputs") {
  CHECK_THROWS_AS(ssim(random_image(3, 16, 16), random_image(3, 16, 15)), DataError);
  CHECK_THROWS_AS(ssim(random_image(3, 8, 8), random_image(3, 8, 8)), DataError);
  CHECK_THROWS_AS(mask_ssim(random_image(3, 16, 16), random_image(3, 16, 16), torch::ones({16, 8})),
                  DataError);
}

TEST_CASE("mask-SSIM degenerate masks") {
  torch::manual_seed(15);
  auto a = random_image(3, 20, 20);
  auto b = random_image(3, 20, 20);
  CHECK(mask_ssim(a, b, torch::ones({20, 20})) == ssim(a, b));
  CHECK(mask_ssim(a, b, torch::zeros({20, 20})) == 1.0);
  // pixels outside the mask do not matter
  auto mask = torch::zeros({20, 20});
  mask.slice(0, 5, 15).slice(1, 5, 15).fill_(1);
  auto b2 = b.clone();
  b2.slice(1, 0, 3).fill_(0.9);
  CHECK(mask_ssim(a, b, mask) == mask_ssim(a, b2, mask));
}

TEST_CASE("apply_mask works in the display domain") {
  auto img = torch::full({3, 2, 2}, 0.5);
  auto mask = torch::tensor({{1.0f, 0.0f}, {0.0f, 1.0f}});
  auto out = apply_mask(img, mask);
  CHECK(out[0][0][0].item<float>() == doctest::Approx(0.5f));
  CHECK(out[0][0][1].item<float>() == -1.0f);
  CHECK(apply_mask(img.unsqueeze(0), mask.unsqueeze(0)).sizes() == torch::IntArrayRef({1, 3, 2, 2}));
  CHECK_THROWS_AS(apply_mask(img, torch::ones({2, 3})), DataError);
}

TEST_CASE("inception score known values") {
  auto images = torch::zeros({100, 3, 4, 4});
  auto uniform = inception_score(images, uniform_oracle(10));
  CHECK(uniform.mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(uniform.std == doctest::Approx(0.0));

  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) labels.push_back(i % 10);
  auto balanced = inception_score(class_images(labels, 10), one_hot_oracle(10));
  CHECK(balanced.mean == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(balanced.std == doctest::Approx(0.0).epsilon(1e-9));

  // one class only: every posterior equals the marginal
  std::vector<int> same(40, 3);
  CHECK(inception_score(class_images(same, 10), one_hot_oracle(10), {4}).mean ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("inception score matches a brute-force oracle per split") {
  torch::manual_seed(16);
  const int n = 37, c = 7, splits = 4;
  auto probs = torch::softmax(torch::randn({n, c}, torch::kFloat64) * 2, 1);
  auto stats = inception_score_from_probs(probs, splits);
  std::vector<double> scores;
  for (int k = 0; k < splits; ++k) {
    std::vector<std::vector<double>> rows;
    for (int i = k * n / splits; i < (k + 1) * n / splits; ++i) {
      std::vector<double> row;
      for (int j = 0; j < c; ++j) row.push_back(probs[i][j].item<double>());
      rows.push_back(row);
    }
    scores.push_back(testing::brute_force_is(rows));
  }
  double mean = 0, var = 0;
  for (double s : scores) mean += s / splits;
  for (double s : scores) var += (s - mean) * (s - mean) / splits;
  CHECK(stats.mean == doctest::Approx(mean).epsilon(1e-10));
  CHECK(stats.std == doctest::Approx(std::sqrt(var)).epsilon(1e-8));
  CHECK(stats.mean >= 1.0);
  CHECK(stats.mean <= c);
}

TEST_CASE("inception score input validation") {
  auto probs = torch::full({5, 2}, 0.5, torch::kFloat64);
  CHECK_THROWS_AS(inception_score_from_probs(probs, 0), UsageError);
  CHECK_THROWS_AS(inception_score_from_probs(probs, 6), UsageError);
  CHECK_NOTHROW(inception_score_from_probs(probs, 5));
  auto bad = probs.clone();
  bad[0][0] = 0.7;
  CHECK_THROWS_AS(inception_score_from_probs(bad, 1), DataError);
  bad[0][0] = -0.5;
  bad[0][1] = 1.5;
  CHECK_THROWS_AS(inception_score_from_probs(bad, 1), DataError);
  bad = probs.clone();
  bad[1][1] = std::nan("");
  CHECK_THROWS_AS(inception_score_from_probs(bad, 1), DataError);
}

TEST_CASE("mask-IS masks before classification") {
  auto images = torch::zeros({6, 3, 4, 4});
  CHECK(mask_is(images, torch::ones({6, 4, 4}), uniform_oracle(), {2}).mean ==
        doctest::Approx(1.0));
  CHECK_THROWS_AS(mask_is(images, torch::ones({5, 4, 4}), uniform_oracle(), {2}), DataError);

  int64_t seen_background = 0;
  ClassifierOracle probe = uniform_oracle(2);
  auto inner = probe.classify;
  probe.classify = [&](const torch::Tensor& x) {
    seen_background += x.eq(-1).sum().item<int64_t>();
    return inner(x);
  };
  mask_is(torch::full({2, 3, 4, 4}, 0.5), torch::zeros({2, 4, 4}), probe, {1});
  CHECK(seen_background == 2 * 3 * 16);
}

TEST_CASE("oracles that are not thread safe are called serially") {
  for (bool safe : {false, true}) {
    std::atomic<int> active{0}, peak{0}, calls{0};
    ClassifierOracle o = uniform_oracle(3);
    o.thread_safe = safe;
    auto inner = o.classify;
    o.classify = [&, inner](const torch::Tensor& x) {
      const int now = ++active;
      int prev = peak.load();
      while (now > prev && !peak.compare_exchange_weak(prev, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      ++calls;
      --active;
      return inner(x);
    };
    IsOptions opt;
    opt.splits = 2;
    opt.batch_size = 2;
    opt.workers = 4;
    auto s = inception_score(torch::zeros({8, 3, 4, 4}), o, opt);
    CHECK(s.mean == doctest::Approx(1.0));
    CHECK(calls == 4);
    if (!safe) CHECK(peak == 1);
  }
}

TEST_CASE("built-in oracles return valid posteriors") {
  torch::manual_seed(17);
  auto images = torch::rand({6, 3, 16, 8}) * 2 - 1;
  auto hist = color_histogram_oracle(10);
  auto p = classify_all(images, hist);
  CHECK(p.sizes() == torch::IntArrayRef({6, 10}));
  CHECK((p.sum(1) - 1).abs().max().item<double>() < 1e-9);
  // grey images carry no hue and fall back to uniform
  auto grey = classify_all(torch::zeros({2, 3, 8, 8}), hist);
  CHECK((grey - 0.1).abs().max().item<double>() < 1e-12);
  CHECK(oracle_by_name("uniform").num_classes == 10);
  CHECK_THROWS_AS(oracle_by_name("nope"), UsageError);
  CHECK_THROWS(oracle_by_name("torchscript:/nonexistent/model.pt"));
}

}  // TEST_SUITE
