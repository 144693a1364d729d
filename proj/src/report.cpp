#include "pg2/report.hpp"

#include <iomanip>
#include <ostream>

#include "pg2/errors.hpp"

namespace pg2 {

LoadOptions load_options_for(const RunConfig& config) {
  LoadOptions o;
  o.height = config.image_height();
  o.width = config.image_width();
  o.heatmap_radius = config.heatmap_radius;
  o.morphology = config.morphology;
  return o;
}

PairDataset open_train_set(const RunConfig& config) {
  if (config.data.train_index.empty()) throw UsageError("config has no data.train_index");
  auto index = DatasetIndex::load(config.data.train_index);
  auto pairs = build_pairs(index, config.train.max_pairs_per_identity, config.train.seed);
  return PairDataset(std::move(index), std::move(pairs), load_options_for(config));
}

PairDataset open_test_set(const RunConfig& config, const std::string& test_index) {
  const std::string path = test_index.empty() ? config.data.test_index : test_index;
  if (path.empty()) throw UsageError("no test index given and config has no data.test_index");
  auto index = DatasetIndex::load(path);
  auto pairs = sample_pairs(build_pairs(index), config.data.test_pairs, config.data.test_seed);
  return PairDataset(std::move(index), std::move(pairs), load_options_for(config));
}

std::string variant_name(const TrainState& generator, const TrainState* refiner) {
  if (refiner) return "G1+G2+D";
  if (generator.stage == Stage::OneStage) return "G1+D";
  return "G1";
}

VariantReport evaluate_variant(const TrainState& generator, const TrainState* refiner,
                               const PairDataset& data, const ClassifierOracle& oracle,
                               IsOptions is_options) {
  if (data.empty()) throw DataError("evaluation set has no pairs");
  if (data.options().height != generator.config.image_height() ||
      data.options().width != generator.config.image_width()) {
    throw DataError("evaluation set resolution does not match the model");
  }
  if (refiner && refiner->config.model_hash() != generator.config.model_hash()) {
    throw DataError("stage-II state was trained on a different stage-I geometry");
  }
  torch::NoGradGuard no_grad;
  VariantReport report;
  report.model = variant_name(generator, refiner);
  std::vector<torch::Tensor> images, masks;
  const std::size_t bs = 16;
  for (std::size_t lo = 0; lo < data.size(); lo += bs) {
    std::vector<BatchSampler::Slot> slots;
    for (std::size_t i = lo; i < std::min(data.size(), lo + bs); ++i) slots.push_back({i, false});
    const auto batch = make_batch(data, slots);
    auto out = G1(generator.g1)(batch.condition, batch.pose);
    if (refiner) out = G2(refiner->g2)(batch.condition, out).refined;
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const auto i = static_cast<int64_t>(k);
      PairScores s;
      s.pair = slots[k].index;
      s.identity = data.index().images[data.pairs()[s.pair].target].identity;
      s.ssim = ssim(out[i], batch.target[i]);
      s.mask_ssim = mask_ssim(out[i], batch.target[i], batch.mask[i]);
      report.mean_ssim += s.ssim;
      report.mean_mask_ssim += s.mask_ssim;
      report.pairs.push_back(std::move(s));
    }
    images.push_back(out);
    masks.push_back(batch.mask);
  }
  const auto n = static_cast<double>(report.pairs.size());
  report.mean_ssim /= n;
  report.mean_mask_ssim /= n;
  auto all_images = torch::cat(images);
  auto all_masks = torch::cat(masks);
  is_options.splits = std::min<int>(is_options.splits, static_cast<int>(all_images.size(0)));
  report.is = inception_score(all_images, oracle, is_options);
  report.mask_is = mask_is(all_images, all_masks, oracle, is_options);
  return report;
}

void write_table(std::ostream& out, const std::vector<VariantReport>& reports) {
  out << "model,SSIM,IS,IS_std,mask-SSIM,mask-IS,mask-IS_std,pairs\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& r : reports) {
    out << r.model << ',' << r.mean_ssim << ',' << r.is.mean << ',' << r.is.std << ','
        << r.mean_mask_ssim << ',' << r.mask_is.mean << ',' << r.mask_is.std << ',' << r.pairs.size()
        << '\n';
  }
  out.unsetf(std::ios::fixed);
}

void write_pair_scores(std::ostream& out, const std::vector<VariantReport>& reports) {
  out << "model,pair,identity,SSIM,mask-SSIM\n";
  out << std::setprecision(8);
  for (const auto& r : reports) {
    for (const auto& p : r.pairs) {
      out << r.model << ',' << p.pair << ',' << p.identity << ',' << p.ssim << ',' << p.mask_ssim << '\n';
    }
  }
}

}  // namespace pg2
