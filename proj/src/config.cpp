#include "pg2/config.hpp"

#include <fstream>
#include <set>

#include "pg2/errors.hpp"

namespace pg2 {

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::Stage1:
      return "1";
    case Stage::Stage2:
      return "2";
    case Stage::OneStage:
      return "one-stage";
  }
  return "?";
}

Stage stage_from_string(const std::string& name) {
  if (name == "1") return Stage::Stage1;
  if (name == "2") return Stage::Stage2;
  if (name == "one-stage") return Stage::OneStage;
  throw UsageError("unknown stage '" + name + "' (expected 1, 2 or one-stage)");
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

G2Config RunConfig::g2() const {
  G2Config cfg = G2Config::from_g1(g1);
  if (g2_base_filters > 0) cfg.base_filters = g2_base_filters;
  return cfg;
}

DConfig RunConfig::d() const {
  DConfig cfg;
  cfg.base_filters = d_base_filters;
  cfg.num_layers = d_num_layers;
  cfg.image_height = g1.image_height;
  cfg.image_width = g1.image_width;
  cfg.leaky_slope = d_leaky_slope;
  cfg.init_std = g1.init_std;
  return cfg;
}

void RunConfig::validate() const {
  g1.validate();
  if (heatmap_radius < 0) throw UsageError("heatmap_radius must be non-negative");
  if (train.stage != Stage::Stage1) {
    d().validate();
  }
  if (train.stage == Stage::Stage2) {
    g2().validate();
  }
  loss.validate();
  train.adam.validate();
  if (train.batch_size < 1) throw UsageError("batch_size must be positive");
  if (train.max_iterations < 1) throw UsageError("max_iterations must be positive");
  if (train.checkpoint_every < 0) throw UsageError("checkpoint_every must be >= 0");
  if (train.log_every < 1) throw UsageError("log_every must be positive");
  if (train.d_steps_per_g_step < 1) throw UsageError("d_steps_per_g_step must be positive");
  if (train.max_pairs_per_identity < 0) throw UsageError("max_pairs_per_identity must be >= 0");
  if (morphology.limb_thickness < 0 || morphology.keypoint_radius < 0 ||
      morphology.dilation_radius < 0 || morphology.dilation_iterations < 0 ||
      morphology.closing_radius < 0 || morphology.closing_iterations < 0) {
    throw UsageError("morphology parameters must be non-negative");
  }
}

namespace {

json morphology_json(const MorphologyParams& m) {
  json edges = json::array();
  for (const auto& [a, b] : m.edges) edges.push_back({a, b});
  return {{"edges", edges},
          {"limb_thickness", m.limb_thickness},
          {"keypoint_radius", m.keypoint_radius},
          {"dilation_radius", m.dilation_radius},
          {"dilation_iterations", m.dilation_iterations},
          {"closing_radius", m.closing_radius},
          {"closing_iterations", m.closing_iterations}};
}

// Reads keys from a JSON object, keeping defaults for absent keys and
// rejecting keys nobody asked for.
class Section {
 public:
  Section(const json& root, const std::string& name) : name_(name) {
    if (root.contains(name)) {
      node_ = root.at(name);
      if (!node_.is_object()) throw UsageError("config section '" + name + "' must be an object");
    } else {
      node_ = json::object();
    }
  }

  template <typename T>
  void read(const std::string& key, T& value) {
    seen_.insert(key);
    if (!node_.contains(key)) return;
    try {
      value = node_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw UsageError("config " + name_ + "." + key + ": " + e.what());
    }
  }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    return node_.contains(key) ? &node_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& item : node_.items()) {
      if (!seen_.count(item.key())) {
        throw UsageError("unknown config key " + name_ + "." + item.key());
      }
    }
  }

 private:
  std::string name_;
  json node_;
  std::set<std::string> seen_;
};

}  // namespace

json RunConfig::to_json() const {
  json j;
  j["model"] = {{"num_blocks", g1.num_blocks},
                {"base_filters", g1.base_filters},
                {"bottleneck_dim", g1.bottleneck_dim},
                {"image_height", g1.image_height},
                {"image_width", g1.image_width},
                {"embedding_mode", to_string(g1.embedding_mode)},
                {"init_std", g1.init_std},
                {"heatmap_radius", heatmap_radius},
                {"g2_base_filters", g2_base_filters},
                {"d_base_filters", d_base_filters},
                {"d_num_layers", d_num_layers},
                {"d_leaky_slope", d_leaky_slope}};
  j["loss"] = {{"lambda", loss.lambda}, {"reduction", to_string(loss.reduction)}};
  j["morphology"] = morphology_json(morphology);
  j["train"] = {{"stage", to_string(train.stage)},
                {"learning_rate", train.adam.learning_rate},
                {"beta1", train.adam.beta1},
                {"beta2", train.adam.beta2},
                {"batch_size", train.batch_size},
                {"max_iterations", train.max_iterations},
                {"seed", train.seed},
                {"augment_flip", train.augment_flip},
                {"checkpoint_every", train.checkpoint_every},
                {"log_every", train.log_every},
                {"d_steps_per_g_step", train.d_steps_per_g_step},
                {"finetune_g1", train.finetune_g1},
                {"max_pairs_per_identity", train.max_pairs_per_identity}};
  j["data"] = {{"train_index", data.train_index},
               {"test_index", data.test_index},
               {"test_pairs", data.test_pairs},
               {"test_seed", data.test_seed}};
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw UsageError("run config must be a JSON object");
  for (const auto& item : j.items()) {
    static const std::set<std::string> sections = {"model", "loss", "morphology", "train", "data"};
    if (!sections.count(item.key())) throw UsageError("unknown config section '" + item.key() + "'");
  }
  RunConfig cfg;

  Section model(j, "model");
  model.read("num_blocks", cfg.g1.num_blocks);
  model.read("base_filters", cfg.g1.base_filters);
  model.read("bottleneck_dim", cfg.g1.bottleneck_dim);
  model.read("image_height", cfg.g1.image_height);
  model.read("image_width", cfg.g1.image_width);
  std::string mode = to_string(cfg.g1.embedding_mode);
  model.read("embedding_mode", mode);
  cfg.g1.embedding_mode = embedding_mode_from_string(mode);
  model.read("init_std", cfg.g1.init_std);
  model.read("heatmap_radius", cfg.heatmap_radius);
  model.read("g2_base_filters", cfg.g2_base_filters);
  model.read("d_base_filters", cfg.d_base_filters);
  model.read("d_num_layers", cfg.d_num_layers);
  model.read("d_leaky_slope", cfg.d_leaky_slope);
  model.finish();

  Section loss(j, "loss");
  loss.read("lambda", cfg.loss.lambda);
  std::string reduction = to_string(cfg.loss.reduction);
  loss.read("reduction", reduction);
  cfg.loss.reduction = reduction_from_string(reduction);
  loss.finish();

  Section morph(j, "morphology");
  if (const json* edges = morph.raw("edges")) {
    cfg.morphology.edges.clear();
    for (const auto& e : *edges) {
      if (!e.is_array() || e.size() != 2) throw UsageError("morphology.edges entries must be pairs");
      cfg.morphology.edges.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>());
    }
  }
  morph.read("limb_thickness", cfg.morphology.limb_thickness);
  morph.read("keypoint_radius", cfg.morphology.keypoint_radius);
  morph.read("dilation_radius", cfg.morphology.dilation_radius);
  morph.read("dilation_iterations", cfg.morphology.dilation_iterations);
  morph.read("closing_radius", cfg.morphology.closing_radius);
  morph.read("closing_iterations", cfg.morphology.closing_iterations);
  morph.finish();

  Section train(j, "train");
  std::string stage = to_string(cfg.train.stage);
  train.read("stage", stage);
  cfg.train.stage = stage_from_string(stage);
  train.read("learning_rate", cfg.train.adam.learning_rate);
  train.read("beta1", cfg.train.adam.beta1);
  train.read("beta2", cfg.train.adam.beta2);
  train.read("batch_size", cfg.train.batch_size);
  train.read("max_iterations", cfg.train.max_iterations);
  train.read("seed", cfg.train.seed);
  train.read("augment_flip", cfg.train.augment_flip);
  train.read("checkpoint_every", cfg.train.checkpoint_every);
  train.read("log_every", cfg.train.log_every);
  train.read("d_steps_per_g_step", cfg.train.d_steps_per_g_step);
  train.read("finetune_g1", cfg.train.finetune_g1);
  train.read("max_pairs_per_identity", cfg.train.max_pairs_per_identity);
  train.finish();

  Section data(j, "data");
  data.read("train_index", cfg.data.train_index);
  data.read("test_index", cfg.data.test_index);
  data.read("test_pairs", cfg.data.test_pairs);
  data.read("test_seed", cfg.data.test_seed);
  data.finish();

  for (const auto& [a, b] : cfg.morphology.edges) {
    if (a >= kNumJoints || b >= kNumJoints) throw UsageError("morphology edge joint out of range");
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw UsageError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void RunConfig::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write config " + path.string());
  out << to_json().dump(2) << "\n";
}

std::uint64_t RunConfig::training_hash() const {
  json j = to_json();
  j.erase("data");
  j["train"].erase("max_iterations");
  j["train"].erase("checkpoint_every");
  j["train"].erase("log_every");
  return fnv1a64(j.dump());
}

std::uint64_t RunConfig::model_hash() const {
  const json j = {{"num_blocks", g1.num_blocks},
                  {"base_filters", g1.base_filters},
                  {"bottleneck_dim", g1.bottleneck_dim},
                  {"image_height", g1.image_height},
                  {"image_width", g1.image_width},
                  {"embedding_mode", to_string(g1.embedding_mode)},
                  {"heatmap_radius", heatmap_radius}};
  return fnv1a64(j.dump());
}

RunConfig RunConfig::market_preset() { return RunConfig{}; }

RunConfig RunConfig::fashion_preset() {
  RunConfig cfg;
  cfg.g1.num_blocks = 6;
  cfg.g1.image_height = 256;
  cfg.g1.image_width = 256;
  cfg.train.batch_size = 8;
  cfg.train.max_iterations = 30000;
  return cfg;
}

RunConfig RunConfig::toy_preset() {
  RunConfig cfg;
  cfg.g1.num_blocks = 4;
  cfg.g1.base_filters = 16;
  cfg.g1.bottleneck_dim = 64;
  cfg.g1.image_height = 64;
  cfg.g1.image_width = 32;
  cfg.d_base_filters = 32;
  cfg.loss.lambda = 10.0;
  cfg.train.adam.learning_rate = 2e-4;
  cfg.train.batch_size = 4;
  cfg.train.max_iterations = 1500;
  cfg.train.log_every = 25;
  return cfg;
}

}  // namespace pg2
