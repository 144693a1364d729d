#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace pg2 {

using TensorMap = std::map<std::string, torch::Tensor>;
using NamedParameters = std::vector<std::pair<std::string, torch::Tensor>>;

NamedParameters named_parameters_of(const torch::nn::Module& module, const std::string& prefix);

struct AdamOptions {
  double learning_rate = 2e-5;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// Bias-corrected Adam over a fixed, named parameter list. Moments are
/// addressable by parameter name so they can be checkpointed.
class Adam {
 public:
  Adam(NamedParameters params, AdamOptions options);

  void zero_grad();
  /// Parameters whose gradient is undefined are left untouched.
  void step();

  std::int64_t steps() const { return steps_; }
  const AdamOptions& options() const { return options_; }
  const NamedParameters& parameters() const { return params_; }

  /// Writes "<prefix>m.<name>", "<prefix>v.<name>" and "<prefix>steps".
  void save_state(TensorMap& out, const std::string& prefix) const;
  void load_state(const TensorMap& in, const std::string& prefix);

 private:
  NamedParameters params_;
  AdamOptions options_;
  std::vector<torch::Tensor> first_;
  std::vector<torch::Tensor> second_;
  std::int64_t steps_ = 0;
};

}  // namespace pg2
