#include "pg2/adam.hpp"

#include <cmath>

#include "pg2/errors.hpp"

namespace pg2 {

NamedParameters named_parameters_of(const torch::nn::Module& module, const std::string& prefix) {
  NamedParameters out;
  for (const auto& item : module.named_parameters(/*recurse=*/true)) {
    out.emplace_back(prefix + item.key(), item.value());
  }
  return out;
}

void AdamOptions::validate() const {
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw UsageError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw UsageError("Adam eps must be positive");
}

Adam::Adam(NamedParameters params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  options_.validate();
  for (const auto& [name, p] : params_) {
    first_.push_back(torch::zeros_like(p, torch::MemoryFormat::Contiguous));
    second_.push_back(torch::zeros_like(p, torch::MemoryFormat::Contiguous));
  }
}

void Adam::zero_grad() {
  for (auto& [name, p] : params_) {
    if (p.grad().defined()) {
      p.mutable_grad().reset();
    }
  }
}

void Adam::step() {
  torch::NoGradGuard no_grad;
  ++steps_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].second;
    const auto& g = p.grad();
    if (!g.defined()) {
      continue;
    }
    first_[i].mul_(b1).add_(g, 1.0 - b1);
    second_[i].mul_(b2).addcmul_(g, g, 1.0 - b2);
    auto denom = (second_[i] / bc2).sqrt_().add_(options_.eps);
    p.addcdiv_(first_[i], denom, -options_.learning_rate / bc1);
  }
}

void Adam::save_state(TensorMap& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out[prefix + "m." + params_[i].first] = first_[i];
    out[prefix + "v." + params_[i].first] = second_[i];
  }
  out[prefix + "steps"] = torch::tensor({steps_}, torch::kInt64);
}

void Adam::load_state(const TensorMap& in, const std::string& prefix) {
  auto fetch = [&](const std::string& key) -> const torch::Tensor& {
    auto it = in.find(key);
    if (it == in.end()) {
      throw DataError("checkpoint is missing optimizer tensor '" + key + "'");
    }
    return it->second;
  };
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& m = fetch(prefix + "m." + params_[i].first);
    const auto& v = fetch(prefix + "v." + params_[i].first);
    if (m.sizes() != first_[i].sizes() || v.sizes() != second_[i].sizes()) {
      throw DataError("optimizer moment shape mismatch for '" + params_[i].first + "'");
    }
    first_[i].copy_(m);
    second_[i].copy_(v);
  }
  steps_ = fetch(prefix + "steps").item<std::int64_t>();
}

}  // namespace pg2
