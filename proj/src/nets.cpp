#include "pg2/nets.hpp"

#include <string>

#include "pg2/errors.hpp"
#include "pg2/keypoints.hpp"

namespace pg2 {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

std::string to_string(EmbeddingMode mode) {
  switch (mode) {
    case EmbeddingMode::HeatmapConcat:
      return "heatmap-concat";
    case EmbeddingMode::Coordinate:
      return "CE";
    case EmbeddingMode::HeatmapEncoder:
      return "HME";
  }
  return "?";
}

EmbeddingMode embedding_mode_from_string(const std::string& name) {
  if (name == "heatmap-concat") return EmbeddingMode::HeatmapConcat;
  if (name == "CE" || name == "ce") return EmbeddingMode::Coordinate;
  if (name == "HME" || name == "hme") return EmbeddingMode::HeatmapEncoder;
  throw UsageError("unknown embedding mode '" + name + "' (expected heatmap-concat, CE or HME)");
}

namespace {

void require_divisible(int height, int width, int levels, const std::string& what) {
  const int factor = 1 << levels;
  if (height <= 0 || width <= 0 || height % factor != 0 || width % factor != 0) {
    throw UsageError(what + ": image " + std::to_string(height) + "x" + std::to_string(width) +
                     " must be divisible by " + std::to_string(factor));
  }
}

void require_image_batch(const torch::Tensor& t, long channels, long height, long width,
                         const std::string& what) {
  if (t.dim() != 4 || t.size(1) != channels || t.size(2) != height || t.size(3) != width) {
    throw DataError(what + ": expected [B, " + std::to_string(channels) + ", " +
                    std::to_string(height) + ", " + std::to_string(width) + "], got " +
                    std::string(t.sizes().vec().empty() ? "scalar" : c10::str(t.sizes())));
  }
}

nn::Conv2d conv3x3(int in, int out, int stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

}  // namespace

int G1Config::input_channels() const {
  return embedding_mode == EmbeddingMode::HeatmapConcat ? 3 + static_cast<int>(kNumJoints) : 3;
}

void G1Config::validate() const {
  if (num_blocks < 2) throw UsageError("G1 needs at least 2 blocks");
  if (base_filters < 1) throw UsageError("G1 base_filters must be >= 1");
  if (bottleneck_dim < 1) throw UsageError("G1 bottleneck_dim must be >= 1");
  require_divisible(image_height, image_width, num_blocks - 1, "G1");
}

G2Config G2Config::from_g1(const G1Config& g1) {
  G2Config cfg;
  cfg.num_blocks = g1.num_blocks - 2;
  cfg.base_filters = g1.base_filters;
  cfg.image_height = g1.image_height;
  cfg.image_width = g1.image_width;
  cfg.init_std = g1.init_std;
  return cfg;
}

void G2Config::validate() const {
  if (num_blocks < 1) throw UsageError("G2 needs at least 1 block");
  if (base_filters < 1) throw UsageError("G2 base_filters must be >= 1");
  require_divisible(image_height, image_width, num_blocks - 1, "G2");
}

void DConfig::validate() const {
  if (num_layers < 1) throw UsageError("D needs at least 1 layer");
  if (base_filters < 1) throw UsageError("D base_filters must be >= 1");
  require_divisible(image_height, image_width, num_layers, "D");
}

ResidualBlockImpl::ResidualBlockImpl(int channels)
    : conv_a_(register_module("conv_a", conv3x3(channels, channels))),
      conv_b_(register_module("conv_b", conv3x3(channels, channels))) {}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  return x + torch::relu(conv_b_(torch::relu(conv_a_(x))));
}

EncoderImpl::EncoderImpl(int in_channels, int num_blocks, int base_filters)
    : num_blocks_(num_blocks) {
  stem_ = register_module("stem", conv3x3(in_channels, base_filters));
  for (int b = 1; b <= num_blocks; ++b) {
    blocks_.push_back(
        register_module("block" + std::to_string(b), ResidualBlock(b * base_filters)));
    if (b < num_blocks) {
      downs_.push_back(register_module("down" + std::to_string(b),
                                       conv3x3(b * base_filters, (b + 1) * base_filters, 2)));
    }
  }
}

EncoderOutput EncoderImpl::forward(const torch::Tensor& input, ForwardProbe* probe) {
  EncoderOutput out;
  auto x = torch::relu(stem_(input));
  for (int b = 1; b <= num_blocks_; ++b) {
    if (probe) probe->encoder_block_inputs.push_back({x.size(2), x.size(3)});
    x = blocks_[b - 1](x);
    out.skips.push_back(x);
    if (b < num_blocks_) {
      x = torch::relu(downs_[b - 1](x));
    }
  }
  out.bottom = x;
  return out;
}

DecoderImpl::DecoderImpl(int num_blocks, int base_filters, int out_channels)
    : num_blocks_(num_blocks) {
  for (int b = 1; b <= num_blocks; ++b) {
    blocks_.push_back(
        register_module("block" + std::to_string(b), ResidualBlock(2 * b * base_filters)));
    if (b > 1) {
      ups_.push_back(register_module("up" + std::to_string(b),
                                     conv3x3(2 * b * base_filters, (b - 1) * base_filters)));
    }
  }
  out_conv_ = register_module("out_conv", conv3x3(2 * base_filters, out_channels));
}

torch::Tensor DecoderImpl::forward(torch::Tensor x, const std::vector<torch::Tensor>& skips,
                                   ForwardProbe* probe) {
  const bool ablate = probe && probe->ablate_skips;
  for (int b = num_blocks_; b >= 1; --b) {
    const auto& skip = skips[b - 1];
    x = torch::cat({x, ablate ? torch::zeros_like(skip) : skip}, 1);
    x = blocks_[b - 1](x);
    if (probe) probe->decoder_block_outputs.push_back({x.size(2), x.size(3)});
    if (b > 1) {
      x = F::interpolate(x, F::InterpolateFuncOptions()
                                .scale_factor(std::vector<double>{2.0, 2.0})
                                .mode(torch::kNearest));
      x = torch::relu(ups_[b - 2](x));
    }
  }
  return out_conv_(x);
}

G1Impl::G1Impl(G1Config cfg) : cfg_(cfg) {
  cfg_.validate();
  const int n = cfg_.num_blocks;
  const int bottom_channels = cfg_.block_filters(n);
  const int bottom_size = bottom_channels * cfg_.bottom_height() * cfg_.bottom_width();

  encoder_ = register_module("encoder", Encoder(cfg_.input_channels(), n, cfg_.base_filters));
  bottleneck_fc_ = register_module("bottleneck_fc", nn::Linear(bottom_size, cfg_.bottleneck_dim));

  int fused_dim = cfg_.bottleneck_dim;
  const int pose_dim = cfg_.bottleneck_dim;
  if (cfg_.embedding_mode == EmbeddingMode::Coordinate) {
    ce_fc1_ = register_module("ce_fc1", nn::Linear(2 * static_cast<int>(kNumJoints), pose_dim));
    ce_fc2_ = register_module("ce_fc2", nn::Linear(pose_dim, pose_dim));
    fused_dim += pose_dim;
  } else if (cfg_.embedding_mode == EmbeddingMode::HeatmapEncoder) {
    hme_encoder_ = register_module(
        "hme_encoder", Encoder(static_cast<int>(kNumJoints), n, cfg_.base_filters));
    hme_fc_ = register_module("hme_fc", nn::Linear(bottom_size, pose_dim));
    fused_dim += pose_dim;
  }

  decoder_fc_ = register_module("decoder_fc", nn::Linear(fused_dim, bottom_size));
  decoder_ = register_module("decoder", Decoder(n, cfg_.base_filters, 3));
  init_parameters(*this, cfg_.init_std);
}

torch::Tensor G1Impl::forward(const torch::Tensor& image, const PoseBatch& pose,
                              ForwardProbe* probe) {
  const long h = cfg_.image_height;
  const long w = cfg_.image_width;
  require_image_batch(image, 3, h, w, "G1 image");
  const long batch = image.size(0);

  torch::Tensor input = image;
  if (cfg_.embedding_mode != EmbeddingMode::Coordinate) {
    require_image_batch(pose.heatmaps, static_cast<long>(kNumJoints), h, w, "G1 heatmaps");
    if (pose.heatmaps.size(0) != batch) throw DataError("G1: image/pose batch size mismatch");
  }
  if (cfg_.embedding_mode == EmbeddingMode::HeatmapConcat) {
    input = torch::cat({image, pose.heatmaps.to(image.dtype())}, 1);
  }

  auto enc = encoder_(input, probe);
  torch::Tensor code = bottleneck_fc_(enc.bottom.flatten(1));

  if (cfg_.embedding_mode == EmbeddingMode::Coordinate) {
    const auto& coords = pose.coordinates;
    if (coords.dim() != 2 || coords.size(0) != batch ||
        coords.size(1) != 2 * static_cast<long>(kNumJoints)) {
      throw DataError("G1 CE: expected coordinates [B, 36]");
    }
    auto pose_code = ce_fc2_(torch::relu(ce_fc1_(coords.to(image.dtype()))));
    code = torch::cat({code, pose_code}, 1);
  } else if (cfg_.embedding_mode == EmbeddingMode::HeatmapEncoder) {
    auto pose_enc = hme_encoder_(pose.heatmaps.to(image.dtype()));
    code = torch::cat({code, hme_fc_(pose_enc.bottom.flatten(1))}, 1);
  }

  auto x = decoder_fc_(code).view(
      {batch, cfg_.block_filters(cfg_.num_blocks), cfg_.bottom_height(), cfg_.bottom_width()});
  return torch::tanh(decoder_(x, enc.skips, probe));
}

G2Impl::G2Impl(G2Config cfg) : cfg_(cfg) {
  cfg_.validate();
  encoder_ = register_module("encoder",
                             Encoder(G2Config::kInputChannels, cfg_.num_blocks, cfg_.base_filters));
  decoder_ = register_module("decoder", Decoder(cfg_.num_blocks, cfg_.base_filters, 3));
  init_parameters(*this, cfg_.init_std);
}

Refinement G2Impl::forward(const torch::Tensor& condition, const torch::Tensor& coarse,
                           ForwardProbe* probe) {
  require_image_batch(condition, 3, cfg_.image_height, cfg_.image_width, "G2 condition");
  require_image_batch(coarse, 3, cfg_.image_height, cfg_.image_width, "G2 coarse");
  if (condition.size(0) != coarse.size(0)) throw DataError("G2: batch size mismatch");
  auto enc = encoder_(torch::cat({condition, coarse}, 1), probe);
  Refinement out;
  out.diff = torch::tanh(decoder_(enc.bottom, enc.skips, probe));
  out.refined = torch::clamp(coarse + out.diff, -1.0, 1.0);
  return out;
}

DiscriminatorImpl::DiscriminatorImpl(DConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  int in = DConfig::kInputChannels;
  int width = cfg_.base_filters;
  for (int l = 1; l <= cfg_.num_layers; ++l) {
    convs_.push_back(register_module(
        "conv" + std::to_string(l),
        nn::Conv2d(nn::Conv2dOptions(in, width, 4).stride(2).padding(1))));
    in = width;
    width *= 2;
  }
  const int features =
      in * (cfg_.image_height >> cfg_.num_layers) * (cfg_.image_width >> cfg_.num_layers);
  head_ = register_module("head", nn::Linear(features, 1));
  init_parameters(*this, cfg_.init_std);
}

torch::Tensor DiscriminatorImpl::logits(const torch::Tensor& condition,
                                        const torch::Tensor& candidate) {
  require_image_batch(condition, 3, cfg_.image_height, cfg_.image_width, "D condition");
  require_image_batch(candidate, 3, cfg_.image_height, cfg_.image_width, "D candidate");
  if (condition.size(0) != candidate.size(0)) throw DataError("D: batch size mismatch");
  auto x = torch::cat({condition, candidate}, 1);
  for (auto& conv : convs_) {
    x = torch::leaky_relu(conv(x), cfg_.leaky_slope);
  }
  return head_(x.flatten(1)).squeeze(1);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& condition,
                                         const torch::Tensor& candidate) {
  return torch::sigmoid(logits(condition, candidate));
}

void init_parameters(torch::nn::Module& module, double std) {
  torch::NoGradGuard no_grad;
  for (auto& p : module.named_parameters(/*recurse=*/true)) {
    const auto& name = p.key();
    if (name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0) {
      p.value().zero_();
    } else {
      p.value().normal_(0.0, std);
    }
  }
}

std::int64_t parameter_count(const torch::nn::Module& module) {
  std::int64_t total = 0;
  for (const auto& p : module.parameters(/*recurse=*/true)) {
    total += p.numel();
  }
  return total;
}

}  // namespace pg2
