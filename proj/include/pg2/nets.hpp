#pragma once

#include <torch/torch.h>

#include <array>
#include <string>
#include <vector>

namespace pg2 {

/// How the target pose enters the stage-I generator.
enum class EmbeddingMode {
  HeatmapConcat,   // 18 heatmaps concatenated with the image channels
  Coordinate,      // raw coordinates through two FC layers, fused at the bottleneck
  HeatmapEncoder,  // heatmaps through an independent encoder, fused at the bottleneck
};

std::string to_string(EmbeddingMode mode);
EmbeddingMode embedding_mode_from_string(const std::string& name);

struct G1Config {
  int num_blocks = 5;
  int base_filters = 32;  // block b carries b * base_filters channels
  int bottleneck_dim = 64;
  int image_height = 128;
  int image_width = 64;
  EmbeddingMode embedding_mode = EmbeddingMode::HeatmapConcat;
  double init_std = 0.02;

  int input_channels() const;
  int block_filters(int block) const { return block * base_filters; }
  int bottom_height() const { return image_height >> (num_blocks - 1); }
  int bottom_width() const { return image_width >> (num_blocks - 1); }
  void validate() const;

  bool operator==(const G1Config&) const = default;
};

struct G2Config {
  int num_blocks = 3;
  int base_filters = 32;
  int image_height = 128;
  int image_width = 64;
  double init_std = 0.02;

  static constexpr int kInputChannels = 6;

  /// N - 2 blocks at the same resolution and base width as `g1`.
  static G2Config from_g1(const G1Config& g1);
  int block_filters(int block) const { return block * base_filters; }
  void validate() const;

  bool operator==(const G2Config&) const = default;
};

struct DConfig {
  int base_filters = 64;  // doubles with every stride-2 layer
  int num_layers = 4;
  int image_height = 128;
  int image_width = 64;
  double leaky_slope = 0.2;
  double init_std = 0.02;

  static constexpr int kInputChannels = 6;

  void validate() const;

  bool operator==(const DConfig&) const = default;
};

/// Pose conditioning for a batch: heatmaps [B, 18, H, W] and, for the
/// coordinate embedding, normalized coordinates [B, 36].
struct PoseBatch {
  torch::Tensor heatmaps;
  torch::Tensor coordinates;
};

/// Optional instrumentation for a generator forward pass.
struct ForwardProbe {
  bool ablate_skips = false;  // replace every skip tensor by zeros
  std::vector<std::array<long, 2>> encoder_block_inputs;   // (H, W) per encoder block
  std::vector<std::array<long, 2>> decoder_block_outputs;  // (H, W) per decoder block, deepest first
};

// Two stride-1 3x3 conv-relu layers with an identity shortcut.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv_a_{nullptr};
  torch::nn::Conv2d conv_b_{nullptr};
};
TORCH_MODULE(ResidualBlock);

struct EncoderOutput {
  torch::Tensor bottom;
  std::vector<torch::Tensor> skips;  // skips[b - 1] is the output of block b
};

// stem conv, then num_blocks residual blocks; a stride-2 conv follows every
// block but the last and widens base*b -> base*(b+1).
class EncoderImpl : public torch::nn::Module {
 public:
  EncoderImpl(int in_channels, int num_blocks, int base_filters);
  EncoderOutput forward(const torch::Tensor& x, ForwardProbe* probe = nullptr);

 private:
  int num_blocks_;
  torch::nn::Conv2d stem_{nullptr};
  std::vector<ResidualBlock> blocks_;
  std::vector<torch::nn::Conv2d> downs_;
};
TORCH_MODULE(Encoder);

// Mirror of the encoder. Each level concatenates the incoming features with
// the matching skip, runs a residual block at doubled width, then upsamples
// (nearest, x2) and convolves down to the next level's width.
class DecoderImpl : public torch::nn::Module {
 public:
  DecoderImpl(int num_blocks, int base_filters, int out_channels);
  /// Returns the pre-activation output.
  torch::Tensor forward(torch::Tensor x, const std::vector<torch::Tensor>& skips,
                        ForwardProbe* probe = nullptr);

 private:
  int num_blocks_;
  std::vector<ResidualBlock> blocks_;  // blocks_[b - 1] works at level b
  std::vector<torch::nn::Conv2d> ups_;  // ups_[b - 2] maps level b -> b - 1
  torch::nn::Conv2d out_conv_{nullptr};
};
TORCH_MODULE(Decoder);

/// Stage-I generator: U-Net with a fully-connected bottleneck.
class G1Impl : public torch::nn::Module {
 public:
  explicit G1Impl(G1Config cfg);

  /// image [B, 3, H, W] in [-1, 1] -> coarse image [B, 3, H, W] in [-1, 1].
  torch::Tensor forward(const torch::Tensor& image, const PoseBatch& pose,
                        ForwardProbe* probe = nullptr);

  const G1Config& config() const { return cfg_; }

 private:
  G1Config cfg_;
  Encoder encoder_{nullptr};
  torch::nn::Linear bottleneck_fc_{nullptr};
  torch::nn::Linear decoder_fc_{nullptr};
  Decoder decoder_{nullptr};
  // Coordinate embedding.
  torch::nn::Linear ce_fc1_{nullptr};
  torch::nn::Linear ce_fc2_{nullptr};
  // Heatmap embedding.
  Encoder hme_encoder_{nullptr};
  torch::nn::Linear hme_fc_{nullptr};
};
TORCH_MODULE(G1);

struct Refinement {
  torch::Tensor diff;     // raw generator output
  torch::Tensor refined;  // clamp(coarse + diff, -1, 1)
};

/// Stage-II generator: fully convolutional U-Net producing a difference map.
class G2Impl : public torch::nn::Module {
 public:
  explicit G2Impl(G2Config cfg);

  Refinement forward(const torch::Tensor& condition, const torch::Tensor& coarse,
                     ForwardProbe* probe = nullptr);

  const G2Config& config() const { return cfg_; }

 private:
  G2Config cfg_;
  Encoder encoder_{nullptr};
  Decoder decoder_{nullptr};
};
TORCH_MODULE(G2);

/// Paired discriminator over (condition, candidate).
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DConfig cfg);

  /// Probability [B] that candidate is the real target for condition.
  torch::Tensor forward(const torch::Tensor& condition, const torch::Tensor& candidate);
  torch::Tensor logits(const torch::Tensor& condition, const torch::Tensor& candidate);

  const DConfig& config() const { return cfg_; }

 private:
  DConfig cfg_;
  std::vector<torch::nn::Conv2d> convs_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Gaussian weights (mean 0, std `std`), zero biases.
void init_parameters(torch::nn::Module& module, double std);
std::int64_t parameter_count(const torch::nn::Module& module);

}  // namespace pg2
