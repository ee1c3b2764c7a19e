#pragma once

// Parametric models: encoders, decoder with SFT modulation, the windowed
// transformer trunk shared by the Code-Predictor and Code-Critic, the patch
// discriminator and the frozen feature network used by the perceptual terms.
//
// Images are NCHW float tensors in [0, 1]; token grids are channel-last
// [B, m, n, d] with m = H / 4 and n = W / 4.

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include "ipc/config.hpp"
#include "ipc/vq.hpp"

namespace ipc::net {

torch::Tensor to_channels_last(const torch::Tensor& x);   // [B,C,H,W] -> [B,H,W,C]
torch::Tensor to_channels_first(const torch::Tensor& x);  // [B,H,W,C] -> [B,C,H,W]

struct Encoded {
  torch::Tensor tokens;              // [B, m, n, d]
  std::vector<torch::Tensor> skips;  // {full resolution, half resolution}, NCHW
};

class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const ModelConfig& cfg);
  Encoded forward(const torch::Tensor& image);

 private:
  torch::nn::Conv2d stem_{nullptr}, down1_{nullptr}, mid1_{nullptr}, down2_{nullptr}, mid2_{nullptr},
      out_{nullptr};
};
TORCH_MODULE(Encoder);

/// F_d + alpha * F_d + beta with (alpha, beta) = conv(concat(F_e, F_d)).
/// The conv starts at zero, making the module the identity on F_d.
class SftImpl : public torch::nn::Module {
 public:
  explicit SftImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& f_d, const torch::Tensor& f_e);
  /// Applies given modulation maps directly.
  static torch::Tensor modulate(const torch::Tensor& f_d, const torch::Tensor& alpha, const torch::Tensor& beta);

  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(Sft);

/// The two SFT layers of the decoder, kept apart from the decoder trunk so
/// they can be trained while the decoder stays frozen.
class SftStackImpl : public torch::nn::Module {
 public:
  explicit SftStackImpl(const ModelConfig& cfg);
  Sft full{nullptr};
  Sft half{nullptr};
};
TORCH_MODULE(SftStack);

class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const ModelConfig& cfg);
  /// Empty `skips` (or an empty `sft`) skips modulation entirely.
  torch::Tensor forward(const torch::Tensor& tokens, const std::vector<torch::Tensor>& skips, SftStack sft);

 private:
  torch::nn::Conv2d head_{nullptr}, mid_{nullptr}, up1_{nullptr}, up2_{nullptr}, tail_{nullptr};
};
TORCH_MODULE(Decoder);

/// Multi-head self-attention inside non-overlapping windows with a learned
/// relative position bias.
class WindowAttentionImpl : public torch::nn::Module {
 public:
  WindowAttentionImpl(int64_t dim, int64_t heads, int64_t window);
  /// x: [B * nW, w*w, C]; mask: undefined or [nW, w*w, w*w] additive.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask);

 private:
  int64_t heads_;
  int64_t window_;
  double scale_;
  torch::nn::Linear qkv_{nullptr}, proj_{nullptr};
  torch::Tensor bias_table_;
  torch::Tensor bias_index_;
};
TORCH_MODULE(WindowAttention);

/// Pre-norm attention + MLP layer over a [B, H, W, C] grid, optionally on a
/// cyclically shifted window partition.
class TransformerLayerImpl : public torch::nn::Module {
 public:
  TransformerLayerImpl(const TrunkConfig& cfg, bool shifted);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  int64_t window_;
  bool shifted_;
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
  WindowAttention attn_{nullptr};
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(TransformerLayer);

/// `depth` transformer layers followed by a 3x3 conv, wrapped in a residual.
class ResidualGroupImpl : public torch::nn::Module {
 public:
  explicit ResidualGroupImpl(const TrunkConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::ModuleList layers_;
  torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(ResidualGroup);

class TrunkImpl : public torch::nn::Module {
 public:
  explicit TrunkImpl(const TrunkConfig& cfg);
  /// [B, m, n, C] -> [B, m, n, C]; pads to a multiple of the window internally.
  torch::Tensor forward(const torch::Tensor& x);

 private:
  int64_t window_;
  torch::nn::ModuleList groups_;
};
TORCH_MODULE(Trunk);

/// G_theta: fused tokens [B, m, n, d] -> logits [B, m*n, K].
class CodePredictorImpl : public torch::nn::Module {
 public:
  explicit CodePredictorImpl(const ModelConfig& cfg);
  torch::Tensor forward(const torch::Tensor& tokens);

  torch::nn::Linear embed{nullptr};
  Trunk trunk{nullptr};
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(CodePredictor);

/// G_phi: code indices [B, m, n] -> rejection scores. `logits` is the raw
/// output; `forward` squashes into the open interval (0, 1).
class CodeCriticImpl : public torch::nn::Module {
 public:
  explicit CodeCriticImpl(const ModelConfig& cfg);
  torch::Tensor logits(const torch::Tensor& codes);
  torch::Tensor forward(const torch::Tensor& codes);

  torch::nn::Embedding embed{nullptr};
  Trunk trunk{nullptr};
  torch::nn::Linear head{nullptr};

 private:
  int64_t num_codes_;
};
TORCH_MODULE(CodeCritic);

/// Four strided convs; score map at 1/8 of the input resolution (raw logits).
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const ModelConfig& cfg);
  torch::Tensor forward(const torch::Tensor& image);

 private:
  torch::nn::Conv2d c1_{nullptr}, c2_{nullptr}, c3_{nullptr}, c4_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Frozen, randomly initialised three-layer conv net standing in for a
/// pretrained perceptual network. Outputs at full, 1/2 and 1/4 resolution.
class FeatureNetImpl : public torch::nn::Module {
 public:
  explicit FeatureNetImpl(const ModelConfig& cfg);
  std::vector<torch::Tensor> forward(const torch::Tensor& image);
  int64_t out_channels() const { return out_channels_; }

 private:
  int64_t out_channels_;
  torch::nn::Conv2d c1_{nullptr}, c2_{nullptr}, c3_{nullptr};
};
TORCH_MODULE(FeatureNet);

/// Every network of the pipeline under canonical names.
class IpcModelImpl : public torch::nn::Module {
 public:
  explicit IpcModelImpl(const ModelConfig& cfg);

  /// D_H applied to tokens; SFT modulation only when `skips` is non-empty.
  torch::Tensor decode(const torch::Tensor& tokens, const std::vector<torch::Tensor>& skips = {});

  /// Parameters of the named direct submodules, in registration order.
  std::vector<torch::Tensor> parameters_of(const std::vector<std::string>& names) const;

  /// Copies E_H weights into E_L.
  void init_low_quality_encoder();

  ModelConfig config;
  Encoder encoder_h{nullptr};
  Encoder encoder_l{nullptr};
  vq::Codebook codebook{nullptr};
  Decoder decoder{nullptr};
  SftStack sft{nullptr};
  CodePredictor predictor{nullptr};
  CodeCritic critic{nullptr};
  Discriminator discriminator{nullptr};
  FeatureNet features{nullptr};
  torch::nn::Conv2d code_proj{nullptr};  // CONV(Z_h) of the code loss feature term
};
TORCH_MODULE(IpcModel);

/// Builds a model with all randomness drawn from `seed`.
IpcModel make_model(const ModelConfig& cfg, uint64_t seed);

/// FNV-1a over the raw bytes of every parameter and buffer of `module`.
uint64_t checksum(const torch::nn::Module& module);

}  // namespace ipc::net
