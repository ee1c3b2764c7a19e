#include "ipc/networks.hpp"

#include <cmath>

#include "ipc/errors.hpp"

namespace ipc::net {

namespace F = torch::nn::functional;

namespace {

torch::nn::Conv2d conv2d(int64_t in, int64_t out, int64_t kernel, int64_t stride = 1) {
  const int64_t pad = kernel == 4 ? 1 : kernel / 2;
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(pad));
}

torch::Tensor lrelu(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)); }

torch::Tensor upsample2x(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

void check_image(const torch::Tensor& image, int64_t divisor, const char* who) {
  require(image.dim() == 4 && image.size(1) == 3, std::string(who) + ": expected a [B, 3, H, W] image");
  require(image.size(2) % divisor == 0 && image.size(3) % divisor == 0,
          std::string(who) + ": image height and width must be divisible by " + std::to_string(divisor));
}

// [B, H, W, C] -> [B * nW, w * w, C]
torch::Tensor partition(const torch::Tensor& x, int64_t w) {
  const int64_t b = x.size(0), h = x.size(1), wd = x.size(2), c = x.size(3);
  return x.view({b, h / w, w, wd / w, w, c}).permute({0, 1, 3, 2, 4, 5}).reshape({-1, w * w, c});
}

// inverse of partition
torch::Tensor merge(const torch::Tensor& windows, int64_t w, int64_t h, int64_t wd) {
  const int64_t c = windows.size(-1);
  const int64_t b = windows.size(0) / ((h / w) * (wd / w));
  return windows.view({b, h / w, wd / w, w, w, c}).permute({0, 1, 3, 2, 4, 5}).reshape({b, h, wd, c});
}

// Additive mask keeping attention inside the regions that were contiguous
// before the cyclic shift.
torch::Tensor shift_mask(int64_t h, int64_t wd, int64_t w, int64_t shift) {
  auto regions = torch::zeros({1, h, wd, 1});
  const std::vector<std::pair<int64_t, int64_t>> hs{{0, h - w}, {h - w, h - shift}, {h - shift, h}};
  const std::vector<std::pair<int64_t, int64_t>> ws{{0, wd - w}, {wd - w, wd - shift}, {wd - shift, wd}};
  int64_t id = 0;
  for (const auto& [h0, h1] : hs) {
    for (const auto& [w0, w1] : ws) {
      regions.slice(1, h0, h1).slice(2, w0, w1).fill_(static_cast<double>(id++));
    }
  }
  const auto ids = partition(regions, w).squeeze(-1);  // [nW, w*w]
  const auto diff = ids.unsqueeze(1) - ids.unsqueeze(2);
  return torch::where(diff != 0, torch::full_like(diff, -100.0), torch::zeros_like(diff));
}

}  // namespace

torch::Tensor to_channels_last(const torch::Tensor& x) { return x.permute({0, 2, 3, 1}).contiguous(); }
torch::Tensor to_channels_first(const torch::Tensor& x) { return x.permute({0, 3, 1, 2}).contiguous(); }

// ---------------------------------------------------------------------------
// Encoder / decoder

EncoderImpl::EncoderImpl(const ModelConfig& cfg)
    : stem_(conv2d(3, cfg.width_full, 3)),
      down1_(conv2d(cfg.width_full, cfg.width_half, 4, 2)),
      mid1_(conv2d(cfg.width_half, cfg.width_half, 3)),
      down2_(conv2d(cfg.width_half, cfg.width_quarter, 4, 2)),
      mid2_(conv2d(cfg.width_quarter, cfg.width_quarter, 3)),
      out_(conv2d(cfg.width_quarter, cfg.code_dim, 1)) {
  register_module("stem", stem_);
  register_module("down1", down1_);
  register_module("mid1", mid1_);
  register_module("down2", down2_);
  register_module("mid2", mid2_);
  register_module("out", out_);
}

Encoded EncoderImpl::forward(const torch::Tensor& image) {
  check_image(image, 4, "encode");
  auto full = lrelu(stem_(image));
  auto half = lrelu(down1_(full));
  half = half + lrelu(mid1_(half));
  auto quarter = lrelu(down2_(half));
  quarter = quarter + lrelu(mid2_(quarter));
  return {to_channels_last(out_(quarter)), {full, half}};
}

SftImpl::SftImpl(int64_t channels) : conv(conv2d(2 * channels, 2 * channels, 3)) {
  register_module("conv", conv);
  torch::NoGradGuard no_grad;
  conv->weight.zero_();
  conv->bias.zero_();
}

torch::Tensor SftImpl::modulate(const torch::Tensor& f_d, const torch::Tensor& alpha, const torch::Tensor& beta) {
  return f_d + alpha * f_d + beta;
}

torch::Tensor SftImpl::forward(const torch::Tensor& f_d, const torch::Tensor& f_e) {
  require(f_d.sizes() == f_e.sizes(), "sft: decoder and encoder features must align");
  const auto ab = conv(torch::cat({f_e, f_d}, 1)).chunk(2, 1);
  return modulate(f_d, ab[0], ab[1]);
}

SftStackImpl::SftStackImpl(const ModelConfig& cfg) : full(cfg.width_full), half(cfg.width_half) {
  register_module("full", full);
  register_module("half", half);
}

DecoderImpl::DecoderImpl(const ModelConfig& cfg)
    : head_(conv2d(cfg.code_dim, cfg.width_quarter, 3)),
      mid_(conv2d(cfg.width_quarter, cfg.width_quarter, 3)),
      up1_(conv2d(cfg.width_quarter, cfg.width_half, 3)),
      up2_(conv2d(cfg.width_half, cfg.width_full, 3)),
      tail_(conv2d(cfg.width_full, 3, 3)) {
  register_module("head", head_);
  register_module("mid", mid_);
  register_module("up1", up1_);
  register_module("up2", up2_);
  register_module("tail", tail_);
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& tokens, const std::vector<torch::Tensor>& skips,
                                   SftStack sft) {
  require(tokens.dim() == 4, "decode: expected [B, m, n, d] tokens");
  const bool modulated = !skips.empty() && !sft.is_empty();
  if (modulated) {
    require(skips.size() == 2, "decode: expected two skip feature maps");
    require(skips[0].size(2) == 4 * tokens.size(1) && skips[0].size(3) == 4 * tokens.size(2),
            "decode: skip features do not match the token grid");
  }
  auto x = lrelu(head_(to_channels_first(tokens)));
  x = x + lrelu(mid_(x));
  x = lrelu(up1_(upsample2x(x)));
  if (modulated) x = sft->half(x, skips[1]);
  x = lrelu(up2_(upsample2x(x)));
  if (modulated) x = sft->full(x, skips[0]);
  return torch::sigmoid(tail_(x));
}

// ---------------------------------------------------------------------------
// Windowed transformer trunk

WindowAttentionImpl::WindowAttentionImpl(int64_t dim, int64_t heads, int64_t window)
    : heads_(heads),
      window_(window),
      scale_(1.0 / std::sqrt(static_cast<double>(dim / heads))),
      qkv_(torch::nn::Linear(dim, 3 * dim)),
      proj_(torch::nn::Linear(dim, dim)) {
  require(dim % heads == 0, "attention: dim must be divisible by heads");
  register_module("qkv", qkv_);
  register_module("proj", proj_);
  const int64_t span = 2 * window - 1;
  bias_table_ = register_parameter("bias_table", torch::randn({span * span, heads}) * 0.02);

  const int64_t n = window * window;
  auto index = torch::empty({n, n}, torch::kLong);
  auto acc = index.accessor<int64_t, 2>();
  for (int64_t p = 0; p < n; ++p) {
    for (int64_t q = 0; q < n; ++q) {
      const int64_t dy = p / window - q / window + window - 1;
      const int64_t dx = p % window - q % window + window - 1;
      acc[p][q] = dy * span + dx;
    }
  }
  bias_index_ = register_buffer("bias_index", index);
}

torch::Tensor WindowAttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& mask) {
  const int64_t bw = x.size(0), n = x.size(1), c = x.size(2);
  const auto qkv = qkv_(x).reshape({bw, n, 3, heads_, c / heads_}).permute({2, 0, 3, 1, 4});
  const auto q = qkv[0] * scale_;
  const auto k = qkv[1];
  const auto v = qkv[2];

  auto attn = torch::matmul(q, k.transpose(-2, -1));
  const auto bias = bias_table_.index_select(0, bias_index_.reshape({-1})).reshape({n, n, heads_}).permute({2, 0, 1});
  attn = attn + bias.unsqueeze(0);
  if (mask.defined()) {
    const int64_t nw = mask.size(0);
    attn = attn.view({bw / nw, nw, heads_, n, n}) + mask.unsqueeze(1).unsqueeze(0);
    attn = attn.view({bw, heads_, n, n});
  }
  attn = torch::softmax(attn, -1);
  return proj_(torch::matmul(attn, v).transpose(1, 2).reshape({bw, n, c}));
}

TransformerLayerImpl::TransformerLayerImpl(const TrunkConfig& cfg, bool shifted)
    : window_(cfg.window),
      shifted_(shifted),
      norm1_(torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg.dim}))),
      norm2_(torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg.dim}))),
      attn_(cfg.dim, cfg.heads, cfg.window),
      fc1_(torch::nn::Linear(cfg.dim, static_cast<int64_t>(cfg.dim * cfg.mlp_ratio))),
      fc2_(torch::nn::Linear(static_cast<int64_t>(cfg.dim * cfg.mlp_ratio), cfg.dim)) {
  register_module("norm1", norm1_);
  register_module("attn", attn_);
  register_module("norm2", norm2_);
  register_module("fc1", fc1_);
  register_module("fc2", fc2_);
}

torch::Tensor TransformerLayerImpl::forward(const torch::Tensor& x) {
  const int64_t h = x.size(1), w = x.size(2);
  const int64_t shift = (shifted_ && h > window_ && w > window_) ? window_ / 2 : 0;

  auto y = norm1_(x);
  torch::Tensor mask;
  if (shift > 0) {
    y = torch::roll(y, {-shift, -shift}, {1, 2});
    mask = shift_mask(h, w, window_, shift).to(x.dtype());
  }
  y = merge(attn_(partition(y, window_), mask), window_, h, w);
  if (shift > 0) y = torch::roll(y, {shift, shift}, {1, 2});

  auto out = x + y;
  return out + fc2_(F::gelu(fc1_(norm2_(out))));
}

ResidualGroupImpl::ResidualGroupImpl(const TrunkConfig& cfg) : conv_(conv2d(cfg.dim, cfg.dim, 3)) {
  for (int64_t i = 0; i < cfg.depth; ++i) layers_->push_back(TransformerLayer(cfg, i % 2 == 1));
  register_module("layers", layers_);
  register_module("conv", conv_);
}

torch::Tensor ResidualGroupImpl::forward(const torch::Tensor& x) {
  auto y = x;
  for (const auto& layer : *layers_) y = layer->as<TransformerLayer>()->forward(y);
  return x + to_channels_last(conv_(to_channels_first(y)));
}

TrunkImpl::TrunkImpl(const TrunkConfig& cfg) : window_(cfg.window) {
  require(cfg.window >= 1 && cfg.dim >= 1 && cfg.heads >= 1, "trunk: invalid configuration");
  for (int64_t i = 0; i < cfg.blocks; ++i) groups_->push_back(ResidualGroup(cfg));
  register_module("groups", groups_);
}

torch::Tensor TrunkImpl::forward(const torch::Tensor& x) {
  const int64_t m = x.size(1), n = x.size(2);
  const int64_t pm = (window_ - m % window_) % window_;
  const int64_t pn = (window_ - n % window_) % window_;
  auto y = (pm || pn) ? F::pad(x, F::PadFuncOptions({0, 0, 0, pn, 0, pm})) : x;
  for (const auto& group : *groups_) y = group->as<ResidualGroup>()->forward(y);
  return (pm || pn) ? y.slice(1, 0, m).slice(2, 0, n).contiguous() : y;
}

// ---------------------------------------------------------------------------
// Predictor / critic

CodePredictorImpl::CodePredictorImpl(const ModelConfig& cfg)
    : embed(torch::nn::Linear(cfg.code_dim, cfg.predictor.dim)),
      trunk(cfg.predictor),
      head(torch::nn::Linear(cfg.predictor.dim, cfg.num_codes)) {
  register_module("embed", embed);
  register_module("trunk", trunk);
  register_module("head", head);
}

torch::Tensor CodePredictorImpl::forward(const torch::Tensor& tokens) {
  require(tokens.dim() == 4 && tokens.size(3) == embed->options.in_features(),
          "predictor: tokens must be [B, m, n, d] with the codebook dimension");
  require(torch::isfinite(tokens).all().item<bool>(), "predictor: non-finite input tokens");
  const auto logits = head(trunk(embed(tokens)));
  return logits.reshape({tokens.size(0), tokens.size(1) * tokens.size(2), logits.size(-1)});
}

CodeCriticImpl::CodeCriticImpl(const ModelConfig& cfg)
    : embed(torch::nn::Embedding(cfg.num_codes, cfg.critic.dim)),
      trunk(cfg.critic),
      head(torch::nn::Linear(cfg.critic.dim, 1)),
      num_codes_(cfg.num_codes) {
  register_module("embed", embed);
  register_module("trunk", trunk);
  register_module("head", head);
}

torch::Tensor CodeCriticImpl::logits(const torch::Tensor& codes) {
  require(codes.dim() == 3 && codes.scalar_type() == torch::kLong, "critic: codes must be int64 [B, m, n]");
  require(codes.numel() == 0 || (codes.min().item<int64_t>() >= 0 && codes.max().item<int64_t>() < num_codes_),
          "critic: code index out of range");
  return head(trunk(embed(codes))).squeeze(-1);
}

torch::Tensor CodeCriticImpl::forward(const torch::Tensor& codes) {
  return torch::sigmoid(logits(codes)).clamp(1e-6, 1.0 - 1e-6);
}

// ---------------------------------------------------------------------------
// Discriminator and frozen feature network

DiscriminatorImpl::DiscriminatorImpl(const ModelConfig& cfg)
    : c1_(conv2d(3, cfg.disc_width, 4, 2)),
      c2_(conv2d(cfg.disc_width, 2 * cfg.disc_width, 4, 2)),
      c3_(conv2d(2 * cfg.disc_width, 4 * cfg.disc_width, 4, 2)),
      c4_(conv2d(4 * cfg.disc_width, 1, 3)) {
  register_module("c1", c1_);
  register_module("c2", c2_);
  register_module("c3", c3_);
  register_module("c4", c4_);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& image) {
  check_image(image, 8, "discriminate");
  auto x = lrelu(c1_(image));
  x = lrelu(c2_(x));
  x = lrelu(c3_(x));
  return c4_(x);
}

FeatureNetImpl::FeatureNetImpl(const ModelConfig& cfg)
    : out_channels_(2 * cfg.feature_width),
      c1_(conv2d(3, cfg.feature_width, 3)),
      c2_(conv2d(cfg.feature_width, 2 * cfg.feature_width, 3, 2)),
      c3_(conv2d(2 * cfg.feature_width, 2 * cfg.feature_width, 3, 2)) {
  register_module("c1", c1_);
  register_module("c2", c2_);
  register_module("c3", c3_);
  torch::NoGradGuard no_grad;
  for (auto& p : parameters()) {
    if (p.dim() > 1) torch::nn::init::kaiming_normal_(p, 0.2);
    p.set_requires_grad(false);
  }
}

std::vector<torch::Tensor> FeatureNetImpl::forward(const torch::Tensor& image) {
  const auto f1 = lrelu(c1_((image - 0.5) * 4.0));
  const auto f2 = lrelu(c2_(f1));
  const auto f3 = c3_(f2);
  return {f1, f2, f3};
}

// ---------------------------------------------------------------------------

IpcModelImpl::IpcModelImpl(const ModelConfig& cfg)
    : config(cfg),
      encoder_h(cfg),
      encoder_l(cfg),
      codebook(cfg.num_codes, cfg.code_dim),
      decoder(cfg),
      sft(cfg),
      predictor(cfg),
      critic(cfg),
      discriminator(cfg),
      features(cfg),
      code_proj(conv2d(cfg.code_dim, 2 * cfg.feature_width, 3)) {
  register_module("encoder_h", encoder_h);
  register_module("encoder_l", encoder_l);
  register_module("codebook", codebook);
  register_module("decoder", decoder);
  register_module("sft", sft);
  register_module("predictor", predictor);
  register_module("critic", critic);
  register_module("discriminator", discriminator);
  register_module("features", features);
  register_module("code_proj", code_proj);
  init_low_quality_encoder();
}

torch::Tensor IpcModelImpl::decode(const torch::Tensor& tokens, const std::vector<torch::Tensor>& skips) {
  return decoder->forward(tokens, skips, sft);
}

std::vector<torch::Tensor> IpcModelImpl::parameters_of(const std::vector<std::string>& names) const {
  std::vector<torch::Tensor> out;
  const auto children = named_children();
  for (const auto& name : names) {
    const auto* child = children.find(name);
    require(child != nullptr, "unknown submodule '" + name + "'");
    for (const auto& p : (*child)->parameters()) out.push_back(p);
  }
  return out;
}

void IpcModelImpl::init_low_quality_encoder() {
  torch::NoGradGuard no_grad;
  const auto src = encoder_h->named_parameters();
  for (auto& p : encoder_l->named_parameters()) p.value().copy_(src[p.key()]);
}

IpcModel make_model(const ModelConfig& cfg, uint64_t seed) {
  torch::manual_seed(seed);
  return IpcModel(cfg);
}

uint64_t checksum(const torch::nn::Module& module) {
  uint64_t hash = 1469598103934665603ULL;
  const auto mix = [&hash](const void* data, size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < size; ++i) {
      hash ^= bytes[i];
      hash *= 1099511628211ULL;
    }
  };
  const auto feed = [&](const std::string& name, const torch::Tensor& t) {
    mix(name.data(), name.size());
    const auto c = t.detach().cpu().contiguous();
    mix(c.data_ptr(), static_cast<size_t>(c.numel() * c.element_size()));
  };
  for (const auto& p : module.named_parameters(true)) feed(p.key(), p.value());
  for (const auto& b : module.named_buffers(true)) feed(b.key(), b.value());
  return hash;
}

}  // namespace ipc::net
