#include "ipc/training.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <sstream>

#include "ipc/errors.hpp"
#include "ipc/losses.hpp"
#include "ipc/mask_schedule.hpp"
#include "ipc/vq.hpp"

namespace ipc::train {

std::vector<std::string> trainable_modules(Stage stage) {
  switch (stage) {
    case Stage::kVqgan: return {"encoder_h", "codebook", "decoder", "code_proj"};
    case Stage::kPredictor: return {"encoder_l", "predictor", "sft"};
    case Stage::kCritic: return {"critic"};
  }
  return {};
}

Trainer::Trainer(net::IpcModel model, TrainConfig config)
    : model_(std::move(model)),
      config_(config),
      gen_(at::make_generator<at::CPUGeneratorImpl>(config.seed)) {
  require(config_.learning_rate > 0.0 && config_.batch_size > 0 && config_.max_steps >= 0,
          "train: learning rate and batch size must be positive");
  for (auto& p : model_->parameters()) p.set_requires_grad(false);
  auto trainable = model_->parameters_of(trainable_modules(config_.stage));
  for (auto& p : trainable) p.set_requires_grad(true);

  const auto options = [&] {
    return torch::optim::AdamOptions(config_.learning_rate).betas({config_.adam_beta1, config_.adam_beta2});
  };
  gen_opt_ = std::make_unique<torch::optim::Adam>(trainable, options());
  if (config_.stage != Stage::kCritic) {
    auto disc = model_->parameters_of({"discriminator"});
    for (auto& p : disc) p.set_requires_grad(true);
    disc_opt_ = std::make_unique<torch::optim::Adam>(disc, options());
  }
}

void Trainer::check_finite(const torch::Tensor& loss, const char* stage, const Metrics& metrics) {
  if (std::isfinite(loss.item<double>())) return;
  std::ostringstream msg;
  msg << stage << " step produced a non-finite loss;";
  for (const auto& [name, value] : metrics) msg << ' ' << name << '=' << value;
  throw RuntimeFailure(msg.str());
}

torch::Tensor Trainer::sample_masks(int64_t batch, int64_t rows, int64_t cols) {
  std::vector<torch::Tensor> masks;
  masks.reserve(static_cast<size_t>(batch));
  for (int64_t b = 0; b < batch; ++b) {
    const double r = 1.0 - torch::rand({1}, gen_, torch::kFloat64).item<double>();  // (0, 1]
    masks.push_back(mask::random_mask(mask::mask_count(r, rows * cols), rows, cols, gen_));
  }
  return torch::stack(masks);
}

double Trainer::discriminator_update(const torch::Tensor& real, const torch::Tensor& fake) {
  const auto d_loss = loss::adversarial(model_->discriminator(real), model_->discriminator(fake.detach()),
                                        loss::AdvSide::kDiscriminator);
  disc_opt_->zero_grad();
  d_loss.backward();
  disc_opt_->step();
  return d_loss.item<double>();
}

Metrics Trainer::vqgan_step(const torch::Tensor& clean) {
  auto& m = *model_;
  const auto enc = m.encoder_h(clean);
  const auto& z_h = enc.tokens;
  const auto q = m.codebook->quantize(z_h);

  std::vector<torch::Tensor> phi_real;
  {
    torch::NoGradGuard no_grad;
    phi_real = m.features(clean);
  }
  const auto proj = net::to_channels_last(m.code_proj(net::to_channels_first(z_h)));
  const auto l_code = vq::code_loss(z_h, q.vectors, proj, net::to_channels_last(phi_real.back()),
                                    config_.beta_commit, config_.lambda_g);
  const auto rec = m.decode(vq::straight_through(z_h, q.vectors));
  const auto l_1 = loss::l1(rec, clean);

  auto total = l_1 + l_code;
  Metrics metrics{{"l1", 0.0}, {"code", 0.0}};
  if (config_.lambda_per > 0.0) {
    const auto l_per = loss::perceptual(m.features(rec), phi_real);
    total = total + config_.lambda_per * l_per;
    metrics.emplace_back("per", l_per.item<double>());
  }
  const bool adversarial = config_.lambda_adv > 0.0;
  if (adversarial) {
    const auto l_adv = loss::adversarial({}, m.discriminator(rec), loss::AdvSide::kGenerator);
    total = total + config_.lambda_adv * l_adv;
    metrics.emplace_back("adv_g", l_adv.item<double>());
  }
  metrics[0].second = l_1.item<double>();
  metrics[1].second = l_code.item<double>();
  metrics.emplace_back("total", total.item<double>());
  check_finite(total, "vqgan", metrics);

  gen_opt_->zero_grad();
  total.backward();
  gen_opt_->step();
  if (adversarial) metrics.emplace_back("adv_d", discriminator_update(clean, rec));

  const auto revived = m.codebook->revive_dead_codes(q.indices, z_h, config_.dead_code_patience, gen_);
  metrics.emplace_back("revived", static_cast<double>(revived));
  return metrics;
}

Metrics Trainer::predictor_step(const torch::Tensor& hazy, const torch::Tensor& clean) {
  auto& m = *model_;
  torch::Tensor s_h, z_c, codes;
  std::vector<torch::Tensor> phi_real;
  {
    torch::NoGradGuard no_grad;
    const auto q = m.codebook->quantize(m.encoder_h(clean).tokens);
    s_h = q.indices;
    z_c = q.vectors;
    codes = m.codebook->codes.detach();
    phi_real = m.features(clean);
  }
  const auto enc_l = m.encoder_l(hazy);
  const auto& z_l = enc_l.tokens;
  const auto masks = sample_masks(z_l.size(0), z_l.size(1), z_l.size(2));
  const auto logits = m.predictor(mask::fuse(z_l, z_c, masks));
  const auto l_theta = loss::cross_entropy(logits, s_h.reshape({s_h.size(0), -1}));

  // Image-space terms decode the straight-through argmax prediction.
  const auto probs = torch::softmax(logits, -1);
  const auto z_soft = torch::matmul(probs, codes).reshape(z_l.sizes());
  const auto s_pred = logits.argmax(-1).reshape(s_h.sizes());
  const auto z_st = vq::straight_through(z_soft, vq::lookup(s_pred, codes));
  const auto rec = m.decode(z_st, enc_l.skips);
  const auto l_1 = loss::l1(rec, clean);

  auto total = l_1 + l_theta;
  Metrics metrics{{"l1", l_1.item<double>()}, {"ce", l_theta.item<double>()}};
  if (config_.lambda_per > 0.0) {
    const auto l_per = loss::perceptual(m.features(rec), phi_real);
    total = total + config_.lambda_per * l_per;
    metrics.emplace_back("per", l_per.item<double>());
  }
  const bool adversarial = config_.lambda_adv > 0.0;
  if (adversarial) {
    const auto l_adv = loss::adversarial({}, m.discriminator(rec), loss::AdvSide::kGenerator);
    total = total + config_.lambda_adv * l_adv;
    metrics.emplace_back("adv_g", l_adv.item<double>());
  }
  metrics.emplace_back("total", total.item<double>());
  metrics.emplace_back("code_acc", (s_pred == s_h).to(torch::kFloat64).mean().item<double>());
  check_finite(total, "predictor", metrics);

  gen_opt_->zero_grad();
  total.backward();
  gen_opt_->step();
  if (adversarial) metrics.emplace_back("adv_d", discriminator_update(clean, rec));
  return metrics;
}

torch::Tensor wrongness_labels(const torch::Tensor& sampled, const torch::Tensor& reference) {
  require(sampled.sizes() == reference.sizes(), "wrongness_labels: shape mismatch");
  return (sampled != reference).to(torch::kFloat32);
}

Metrics Trainer::critic_step(const torch::Tensor& hazy, const torch::Tensor& clean) {
  auto& m = *model_;
  torch::Tensor sampled, target;
  {
    torch::NoGradGuard no_grad;
    const auto q = m.codebook->quantize(m.encoder_h(clean).tokens);
    const auto z_l = m.encoder_l(hazy).tokens;
    const auto masks = sample_masks(z_l.size(0), z_l.size(1), z_l.size(2));
    const auto logits = m.predictor(mask::fuse(z_l, q.vectors, masks));
    const auto probs = loss::temperature_softmax(logits, config_.temperature);
    sampled = torch::multinomial(probs.reshape({-1, probs.size(-1)}), 1, /*replacement=*/true, gen_)
                  .reshape(q.indices.sizes());
    target = wrongness_labels(sampled, q.indices);
  }
  const auto l_phi = loss::binary_cross_entropy_logits(m.critic->logits(sampled), target);
  Metrics metrics{{"bce", l_phi.item<double>()}, {"wrong_frac", target.mean().item<double>()}};
  check_finite(l_phi, "critic", metrics);

  gen_opt_->zero_grad();
  l_phi.backward();
  gen_opt_->step();
  return metrics;
}

Metrics Trainer::train_step(const Batches& data) {
  require(data.clean.defined() && data.clean.size(0) > 0, "train: empty dataset");
  require(config_.stage == Stage::kVqgan || data.hazy.defined(), "train: stage needs hazy images");
  const auto idx = torch::randint(data.clean.size(0), {config_.batch_size}, gen_, torch::kLong);
  const auto clean = data.clean.index_select(0, idx);
  Metrics metrics;
  switch (config_.stage) {
    case Stage::kVqgan: metrics = vqgan_step(clean); break;
    case Stage::kPredictor: metrics = predictor_step(data.hazy.index_select(0, idx), clean); break;
    case Stage::kCritic: metrics = critic_step(data.hazy.index_select(0, idx), clean); break;
  }
  ++step_;
  return metrics;
}

void Trainer::run(const Batches& data, const std::function<void(int64_t, const Metrics&)>& on_step) {
  while (step_ < config_.max_steps) {
    const auto metrics = train_step(data);
    if (on_step) on_step(step_, metrics);
  }
}

}  // namespace ipc::train
