#include "ipc/losses.hpp"

#include "ipc/errors.hpp"

namespace ipc::loss {

namespace F = torch::nn::functional;

torch::Tensor l1(const torch::Tensor& a, const torch::Tensor& b) {
  require(a.sizes() == b.sizes(), "l1: shape mismatch");
  return (a - b).abs().mean();
}

torch::Tensor adversarial(const torch::Tensor& real, const torch::Tensor& fake, AdvSide side) {
  // -log sigmoid(x) == softplus(-x); -log(1 - sigmoid(x)) == softplus(x)
  if (side == AdvSide::kGenerator) return F::softplus(-fake).mean();
  require(real.defined(), "adversarial: discriminator side needs real scores");
  return F::softplus(-real).mean() + F::softplus(fake).mean();
}

torch::Tensor cross_entropy(const torch::Tensor& logits, const torch::Tensor& labels) {
  require(labels.scalar_type() == torch::kLong, "cross_entropy: labels must be int64");
  require(logits.dim() == labels.dim() + 1 && logits.numel() / logits.size(-1) == labels.numel(),
          "cross_entropy: logits must be labels' shape plus a class axis");
  const int64_t k = logits.size(-1);
  require(labels.numel() == 0 || (labels.min().item<int64_t>() >= 0 && labels.max().item<int64_t>() < k),
          "cross_entropy: label out of range");
  const auto logp = torch::log_softmax(logits.reshape({-1, k}), -1);
  return -logp.gather(1, labels.reshape({-1, 1})).mean();
}

torch::Tensor binary_cross_entropy(const torch::Tensor& p, const torch::Tensor& target, Reduction reduction) {
  require(p.sizes() == target.sizes(), "binary_cross_entropy: shape mismatch");
  require(((p > 0) & (p < 1)).all().item<bool>(), "binary_cross_entropy: probabilities must lie in (0, 1)");
  const auto m = target.to(p.scalar_type());
  const auto per = -(m * torch::log(p) + (1.0 - m) * torch::log1p(-p));
  return reduction == Reduction::kSum ? per.sum() : per.mean();
}

torch::Tensor binary_cross_entropy_logits(const torch::Tensor& logits, const torch::Tensor& target) {
  require(logits.sizes() == target.sizes(), "binary_cross_entropy_logits: shape mismatch");
  return F::binary_cross_entropy_with_logits(logits, target.to(logits.scalar_type()));
}

torch::Tensor temperature_softmax(const torch::Tensor& logits, double temperature) {
  require(temperature > 0.0, "temperature_softmax: temperature must be positive");
  return torch::softmax(logits / temperature, -1);
}

torch::Tensor perceptual(const std::vector<torch::Tensor>& phi_a, const std::vector<torch::Tensor>& phi_b) {
  require(!phi_a.empty() && phi_a.size() == phi_b.size(), "perceptual: feature lists differ");
  auto total = l1(phi_a[0], phi_b[0]);
  for (size_t i = 1; i < phi_a.size(); ++i) total = total + l1(phi_a[i], phi_b[i]);
  return total / static_cast<double>(phi_a.size());
}

}  // namespace ipc::loss
