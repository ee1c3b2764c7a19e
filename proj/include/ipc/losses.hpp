#pragma once

// Loss terms of the three training stages. Every loss is mean-reduced over
// elements unless a Reduction says otherwise.

#include <torch/torch.h>

#include <vector>

namespace ipc::loss {

enum class Reduction { kMean, kSum };

/// mean |a - b|
torch::Tensor l1(const torch::Tensor& a, const torch::Tensor& b);

enum class AdvSide { kGenerator, kDiscriminator };

/// Inputs are raw discriminator scores; D = sigmoid(score).
/// Discriminator side: -(mean log D(real) + mean log(1 - D(fake))).
/// Generator side (non-saturating): -mean log D(fake); `real` is ignored.
torch::Tensor adversarial(const torch::Tensor& real, const torch::Tensor& fake, AdvSide side);

/// Mean over positions of -log softmax(logits)[label]. logits [..., K], labels [...].
torch::Tensor cross_entropy(const torch::Tensor& logits, const torch::Tensor& labels);

/// -[M log p + (1 - M) log(1 - p)], p strictly inside (0, 1).
torch::Tensor binary_cross_entropy(const torch::Tensor& p, const torch::Tensor& target,
                                   Reduction reduction = Reduction::kMean);

/// Same loss evaluated from logits (p = sigmoid(logits)), numerically stable.
torch::Tensor binary_cross_entropy_logits(const torch::Tensor& logits, const torch::Tensor& target);

/// softmax(logits / temperature) over the last axis.
torch::Tensor temperature_softmax(const torch::Tensor& logits, double temperature);

/// Mean over feature layers of mean |phi_a - phi_b|.
torch::Tensor perceptual(const std::vector<torch::Tensor>& phi_a, const std::vector<torch::Tensor>& phi_b);

}  // namespace ipc::loss
