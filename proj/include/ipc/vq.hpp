#pragma once

// Discrete codebook: nearest-neighbour quantization, code lookup and the
// VQ loss terms.
//
// Layout conventions used throughout the project:
//   token grid      [..., d]   float, channel-last (usually [B, m, n, d])
//   code sequence   [...]      int64 indices into the codebook
//   codebook        [K, d]

#include <torch/torch.h>

#include <cstdint>

namespace ipc::vq {

struct Quantized {
  torch::Tensor indices;  // [...]
  torch::Tensor vectors;  // [..., d], rows of the codebook
};

/// Replaces every d-vector of `grid` by its closest codebook row (Euclidean).
/// Distances are evaluated in float64; ties resolve to the lowest index.
/// `vectors` is differentiable with respect to `codes` only.
Quantized quantize(const torch::Tensor& grid, const torch::Tensor& codes);

/// Gathers codebook rows for every index. Differentiable w.r.t. `codes`.
torch::Tensor lookup(const torch::Tensor& indices, const torch::Tensor& codes);

/// mean(|sg(z_c) - z_h|^2) + beta * mean(|z_c - sg(z_h)|^2)
///   + lambda_g * mean(|proj_feat - target_feat|^2)
/// An undefined `proj_feat` drops the feature term.
torch::Tensor code_loss(const torch::Tensor& z_h, const torch::Tensor& z_c,
                        const torch::Tensor& proj_feat, const torch::Tensor& target_feat,
                        double beta_commit, double lambda_g);

/// Forward value z_c, gradient passed to z_h unchanged.
torch::Tensor straight_through(const torch::Tensor& z_h, const torch::Tensor& z_c);

/// Trainable codebook with dead-code revival.
class CodebookImpl : public torch::nn::Module {
 public:
  CodebookImpl(int64_t num_codes, int64_t dim);

  Quantized quantize(const torch::Tensor& grid) const { return vq::quantize(grid, codes); }
  torch::Tensor lookup(const torch::Tensor& indices) const { return vq::lookup(indices, codes); }

  int64_t num_codes() const { return codes.size(0); }
  int64_t dim() const { return codes.size(1); }

  /// Updates per-code idle counters from this step's assignments. Codes idle
  /// for `patience` consecutive steps are re-seeded from random rows of
  /// `encoder_outputs` ([..., d]). Returns the number of revived codes.
  int64_t revive_dead_codes(const torch::Tensor& indices, const torch::Tensor& encoder_outputs,
                            int64_t patience, at::Generator& gen);

  torch::Tensor codes;       // parameter [K, d]
  torch::Tensor idle_steps;  // buffer [K], int64
};
TORCH_MODULE(Codebook);

}  // namespace ipc::vq
