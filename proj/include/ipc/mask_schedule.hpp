#pragma once

// Cosine mask schedule, random training masks, token fusion and the
// score-driven mask selection used between decoding iterations.
//
// Masks are bool tensors shaped like the token grid without the feature
// axis ([m, n] or [B, m, n]); true marks a position that still carries
// low-quality features and will be re-predicted.

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace ipc::mask {

/// cos(pi * r / 2) on [0, 1]; exactly 1 at r = 0 and exactly 0 at r = 1.
double gamma(double r);

/// ceil(gamma(r) * n), in [0, n].
int64_t mask_count(double r, int64_t n);

/// Mask counts emitted after iterations t = 1..T, i.e. mask_count(t / T, n).
std::vector<int64_t> schedule(int64_t iterations, int64_t n);

/// Exactly k of the m*n positions set, uniformly over all subsets.
torch::Tensor random_mask(int64_t k, int64_t rows, int64_t cols, at::Generator& gen);

/// Per-position selection: z_l where mask is set, z_c elsewhere.
/// z_l, z_c: [..., m, n, d]; mask: [..., m, n].
torch::Tensor fuse(const torch::Tensor& z_l, const torch::Tensor& z_c, const torch::Tensor& mask);

enum class SelectMode { kTopK, kStochastic };

/// Masks the k positions per sample with the highest scores (kTopK; ties go to
/// the earlier row-major position) or draws k positions without replacement
/// with probability proportional to the score (kStochastic).
/// scores: [m, n] or [B, m, n].
torch::Tensor select_by_score(const torch::Tensor& scores, int64_t k, SelectMode mode, at::Generator& gen);

}  // namespace ipc::mask
