#include "ipc/vq.hpp"

#include <cmath>

#include "ipc/errors.hpp"

namespace ipc::vq {

namespace {

// Bound on the [rows, K, d] difference tensor materialised per chunk.
constexpr int64_t kChunkElements = int64_t{1} << 22;

void check_codes(const torch::Tensor& codes) {
  require(codes.dim() == 2, "codebook must be a [K, d] matrix");
  require(codes.size(0) >= 2 && codes.size(1) >= 1, "codebook needs K >= 2 and d >= 1");
}

}  // namespace

Quantized quantize(const torch::Tensor& grid, const torch::Tensor& codes) {
  check_codes(codes);
  const int64_t d = codes.size(1);
  require(grid.dim() >= 1 && grid.size(-1) == d, "quantize: grid feature dim does not match codebook dim");

  torch::Tensor indices;
  {
    torch::NoGradGuard no_grad;
    const auto flat = grid.detach().reshape({-1, d}).to(torch::kFloat64);
    const auto table = codes.detach().to(torch::kFloat64);
    require(table.isfinite().all().item<bool>(), "quantize: codebook contains non-finite values");

    const int64_t rows = flat.size(0);
    const int64_t chunk = std::max<int64_t>(1, kChunkElements / (codes.size(0) * d));
    auto flat_idx = torch::empty({rows}, torch::kLong);
    for (int64_t s = 0; s < rows; s += chunk) {
      const int64_t e = std::min(rows, s + chunk);
      const auto diff = flat.slice(0, s, e).unsqueeze(1) - table.unsqueeze(0);
      flat_idx.slice(0, s, e).copy_(diff.square().sum(-1).argmin(1));
    }
    auto shape = grid.sizes().vec();
    shape.pop_back();
    indices = flat_idx.reshape(shape);
  }
  return {indices, lookup(indices, codes)};
}

torch::Tensor lookup(const torch::Tensor& indices, const torch::Tensor& codes) {
  check_codes(codes);
  require(indices.scalar_type() == torch::kLong, "lookup: indices must be int64");
  if (indices.numel() > 0) {
    require(indices.min().item<int64_t>() >= 0 && indices.max().item<int64_t>() < codes.size(0),
            "lookup: code index out of range");
  }
  auto shape = indices.sizes().vec();
  shape.push_back(codes.size(1));
  return codes.index_select(0, indices.reshape({-1})).reshape(shape);
}

torch::Tensor code_loss(const torch::Tensor& z_h, const torch::Tensor& z_c,
                        const torch::Tensor& proj_feat, const torch::Tensor& target_feat,
                        double beta_commit, double lambda_g) {
  require(z_h.sizes() == z_c.sizes(), "code_loss: Z_h and Z_c shapes differ");
  require(beta_commit >= 0.0 && lambda_g >= 0.0, "code_loss: weights must be nonnegative");
  auto loss = (z_c.detach() - z_h).square().mean() + beta_commit * (z_c - z_h.detach()).square().mean();
  if (proj_feat.defined()) {
    require(proj_feat.sizes() == target_feat.sizes(), "code_loss: feature shapes differ");
    loss = loss + lambda_g * (proj_feat - target_feat.detach()).square().mean();
  }
  return loss;
}

torch::Tensor straight_through(const torch::Tensor& z_h, const torch::Tensor& z_c) {
  require(z_h.sizes() == z_c.sizes(), "straight_through: shapes differ");
  // z_h - sg(z_h) is exactly zero, so the value is bit-identical to z_c.
  return z_c.detach() + (z_h - z_h.detach());
}

CodebookImpl::CodebookImpl(int64_t num_codes, int64_t dim) {
  require(num_codes >= 2 && dim >= 1, "codebook needs K >= 2 and d >= 1");
  codes = register_parameter("codes", torch::randn({num_codes, dim}) / std::sqrt(static_cast<double>(dim)));
  idle_steps = register_buffer("idle_steps", torch::zeros({num_codes}, torch::kLong));
}

int64_t CodebookImpl::revive_dead_codes(const torch::Tensor& indices, const torch::Tensor& encoder_outputs,
                                        int64_t patience, at::Generator& gen) {
  torch::NoGradGuard no_grad;
  const int64_t k = num_codes();
  const auto used = torch::bincount(indices.reshape({-1}), {}, k) > 0;
  idle_steps.copy_(torch::where(used, torch::zeros_like(idle_steps), idle_steps + 1));
  if (patience <= 0) return 0;

  const auto dead = (idle_steps >= patience).nonzero().reshape({-1});
  const int64_t n_dead = dead.numel();
  if (n_dead == 0) return 0;
  const auto pool = encoder_outputs.detach().reshape({-1, dim()});
  const auto pick = torch::randint(pool.size(0), {n_dead}, gen, torch::kLong);
  codes.index_copy_(0, dead, pool.index_select(0, pick).to(codes.scalar_type()));
  idle_steps.index_fill_(0, dead, 0);
  return n_dead;
}

}  // namespace ipc::vq
