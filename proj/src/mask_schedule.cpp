#include "ipc/mask_schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ipc/errors.hpp"

namespace ipc::mask {

double gamma(double r) {
  require(r >= 0.0 && r <= 1.0, "gamma: r must lie in [0, 1]");
  // sin(pi (1 - r) / 2) == cos(pi r / 2), but hits 0 exactly at r = 1.
  return std::sin(std::numbers::pi * (1.0 - r) / 2.0);
}

int64_t mask_count(double r, int64_t n) {
  require(n >= 1, "mask_count: token count must be positive");
  const double v = gamma(r) * static_cast<double>(n);
  const double nearest = std::round(v);
  const double snapped = std::abs(v - nearest) <= 1e-9 * static_cast<double>(n) ? nearest : std::ceil(v);
  return std::clamp<int64_t>(static_cast<int64_t>(snapped), 0, n);
}

std::vector<int64_t> schedule(int64_t iterations, int64_t n) {
  require(iterations >= 1, "schedule: need at least one iteration");
  std::vector<int64_t> counts;
  counts.reserve(static_cast<size_t>(iterations));
  for (int64_t t = 1; t <= iterations; ++t) {
    counts.push_back(mask_count(static_cast<double>(t) / static_cast<double>(iterations), n));
  }
  return counts;
}

torch::Tensor random_mask(int64_t k, int64_t rows, int64_t cols, at::Generator& gen) {
  const int64_t n = rows * cols;
  require(rows >= 1 && cols >= 1, "random_mask: empty grid");
  require(k >= 0 && k <= n, "random_mask: k out of range");
  auto bits = torch::zeros({n}, torch::kBool);
  if (k > 0) {
    const auto chosen = torch::randperm(n, gen, torch::kLong).slice(0, 0, k);
    bits.index_fill_(0, chosen, true);
  }
  return bits.reshape({rows, cols});
}

torch::Tensor fuse(const torch::Tensor& z_l, const torch::Tensor& z_c, const torch::Tensor& mask) {
  require(z_l.sizes() == z_c.sizes(), "fuse: Z_l and Z_c shapes differ");
  require(mask.dim() == z_l.dim() - 1, "fuse: mask rank must be grid rank minus one");
  for (int64_t i = 0; i < mask.dim(); ++i) {
    require(mask.size(i) == z_l.size(i), "fuse: mask shape does not match grid");
  }
  return torch::where(mask.to(torch::kBool).unsqueeze(-1), z_l, z_c);
}

namespace {

torch::Tensor select_one(const torch::Tensor& scores, int64_t k, SelectMode mode, at::Generator& gen) {
  const int64_t n = scores.numel();
  auto bits = torch::zeros({n}, torch::kBool);
  if (k == 0) return bits;
  if (k == n) return bits.fill_(true);

  const auto flat = scores.detach().reshape({-1}).to(torch::kFloat64).contiguous();
  if (mode == SelectMode::kTopK) {
    const double* s = flat.data_ptr<double>();
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [s](int64_t a, int64_t b) { return s[a] > s[b]; });
    auto* out = bits.data_ptr<bool>();
    for (int64_t i = 0; i < k; ++i) out[order[static_cast<size_t>(i)]] = true;
  } else {
    const auto weights = flat.clamp_min(1e-12);
    bits.index_fill_(0, torch::multinomial(weights, k, /*replacement=*/false, gen), true);
  }
  return bits;
}

}  // namespace

torch::Tensor select_by_score(const torch::Tensor& scores, int64_t k, SelectMode mode, at::Generator& gen) {
  require(scores.dim() == 2 || scores.dim() == 3, "select_by_score: scores must be [m, n] or [B, m, n]");
  const bool batched = scores.dim() == 3;
  const auto s = batched ? scores : scores.unsqueeze(0);
  const int64_t n = s.size(1) * s.size(2);
  require(k >= 0 && k <= n, "select_by_score: k out of range");

  std::vector<torch::Tensor> masks;
  masks.reserve(static_cast<size_t>(s.size(0)));
  for (int64_t b = 0; b < s.size(0); ++b) {
    masks.push_back(select_one(s[b], k, mode, gen).reshape({s.size(1), s.size(2)}));
  }
  auto out = torch::stack(masks);
  return batched ? out : out.squeeze(0);
}

}  // namespace ipc::mask
