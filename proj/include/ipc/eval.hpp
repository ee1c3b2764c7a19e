#pragma once

// Paired-image and code-level metrics, reflect padding and the evaluation
// report produced by the `eval` and `sweep-T` commands.

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipc/haze.hpp"
#include "ipc/inference.hpp"
#include "ipc/networks.hpp"

namespace ipc::eval {

/// Reported for identical images.
constexpr double kIdenticalPsnr = 99.0;

/// 10 log10(1 / MSE) for images in [0, 1], capped at kIdenticalPsnr.
double psnr(const torch::Tensor& a, const torch::Tensor& b);

/// Mean SSIM with a uniform `window` x `window` window, averaged over channels.
double ssim(const torch::Tensor& a, const torch::Tensor& b, int64_t window = 8);

/// Fraction of positions where the two code sequences agree.
double code_accuracy(const torch::Tensor& codes, const torch::Tensor& reference);

/// Probability that a random positive outscores a random negative (ties
/// count one half). NaN when either class is empty.
double ranking_auc(const torch::Tensor& scores, const torch::Tensor& labels);

struct Padded {
  torch::Tensor image;  // [..., H', W'] with H', W' multiples of `multiple`
  int64_t height = 0;
  int64_t width = 0;
};

/// Reflect-pads the trailing two axes up to the next multiple (replicate
/// padding when the image is too small to reflect).
Padded pad_reflect(const torch::Tensor& image, int64_t multiple = 4);
torch::Tensor crop(const torch::Tensor& image, int64_t height, int64_t width);

enum class Mode { kCritic, kConfidence, kNearestNeighbour, kOneShot };
Mode parse_mode(const std::string& name);
std::string to_string(Mode mode);

/// Decodes a [B, 3, H, W] batch with the chosen decoder.
infer::DecodeResult decode(net::IpcModel& model, const torch::Tensor& hazy, Mode mode,
                           const infer::DecodeOptions& opts, at::Generator& gen);

struct EvalRow {
  std::string image;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double code_accuracy = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  EvalRow mean;
  int64_t iterations = 0;
  uint64_t seed = 0;
  std::string mode;
  std::string checkpoint_id;

  static constexpr const char* kCsvHeader = "image,psnr_db,ssim,code_accuracy";
  std::string to_csv() const;
  nlohmann::json summary() const;
};

struct EvalOptions {
  Mode mode = Mode::kCritic;
  infer::DecodeOptions decode;
  uint64_t seed = 0;
  int64_t ssim_window = 8;
};

/// Image i is decoded with a generator seeded from (seed, i); codes are
/// compared against the quantized E_H encoding of the clean image.
EvalReport evaluate(net::IpcModel& model, const haze::Manifest& manifest, const EvalOptions& opts);

}  // namespace ipc::eval
