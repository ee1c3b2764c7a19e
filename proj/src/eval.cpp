#include "ipc/eval.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "ipc/errors.hpp"
#include "ipc/image_io.hpp"

namespace ipc::eval {

namespace F = torch::nn::functional;

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  require(a.sizes() == b.sizes(), "psnr: shape mismatch");
  const double mse = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).square().mean().item<double>();
  if (mse <= 0.0) return kIdenticalPsnr;
  return std::min(kIdenticalPsnr, 10.0 * std::log10(1.0 / mse));
}

double ssim(const torch::Tensor& a, const torch::Tensor& b, int64_t window) {
  require(a.sizes() == b.sizes(), "ssim: shape mismatch");
  require(a.dim() == 3 || a.dim() == 4, "ssim: expected [C, H, W] or [B, C, H, W]");
  auto x = a.to(torch::kFloat64);
  auto y = b.to(torch::kFloat64);
  if (x.dim() == 3) {
    x = x.unsqueeze(0);
    y = y.unsqueeze(0);
  }
  const int64_t w = std::max<int64_t>(1, std::min({window, x.size(2), x.size(3)}));
  const auto pool = [w](const torch::Tensor& t) { return F::avg_pool2d(t, F::AvgPool2dFuncOptions(w).stride(1)); };
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto mu_x = pool(x), mu_y = pool(y);
  const auto var_x = pool(x * x) - mu_x * mu_x;
  const auto var_y = pool(y * y) - mu_y * mu_y;
  const auto cov = pool(x * y) - mu_x * mu_y;
  const auto map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2));
  return map.mean().item<double>();
}

double code_accuracy(const torch::Tensor& codes, const torch::Tensor& reference) {
  require(codes.sizes() == reference.sizes(), "code_accuracy: shape mismatch");
  require(codes.numel() > 0, "code_accuracy: empty sequences");
  return (codes == reference).to(torch::kFloat64).mean().item<double>();
}

double ranking_auc(const torch::Tensor& scores, const torch::Tensor& labels) {
  require(scores.numel() == labels.numel(), "ranking_auc: size mismatch");
  const auto s = scores.reshape({-1}).to(torch::kFloat64).contiguous();
  const auto l = labels.reshape({-1}).to(torch::kBool).contiguous();
  const int64_t n = s.numel();
  const double* sv = s.data_ptr<double>();
  const bool* lv = l.data_ptr<bool>();

  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [sv](int64_t i, int64_t j) { return sv[i] < sv[j]; });

  // Average ranks over tie groups (Mann-Whitney U).
  double positive_rank_sum = 0.0;
  int64_t positives = 0;
  for (int64_t i = 0; i < n;) {
    int64_t j = i;
    while (j < n && sv[order[static_cast<size_t>(j)]] == sv[order[static_cast<size_t>(i)]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (int64_t k = i; k < j; ++k) {
      if (lv[order[static_cast<size_t>(k)]]) {
        positive_rank_sum += rank;
        ++positives;
      }
    }
    i = j;
  }
  const int64_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::numeric_limits<double>::quiet_NaN();
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

Padded pad_reflect(const torch::Tensor& image, int64_t multiple) {
  require(image.dim() >= 2 && multiple >= 1, "pad_reflect: invalid input");
  const int64_t h = image.size(-2), w = image.size(-1);
  const int64_t ph = (multiple - h % multiple) % multiple;
  const int64_t pw = (multiple - w % multiple) % multiple;
  if (ph == 0 && pw == 0) return {image, h, w};

  // Padding operators want a batch/channel prefix.
  auto x = image;
  const int64_t extra = 4 - image.dim();
  for (int64_t i = 0; i < extra; ++i) x = x.unsqueeze(0);
  const bool reflectable = ph < h && pw < w;
  auto options = F::PadFuncOptions({0, pw, 0, ph});
  if (reflectable) {
    options.mode(torch::kReflect);
  } else {
    options.mode(torch::kReplicate);
  }
  x = F::pad(x, options);
  for (int64_t i = 0; i < extra; ++i) x = x.squeeze(0);
  return {x, h, w};
}

torch::Tensor crop(const torch::Tensor& image, int64_t height, int64_t width) {
  require(image.size(-2) >= height && image.size(-1) >= width, "crop: target larger than image");
  return image.slice(-2, 0, height).slice(-1, 0, width).contiguous();
}

Mode parse_mode(const std::string& name) {
  if (name == "critic") return Mode::kCritic;
  if (name == "confidence") return Mode::kConfidence;
  if (name == "nn") return Mode::kNearestNeighbour;
  if (name == "oneshot") return Mode::kOneShot;
  throw ContractViolation("unknown decode mode '" + name + "'");
}

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kCritic: return "critic";
    case Mode::kConfidence: return "confidence";
    case Mode::kNearestNeighbour: return "nn";
    case Mode::kOneShot: return "oneshot";
  }
  return "unknown";
}

infer::DecodeResult decode(net::IpcModel& model, const torch::Tensor& hazy, Mode mode,
                           const infer::DecodeOptions& opts, at::Generator& gen) {
  switch (mode) {
    case Mode::kCritic: {
      auto o = opts;
      o.selection = infer::Selection::kCritic;
      return infer::iterative_decode(model, hazy, o, gen);
    }
    case Mode::kConfidence: return infer::confidence_decode(model, hazy, opts, gen);
    case Mode::kNearestNeighbour: return infer::nn_matching_decode(model, hazy, opts.iterations, opts.trace_images);
    case Mode::kOneShot: {
      if (!opts.trace_images) return infer::one_shot_decode(model, hazy);
      infer::DecodeOptions o;
      o.iterations = 1;
      o.sampling = infer::Sampling::kArgmax;
      o.trace_images = true;
      return infer::iterative_decode(model, hazy, o, gen);
    }
  }
  throw ContractViolation("unknown decode mode");
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << kCsvHeader << '\n' << std::setprecision(10);
  const auto line = [&out](const EvalRow& r) {
    out << r.image << ',' << r.psnr_db << ',' << r.ssim << ',' << r.code_accuracy << '\n';
  };
  for (const auto& r : rows) line(r);
  line(mean);
  return out.str();
}

nlohmann::json EvalReport::summary() const {
  return {{"iterations", iterations},     {"seed", seed},           {"mode", mode},
          {"checkpoint_id", checkpoint_id}, {"images", rows.size()}, {"psnr_db", mean.psnr_db},
          {"ssim", mean.ssim},            {"code_accuracy", mean.code_accuracy}};
}

EvalReport evaluate(net::IpcModel& model, const haze::Manifest& manifest, const EvalOptions& opts) {
  require(!manifest.entries.empty(), "evaluate: empty manifest");
  torch::NoGradGuard no_grad;
  EvalReport report;
  report.iterations = opts.decode.iterations;
  report.seed = opts.seed;
  report.mode = to_string(opts.mode);
  report.mean.image = "mean";

  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& entry = manifest.entries[i];
    const auto clean = image::read_png(manifest.root / entry.clean_path);
    const auto hazy = image::read_png(manifest.root / entry.hazy_path);
    const auto padded_hazy = pad_reflect(hazy);
    const auto padded_clean = pad_reflect(clean);

    auto gen = at::make_generator<at::CPUGeneratorImpl>(haze::derive_seed(opts.seed, i));
    const auto result = decode(model, padded_hazy.image.unsqueeze(0), opts.mode, opts.decode, gen);
    const auto reference = model->codebook->quantize(model->encoder_h(padded_clean.image.unsqueeze(0)).tokens).indices;
    const auto restored = crop(result.image[0], padded_hazy.height, padded_hazy.width);

    EvalRow row{entry.hazy_path, psnr(restored, clean), ssim(restored, clean, opts.ssim_window),
                code_accuracy(result.codes, reference)};
    report.mean.psnr_db += row.psnr_db;
    report.mean.ssim += row.ssim;
    report.mean.code_accuracy += row.code_accuracy;
    report.rows.push_back(std::move(row));
  }
  const auto n = static_cast<double>(report.rows.size());
  report.mean.psnr_db /= n;
  report.mean.ssim /= n;
  report.mean.code_accuracy /= n;
  return report;
}

}  // namespace ipc::eval
