#include "ipc/inference.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include "ipc/errors.hpp"
#include "ipc/vq.hpp"

namespace ipc::infer {

namespace {

nlohmann::json grid_to_json(const torch::Tensor& grid) {
  const auto g = grid.to(torch::kLong).contiguous();
  auto acc = g.accessor<int64_t, 2>();
  auto rows = nlohmann::json::array();
  for (int64_t i = 0; i < g.size(0); ++i) {
    std::vector<int64_t> row(static_cast<size_t>(g.size(1)));
    for (int64_t j = 0; j < g.size(1); ++j) row[static_cast<size_t>(j)] = acc[i][j];
    rows.push_back(row);
  }
  return rows;
}

void check_input(const torch::Tensor& hazy, int64_t iterations) {
  require(iterations >= 1, "decode: need at least one iteration");
  require(hazy.dim() == 4 && hazy.size(1) == 3, "decode: expected a [B, 3, H, W] image");
}

}  // namespace

nlohmann::json DecodeTrace::to_json(int64_t b) const {
  auto arr = nlohmann::json::array();
  for (const auto& s : steps) {
    arr.push_back({{"t", s.t}, {"mask_count", s.mask_count}, {"codes", grid_to_json(s.codes[b])},
                   {"mask", grid_to_json(s.mask[b])}});
  }
  return arr;
}

Scorer critic_scorer(net::IpcModel model) {
  return [model](const torch::Tensor& codes, const torch::Tensor&) mutable { return model->critic(codes); };
}

Scorer confidence_scorer() {
  return [](const torch::Tensor& codes, const torch::Tensor& probs) {
    return (1.0 - std::get<0>(probs.max(-1))).reshape(codes.sizes());
  };
}

DecodeResult decode_with_scorer(net::IpcModel& model, const torch::Tensor& hazy, const DecodeOptions& opts,
                                const Scorer& scorer, at::Generator& gen) {
  check_input(hazy, opts.iterations);
  require(opts.temperature > 0.0, "decode: temperature must be positive");
  torch::NoGradGuard no_grad;
  auto& m = *model;
  const auto codebook = m.codebook->codes.detach();

  const auto enc = m.encoder_l(hazy);
  const auto& z_l = enc.tokens;
  const int64_t batch = z_l.size(0), rows = z_l.size(1), cols = z_l.size(2), n = rows * cols;

  auto mask = torch::ones({batch, rows, cols}, torch::kBool);
  auto z_c = torch::zeros_like(z_l);
  torch::Tensor codes;
  DecodeResult result;
  for (int64_t t = 1; t <= opts.iterations; ++t) {
    const auto logits = m.predictor(mask::fuse(z_l, z_c, mask));  // [B, N, K]
    torch::Tensor picked;
    if (opts.sampling == Sampling::kArgmax) {
      picked = logits.argmax(-1);
    } else {
      const auto probs = torch::softmax(logits / opts.temperature, -1);
      picked = torch::multinomial(probs.reshape({batch * n, -1}), 1, /*replacement=*/true, gen);
    }
    picked = picked.reshape({batch, rows, cols});
    if (opts.freeze_retained && codes.defined()) picked = torch::where(mask, picked, codes);
    codes = picked;
    z_c = vq::lookup(codes, codebook);

    const int64_t k = mask::mask_count(static_cast<double>(t) / static_cast<double>(opts.iterations), n);
    const auto scores = scorer(codes, torch::softmax(logits, -1));
    mask = mask::select_by_score(scores, k, opts.select_mode, gen);

    TraceStep step{t, codes, mask, k, scores, {}};
    if (opts.trace_images) step.image = m.decode(z_c, enc.skips);
    result.trace.steps.push_back(std::move(step));
  }
  result.codes = codes;
  result.image = m.decode(z_c, enc.skips);
  return result;
}

DecodeResult iterative_decode(net::IpcModel& model, const torch::Tensor& hazy, const DecodeOptions& opts,
                              at::Generator& gen) {
  const auto scorer = opts.selection == Selection::kCritic ? critic_scorer(model) : confidence_scorer();
  return decode_with_scorer(model, hazy, opts, scorer, gen);
}

DecodeResult one_shot_decode(net::IpcModel& model, const torch::Tensor& hazy) {
  DecodeOptions opts;
  opts.iterations = 1;
  opts.sampling = Sampling::kArgmax;
  // Argmax sampling and top-k selection draw nothing from the generator.
  auto unused = at::make_generator<at::CPUGeneratorImpl>(0);
  return iterative_decode(model, hazy, opts, unused);
}

DecodeResult confidence_decode(net::IpcModel& model, const torch::Tensor& hazy, DecodeOptions opts,
                               at::Generator& gen) {
  opts.selection = Selection::kConfidence;
  return iterative_decode(model, hazy, opts, gen);
}

DecodeResult nn_matching_decode(net::IpcModel& model, const torch::Tensor& hazy, int64_t iterations,
                                bool trace_images) {
  check_input(hazy, iterations);
  torch::NoGradGuard no_grad;
  auto& m = *model;
  const auto codebook = m.codebook->codes.detach();
  const auto enc = m.encoder_l(hazy);
  const auto& z_l = enc.tokens;
  const int64_t batch = z_l.size(0), rows = z_l.size(1), cols = z_l.size(2), n = rows * cols;

  auto mask = torch::ones({batch, rows, cols}, torch::kBool);
  auto z_c = torch::zeros_like(z_l);
  auto unused = at::make_generator<at::CPUGeneratorImpl>(0);
  DecodeResult result;
  for (int64_t t = 1; t <= iterations; ++t) {
    const auto q = vq::quantize(mask::fuse(z_l, z_c, mask), codebook);
    z_c = q.vectors;
    const auto distance = (z_l - z_c).norm(2, -1);
    const int64_t k = mask::mask_count(static_cast<double>(t) / static_cast<double>(iterations), n);
    mask = mask::select_by_score(distance, k, mask::SelectMode::kTopK, unused);
    result.trace.steps.push_back({t, q.indices, mask, k, distance, trace_images ? m.decode(z_c, enc.skips) : torch::Tensor()});
    result.codes = q.indices;
  }
  result.image = m.decode(z_c, enc.skips);
  return result;
}

}  // namespace ipc::infer
