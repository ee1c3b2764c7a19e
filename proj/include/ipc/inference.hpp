#pragma once

// Iterative Predictor-Critic decoding and the ablation decoders.
//
// Each iteration t = 1..T fuses low-quality tokens with the current codes
// under the mask, predicts a distribution over codes at every position,
// picks codes, scores them and masks the ceil(gamma(t / T) N) positions with
// the highest rejection score for the next iteration.

#include <ATen/core/Generator.h>
#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <vector>

#include <json.hpp>

#include "ipc/mask_schedule.hpp"
#include "ipc/networks.hpp"

namespace ipc::infer {

enum class Selection { kCritic, kConfidence };
enum class Sampling { kMultinomial, kArgmax };

struct DecodeOptions {
  int64_t iterations = 8;
  Selection selection = Selection::kCritic;
  mask::SelectMode select_mode = mask::SelectMode::kTopK;
  Sampling sampling = Sampling::kMultinomial;
  double temperature = 1.0;
  /// Keep codes of unmasked positions instead of resampling them.
  bool freeze_retained = false;
  /// Decode an image for every iteration into the trace.
  bool trace_images = false;
};

struct TraceStep {
  int64_t t = 0;
  torch::Tensor codes;   // S picked at iteration t, [B, m, n]
  torch::Tensor mask;    // mask for iteration t + 1, [B, m, n]
  int64_t mask_count = 0;
  torch::Tensor scores;  // rejection scores (or NN distances), [B, m, n]
  torch::Tensor image;   // optional decode of lookup(S), [B, 3, H, W]
};

struct DecodeTrace {
  std::vector<TraceStep> steps;
  /// Sample `b` as JSON: codes and masks as nested arrays.
  nlohmann::json to_json(int64_t b = 0) const;
};

struct DecodeResult {
  torch::Tensor image;  // [B, 3, H, W]
  torch::Tensor codes;  // final S, [B, m, n]
  DecodeTrace trace;
};

/// Rejection scores from (codes [B, m, n], probs [B, m*n, K]) -> [B, m, n].
using Scorer = std::function<torch::Tensor(const torch::Tensor& codes, const torch::Tensor& probs)>;

Scorer critic_scorer(net::IpcModel model);
/// 1 - max_k p(k): the least confident positions are re-predicted first.
Scorer confidence_scorer();

/// The decoding loop with an arbitrary retention criterion.
DecodeResult decode_with_scorer(net::IpcModel& model, const torch::Tensor& hazy, const DecodeOptions& opts,
                                const Scorer& scorer, at::Generator& gen);

/// Uses `opts.selection` to choose between the critic and confidence.
DecodeResult iterative_decode(net::IpcModel& model, const torch::Tensor& hazy, const DecodeOptions& opts,
                              at::Generator& gen);

/// Single full-mask pass with argmax codes. Consumes no randomness.
DecodeResult one_shot_decode(net::IpcModel& model, const torch::Tensor& hazy);

DecodeResult confidence_decode(net::IpcModel& model, const torch::Tensor& hazy, DecodeOptions opts,
                               at::Generator& gen);

/// Predictor replaced by nearest-neighbour quantization; positions with the
/// largest token-to-code distance are the ones masked.
DecodeResult nn_matching_decode(net::IpcModel& model, const torch::Tensor& hazy, int64_t iterations,
                                bool trace_images = false);

}  // namespace ipc::infer
