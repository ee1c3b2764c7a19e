#pragma once

// The three training stages:
//   vqgan      E_H, codebook, D_H (+ discriminator) on clean images
//   predictor  E_L, Code-Predictor and SFT on (hazy, clean) pairs; codebook
//              and D_H frozen
//   critic     Code-Critic only; everything else frozen

#include <ATen/core/Generator.h>
#include <torch/torch.h>

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ipc/config.hpp"
#include "ipc/networks.hpp"

namespace ipc::train {

/// Ordered (name, value) loss/statistic pairs of one step.
using Metrics = std::vector<std::pair<std::string, double>>;

/// Dataset held in memory; `hazy` may be undefined for the vqgan stage.
struct Batches {
  torch::Tensor clean;  // [N, 3, H, W]
  torch::Tensor hazy;
};

/// Critic targets M = (S != S_h) as float {0, 1}.
torch::Tensor wrongness_labels(const torch::Tensor& sampled, const torch::Tensor& reference);

/// Submodule names trained in a stage.
std::vector<std::string> trainable_modules(Stage stage);

class Trainer {
 public:
  Trainer(net::IpcModel model, TrainConfig config);

  /// One optimisation step on a sampled batch for the configured stage.
  Metrics train_step(const Batches& data);

  Metrics vqgan_step(const torch::Tensor& clean);
  Metrics predictor_step(const torch::Tensor& hazy, const torch::Tensor& clean);
  Metrics critic_step(const torch::Tensor& hazy, const torch::Tensor& clean);

  /// Runs until `config().max_steps`; `on_step(step, metrics)` after each.
  void run(const Batches& data, const std::function<void(int64_t, const Metrics&)>& on_step = {});

  net::IpcModel& model() { return model_; }
  const TrainConfig& config() const { return config_; }
  int64_t step() const { return step_; }
  void set_step(int64_t step) { step_ = step; }
  at::Generator& generator() { return gen_; }

  torch::optim::Adam& generator_optimizer() { return *gen_opt_; }
  /// Null for the critic stage.
  torch::optim::Adam* discriminator_optimizer() { return disc_opt_.get(); }

 private:
  /// Per-sample training masks with ceil(gamma(r) N) positions, r ~ U(0, 1].
  torch::Tensor sample_masks(int64_t batch, int64_t rows, int64_t cols);
  double discriminator_update(const torch::Tensor& real, const torch::Tensor& fake);
  static void check_finite(const torch::Tensor& loss, const char* stage, const Metrics& metrics);

  net::IpcModel model_;
  TrainConfig config_;
  at::Generator gen_;
  int64_t step_ = 0;
  std::unique_ptr<torch::optim::Adam> gen_opt_;
  std::unique_ptr<torch::optim::Adam> disc_opt_;
};

}  // namespace ipc::train
