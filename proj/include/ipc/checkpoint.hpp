#pragma once

// Checkpoint archive: 8-byte magic, u32 format version, u64 metadata length,
// JSON metadata, then the raw little-endian tensor payloads back to back.
// Parameters are float32 keyed by canonical module path; integer buffers and
// the generator state carry their own dtype tag.

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ipc/config.hpp"
#include "ipc/networks.hpp"
#include "ipc/training.hpp"

namespace ipc::ckpt {

constexpr uint32_t kFormatVersion = 1;

struct Archive {
  nlohmann::json meta;  // stage, model_config, train_config, step, format_version, ...
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  const torch::Tensor* find(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const Archive& archive);
/// Throws RuntimeFailure on a missing, truncated or foreign file.
Archive read_archive(const std::filesystem::path& path);

/// Weights only; used for inference-only exports.
Archive capture_model(net::IpcModel& model, Stage stage);
/// Weights, optimizer moments, generator state, step and configs.
Archive capture(train::Trainer& trainer);

ModelConfig model_config(const Archive& archive);
TrainConfig train_config(const Archive& archive);
Stage stage(const Archive& archive);

/// Builds a model of the archived configuration and loads every parameter
/// and buffer.
net::IpcModel restore_model(const Archive& archive);

/// Restores step, generator and optimizer moments into a trainer whose model
/// already holds the archived weights. The stages must agree.
void restore_trainer_state(train::Trainer& trainer, const Archive& archive);

void save(const std::filesystem::path& path, train::Trainer& trainer);
net::IpcModel load_model(const std::filesystem::path& path);

/// Hex FNV-1a of the file contents.
std::string checkpoint_id(const std::filesystem::path& path);

}  // namespace ipc::ckpt
