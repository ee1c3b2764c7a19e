#pragma once

// Architecture and training configuration. Every field has a default; the
// toy preset is the default and the full-size preset is available for
// completeness.

#include <cstdint>
#include <string>

#include <json.hpp>

namespace ipc {

struct TrunkConfig {
  int64_t window = 4;
  int64_t dim = 32;
  int64_t heads = 4;
  int64_t depth = 2;   // attention layers per residual group
  int64_t blocks = 4;  // residual groups
  double mlp_ratio = 2.0;
};

struct ModelConfig {
  int64_t num_codes = 128;  // K
  int64_t code_dim = 32;    // d
  // Encoder/decoder widths at full, half and quarter resolution.
  int64_t width_full = 16;
  int64_t width_half = 32;
  int64_t width_quarter = 64;
  int64_t disc_width = 16;
  int64_t feature_width = 16;  // frozen feature network, first layer
  TrunkConfig predictor{4, 32, 4, 2, 4, 2.0};
  TrunkConfig critic{4, 32, 4, 2, 2, 2.0};

  static ModelConfig toy() { return {}; }
  static ModelConfig full();
};

enum class Stage { kVqgan, kPredictor, kCritic };

std::string to_string(Stage stage);
Stage parse_stage(const std::string& name);

struct TrainConfig {
  Stage stage = Stage::kVqgan;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  int64_t batch_size = 4;
  int64_t max_steps = 2000;
  double beta_commit = 0.25;
  double lambda_g = 0.1;
  double lambda_adv = 0.1;
  double lambda_per = 1.0;
  double temperature = 2.0;  // predictor sampling temperature while training the critic
  int64_t dead_code_patience = 2000;
  uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const TrunkConfig& c);
void from_json(const nlohmann::json& j, TrunkConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Parses a flat `key = value` document ('#' starts a comment). Dotted keys
/// nest: `model.predictor.blocks = 4`. Values are JSON scalars or bare strings.
nlohmann::json parse_flat_config(const std::string& text);

/// Applies a parsed document: `preset` (toy | full) first, then `model.*`
/// keys to `model` and the remaining keys to `train`. Unknown keys throw.
void apply_config(const nlohmann::json& doc, ModelConfig& model, TrainConfig& train);

}  // namespace ipc
