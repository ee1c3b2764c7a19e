#include "ipc/config.hpp"

#include <sstream>

#include "ipc/errors.hpp"

namespace ipc {

ModelConfig ModelConfig::full() {
  ModelConfig c;
  c.num_codes = 1024;
  c.code_dim = 256;
  c.width_full = 64;
  c.width_half = 128;
  c.width_quarter = 256;
  c.disc_width = 64;
  c.feature_width = 64;
  c.predictor = {8, 256, 8, 6, 4, 2.0};
  c.critic = {8, 256, 8, 6, 2, 2.0};
  return c;
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::kVqgan: return "vqgan";
    case Stage::kPredictor: return "predictor";
    case Stage::kCritic: return "critic";
  }
  return "unknown";
}

Stage parse_stage(const std::string& name) {
  if (name == "vqgan") return Stage::kVqgan;
  if (name == "predictor") return Stage::kPredictor;
  if (name == "critic") return Stage::kCritic;
  throw ContractViolation("unknown stage '" + name + "'");
}

void to_json(nlohmann::json& j, const TrunkConfig& c) {
  j = {{"window", c.window}, {"dim", c.dim},       {"heads", c.heads},
       {"depth", c.depth},   {"blocks", c.blocks}, {"mlp_ratio", c.mlp_ratio}};
}

void from_json(const nlohmann::json& j, TrunkConfig& c) {
  c.window = j.value("window", c.window);
  c.dim = j.value("dim", c.dim);
  c.heads = j.value("heads", c.heads);
  c.depth = j.value("depth", c.depth);
  c.blocks = j.value("blocks", c.blocks);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"num_codes", c.num_codes},         {"code_dim", c.code_dim},       {"width_full", c.width_full},
       {"width_half", c.width_half},       {"width_quarter", c.width_quarter},
       {"disc_width", c.disc_width},       {"feature_width", c.feature_width},
       {"predictor", c.predictor},         {"critic", c.critic}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.num_codes = j.value("num_codes", c.num_codes);
  c.code_dim = j.value("code_dim", c.code_dim);
  c.width_full = j.value("width_full", c.width_full);
  c.width_half = j.value("width_half", c.width_half);
  c.width_quarter = j.value("width_quarter", c.width_quarter);
  c.disc_width = j.value("disc_width", c.disc_width);
  c.feature_width = j.value("feature_width", c.feature_width);
  if (j.contains("predictor")) c.predictor = j.at("predictor").get<TrunkConfig>();
  if (j.contains("critic")) c.critic = j.at("critic").get<TrunkConfig>();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"stage", to_string(c.stage)},
       {"learning_rate", c.learning_rate},
       {"adam_beta1", c.adam_beta1},
       {"adam_beta2", c.adam_beta2},
       {"batch_size", c.batch_size},
       {"max_steps", c.max_steps},
       {"beta_commit", c.beta_commit},
       {"lambda_g", c.lambda_g},
       {"lambda_adv", c.lambda_adv},
       {"lambda_per", c.lambda_per},
       {"temperature", c.temperature},
       {"dead_code_patience", c.dead_code_patience},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (j.contains("stage")) c.stage = parse_stage(j.at("stage").get<std::string>());
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.beta_commit = j.value("beta_commit", c.beta_commit);
  c.lambda_g = j.value("lambda_g", c.lambda_g);
  c.lambda_adv = j.value("lambda_adv", c.lambda_adv);
  c.lambda_per = j.value("lambda_per", c.lambda_per);
  c.temperature = j.value("temperature", c.temperature);
  c.dead_code_patience = j.value("dead_code_patience", c.dead_code_patience);
  c.seed = j.value("seed", c.seed);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Every key of `doc` must exist in `known`, recursively.
void check_keys(const nlohmann::json& doc, const nlohmann::json& known, const std::string& prefix) {
  for (const auto& [key, value] : doc.items()) {
    if (!known.contains(key)) throw ContractViolation("unknown config key '" + prefix + key + "'");
    if (value.is_object()) {
      if (!known.at(key).is_object()) throw ContractViolation("config key '" + prefix + key + "' is not a section");
      check_keys(value, known.at(key), prefix + key + ".");
    }
  }
}

}  // namespace

nlohmann::json parse_flat_config(const std::string& text) {
  auto doc = nlohmann::json::object();
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ContractViolation("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    const auto raw = trim(line.substr(eq + 1));
    if (key.empty()) throw ContractViolation("config line " + std::to_string(line_no) + ": empty key");

    nlohmann::json value = nlohmann::json::parse(raw, nullptr, /*allow_exceptions=*/false);
    if (value.is_discarded() || value.is_structured()) value = raw;

    auto* node = &doc;
    std::string rest = key;
    for (auto dot = rest.find('.'); dot != std::string::npos; dot = rest.find('.')) {
      node = &(*node)[rest.substr(0, dot)];
      rest = rest.substr(dot + 1);
    }
    (*node)[rest] = value;
  }
  return doc;
}

void apply_config(const nlohmann::json& doc, ModelConfig& model, TrainConfig& train) {
  nlohmann::json known = train;
  known["model"] = ModelConfig{};
  known["preset"] = "toy";
  check_keys(doc, known, "");
  if (doc.contains("preset")) {
    const auto preset = doc.at("preset").get<std::string>();
    if (preset == "toy") {
      model = ModelConfig::toy();
    } else if (preset == "full") {
      model = ModelConfig::full();
    } else {
      throw ContractViolation("unknown preset '" + preset + "'");
    }
  }
  try {
    if (doc.contains("model")) {
      nlohmann::json merged = model;
      merged.merge_patch(doc.at("model"));
      model = merged.get<ModelConfig>();
    }
    auto rest = doc;
    rest.erase("model");
    rest.erase("preset");
    nlohmann::json merged = train;
    merged.merge_patch(rest);
    train = merged.get<TrainConfig>();
  } catch (const nlohmann::json::type_error& e) {
    throw ContractViolation(std::string("config value has the wrong type: ") + e.what());
  }
}

}  // namespace ipc
