#include "ipc/checkpoint.hpp"

#include <torch/optim/adam.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "ipc/errors.hpp"

namespace ipc::ckpt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'I', 'P', 'C', 'C', 'K', 'P', 'T', '\0'};

std::string dtype_tag(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kInt64: return "i64";
    case torch::kUInt8: return "u8";
    default: throw ContractViolation(std::string("checkpoint: unsupported dtype ") + c10::toString(t));
  }
}

torch::ScalarType parse_dtype(const std::string& tag) {
  if (tag == "f32") return torch::kFloat32;
  if (tag == "i64") return torch::kInt64;
  if (tag == "u8") return torch::kUInt8;
  throw RuntimeFailure("checkpoint: unknown dtype tag '" + tag + "'");
}

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw RuntimeFailure("checkpoint: truncated header");
  return value;
}

void add_module_tensors(Archive& a, net::IpcModel& model) {
  for (const auto& p : model->named_parameters(/*recurse=*/true)) {
    a.tensors.emplace_back("param/" + p.key(), p.value().detach().to(torch::kFloat32).contiguous().clone());
  }
  for (const auto& b : model->named_buffers(/*recurse=*/true)) {
    a.tensors.emplace_back("buffer/" + b.key(), b.value().detach().contiguous().clone());
  }
}

nlohmann::json base_meta(net::IpcModel& model, Stage stage) {
  return {{"format_version", kFormatVersion}, {"stage", to_string(stage)}, {"model_config", model->config}};
}

// Adam moments keyed by the canonical parameter name.
void add_optimizer(Archive& a, const std::string& prefix, torch::optim::Adam& opt, net::IpcModel& model) {
  std::map<const void*, std::string> names;
  for (const auto& p : model->named_parameters(true)) names[p.value().unsafeGetTensorImpl()] = p.key();
  auto steps = nlohmann::json::object();
  // Walk parameters in optimizer order so the archive layout is stable.
  for (const auto& group : opt.param_groups()) {
    for (const auto& param : group.params()) {
      const auto it = opt.state().find(param.unsafeGetTensorImpl());
      if (it == opt.state().end()) continue;
      const auto& st = static_cast<const torch::optim::AdamParamState&>(*it->second);
      const auto& name = names.at(param.unsafeGetTensorImpl());
      steps[name] = st.step();
      a.tensors.emplace_back(prefix + name + "/exp_avg", st.exp_avg().detach().contiguous().clone());
      a.tensors.emplace_back(prefix + name + "/exp_avg_sq", st.exp_avg_sq().detach().contiguous().clone());
    }
  }
  a.meta["optimizer_steps"][prefix] = steps;
}

void restore_optimizer(const Archive& a, const std::string& prefix, torch::optim::Adam& opt, net::IpcModel& model) {
  std::map<const void*, std::string> names;
  for (const auto& p : model->named_parameters(true)) names[p.value().unsafeGetTensorImpl()] = p.key();
  const auto& steps = a.meta.at("optimizer_steps").at(prefix);
  opt.state().clear();
  for (const auto& group : opt.param_groups()) {
    for (const auto& param : group.params()) {
      const auto& name = names.at(param.unsafeGetTensorImpl());
      if (!steps.contains(name)) continue;
      const auto* m = a.find(prefix + name + "/exp_avg");
      const auto* v = a.find(prefix + name + "/exp_avg_sq");
      if (m == nullptr || v == nullptr) throw RuntimeFailure("checkpoint: missing optimizer moments for " + name);
      if (m->sizes() != param.sizes() || v->sizes() != param.sizes()) {
        throw RuntimeFailure("checkpoint: optimizer moment shape mismatch for " + name);
      }
      auto st = std::make_unique<torch::optim::AdamParamState>();
      st->step(steps.at(name).get<int64_t>());
      st->exp_avg(m->clone());
      st->exp_avg_sq(v->clone());
      opt.state()[param.unsafeGetTensorImpl()] = std::move(st);
    }
  }
}

}  // namespace

const torch::Tensor* Archive::find(const std::string& name) const {
  for (const auto& [key, value] : tensors) {
    if (key == name) return &value;
  }
  return nullptr;
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  auto meta = archive.meta;
  meta["format_version"] = kFormatVersion;
  auto entries = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    const auto nbytes = static_cast<uint64_t>(t.numel()) * t.element_size();
    entries.push_back({{"name", name}, {"dtype", dtype_tag(t.scalar_type())}, {"shape", t.sizes().vec()},
                       {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  meta["tensors"] = entries;
  const auto text = meta.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("checkpoint: cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<uint32_t>(out, kFormatVersion);
  put<uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : archive.tensors) {
    const auto c = t.contiguous().cpu();
    out.write(static_cast<const char*>(c.data_ptr()), static_cast<std::streamsize>(c.numel() * c.element_size()));
  }
  if (!out) throw RuntimeFailure("checkpoint: write failed for " + path.string());
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("checkpoint not found: " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw RuntimeFailure("not a checkpoint file: " + path.string());
  }
  const auto version = get<uint32_t>(in);
  if (version != kFormatVersion) {
    throw RuntimeFailure("unsupported checkpoint version " + std::to_string(version));
  }
  const auto length = get<uint64_t>(in);
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw RuntimeFailure("checkpoint: truncated metadata");

  Archive a;
  try {
    a.meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeFailure(std::string("checkpoint: corrupt metadata: ") + e.what());
  }
  for (const auto& e : a.meta.at("tensors")) {
    const auto dtype = parse_dtype(e.at("dtype").get<std::string>());
    auto t = torch::empty(e.at("shape").get<std::vector<int64_t>>(), torch::TensorOptions().dtype(dtype));
    const auto nbytes = e.at("nbytes").get<uint64_t>();
    if (nbytes != static_cast<uint64_t>(t.numel()) * t.element_size()) {
      throw RuntimeFailure("checkpoint: size mismatch for " + e.at("name").get<std::string>());
    }
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
    if (!in) throw RuntimeFailure("checkpoint: truncated payload");
    a.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
  }
  a.meta.erase("tensors");
  return a;
}

Archive capture_model(net::IpcModel& model, Stage stage) {
  Archive a;
  a.meta = base_meta(model, stage);
  add_module_tensors(a, model);
  return a;
}

Archive capture(train::Trainer& trainer) {
  auto& model = trainer.model();
  Archive a;
  a.meta = base_meta(model, trainer.config().stage);
  a.meta["train_config"] = trainer.config();
  a.meta["step"] = trainer.step();
  a.meta["optimizer_steps"] = nlohmann::json::object();
  add_module_tensors(a, model);
  add_optimizer(a, "optim/gen/", trainer.generator_optimizer(), model);
  if (auto* disc = trainer.discriminator_optimizer()) add_optimizer(a, "optim/disc/", *disc, model);
  a.tensors.emplace_back("rng/train", trainer.generator().get_state());
  return a;
}

ModelConfig model_config(const Archive& archive) { return archive.meta.at("model_config").get<ModelConfig>(); }

TrainConfig train_config(const Archive& archive) {
  if (!archive.meta.contains("train_config")) {
    TrainConfig c;
    c.stage = stage(archive);
    return c;
  }
  return archive.meta.at("train_config").get<TrainConfig>();
}

Stage stage(const Archive& archive) { return parse_stage(archive.meta.at("stage").get<std::string>()); }

net::IpcModel restore_model(const Archive& archive) {
  net::IpcModel model(model_config(archive));
  torch::NoGradGuard no_grad;
  for (auto& p : model->named_parameters(true)) {
    const auto* t = archive.find("param/" + p.key());
    if (t == nullptr) throw RuntimeFailure("checkpoint: missing parameter " + p.key());
    if (t->sizes() != p.value().sizes()) throw RuntimeFailure("checkpoint: shape mismatch for " + p.key());
    p.value().copy_(*t);
  }
  for (auto& b : model->named_buffers(true)) {
    const auto* t = archive.find("buffer/" + b.key());
    if (t == nullptr) throw RuntimeFailure("checkpoint: missing buffer " + b.key());
    if (t->sizes() != b.value().sizes()) throw RuntimeFailure("checkpoint: shape mismatch for " + b.key());
    b.value().copy_(*t);
  }
  return model;
}

void restore_trainer_state(train::Trainer& trainer, const Archive& archive) {
  if (stage(archive) != trainer.config().stage) {
    throw ContractViolation("checkpoint stage " + archive.meta.at("stage").get<std::string>() +
                            " does not match trainer stage " + to_string(trainer.config().stage));
  }
  trainer.set_step(archive.meta.value("step", int64_t{0}));
  if (const auto* rng = archive.find("rng/train")) trainer.generator().set_state(*rng);
  if (!archive.meta.contains("optimizer_steps")) return;
  const auto& steps = archive.meta.at("optimizer_steps");
  if (steps.contains("optim/gen/")) restore_optimizer(archive, "optim/gen/", trainer.generator_optimizer(), trainer.model());
  if (auto* disc = trainer.discriminator_optimizer(); disc != nullptr && steps.contains("optim/disc/")) {
    restore_optimizer(archive, "optim/disc/", *disc, trainer.model());
  }
}

void save(const std::filesystem::path& path, train::Trainer& trainer) { write_archive(path, capture(trainer)); }

net::IpcModel load_model(const std::filesystem::path& path) { return restore_model(read_archive(path)); }

std::string checkpoint_id(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("checkpoint not found: " + path.string());
  uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

}  // namespace ipc::ckpt
