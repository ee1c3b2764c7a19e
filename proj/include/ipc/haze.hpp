#pragma once

// Paired (clean, hazy) data from the atmospheric scattering model
// I = J * t + A * (1 - t), t = exp(-beta * depth), followed by gamma,
// colour-cast and sensor-noise degradations.

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace ipc::haze {

struct HazeParams {
  std::array<double, 3> airlight{1.0, 1.0, 1.0};  // A, each in [0.7, 1.0]
  double beta_scatter = 1.0;
  uint64_t depth_seed = 0;  // the depth map is regenerated from this seed
  double gamma = 1.0;
  std::array<double, 3> color_cast{1.0, 1.0, 1.0};
  double noise_sigma = 0.0;
  uint64_t noise_seed = 0;
};

void to_json(nlohmann::json& j, const HazeParams& p);
void from_json(const nlohmann::json& j, HazeParams& p);

/// Smooth depth proxy in [0, 1]: a top-to-bottom gradient (far at the top)
/// blended with bilinearly upsampled coarse noise. [H, W] float.
torch::Tensor synth_depth(int64_t height, int64_t width, uint64_t seed);

/// exp(-beta * depth)
torch::Tensor transmission(const torch::Tensor& depth, double beta_scatter);

/// Koschmieder model on a [3, H, W] clean image; `depth` is [H, W].
torch::Tensor apply_scattering(const torch::Tensor& clean, const torch::Tensor& depth, const HazeParams& params);

/// Power-law gamma, per-channel cast, seeded Gaussian noise, clamp to [0, 1].
torch::Tensor degrade_extras(const torch::Tensor& image, const HazeParams& params);

/// Full degradation of one clean image.
torch::Tensor make_hazy(const torch::Tensor& clean, const HazeParams& params);

/// Draws parameters from the training ranges (beta in [0.5, 3], A in
/// [0.7, 1], sigma in [0, 0.02], gamma in [0.8, 1.2], cast in [0.9, 1.1]).
HazeParams sample_params(uint64_t seed);

/// Procedural outdoor-like scene (sky, horizon, ground texture, blocky
/// structures) used as clean source material. [3, H, W] in [0, 1].
torch::Tensor synth_clean_scene(int64_t height, int64_t width, uint64_t seed);

/// Mixes a base seed with an index into an independent 64-bit seed.
uint64_t derive_seed(uint64_t seed, uint64_t index);

struct ManifestEntry {
  std::string clean_path;  // relative to the manifest's directory
  std::string hazy_path;
  HazeParams params;
  uint64_t seed = 0;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;  // directory the relative paths resolve against
};

nlohmann::json manifest_to_json(const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

/// Crops `count` random patches from the PNGs in `clean_dir`, degrades each
/// and writes clean_XXXXX.png / hazy_XXXXX.png plus manifest.json into
/// `out_dir`. Pair i depends only on (seed, i).
Manifest make_dataset(const std::filesystem::path& clean_dir, int64_t count, uint64_t seed,
                      const std::filesystem::path& out_dir, int64_t patch = 64);

/// Loaded pair tensors, [N, 3, H, W] each.
struct PairTensors {
  torch::Tensor clean;
  torch::Tensor hazy;
};
PairTensors load_pairs(const Manifest& manifest);

}  // namespace ipc::haze
