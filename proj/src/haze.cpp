#include "ipc/haze.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "ipc/errors.hpp"
#include "ipc/image_io.hpp"

namespace ipc::haze {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

void to_json(nlohmann::json& j, const HazeParams& p) {
  j = {{"airlight", p.airlight}, {"beta_scatter", p.beta_scatter}, {"depth_seed", p.depth_seed},
       {"gamma", p.gamma},       {"color_cast", p.color_cast},     {"noise_sigma", p.noise_sigma},
       {"noise_seed", p.noise_seed}};
}

void from_json(const nlohmann::json& j, HazeParams& p) {
  j.at("airlight").get_to(p.airlight);
  j.at("beta_scatter").get_to(p.beta_scatter);
  j.at("depth_seed").get_to(p.depth_seed);
  j.at("gamma").get_to(p.gamma);
  j.at("color_cast").get_to(p.color_cast);
  j.at("noise_sigma").get_to(p.noise_sigma);
  j.at("noise_seed").get_to(p.noise_seed);
}

uint64_t derive_seed(uint64_t seed, uint64_t index) {
  // splitmix64 finaliser
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

torch::Tensor synth_depth(int64_t height, int64_t width, uint64_t seed) {
  require(height >= 1 && width >= 1, "synth_depth: empty size");
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  const auto coarse = torch::rand({1, 1, 4, 4}, gen);
  const auto smooth = F::interpolate(coarse, F::InterpolateFuncOptions()
                                                 .size(std::vector<int64_t>{height, width})
                                                 .mode(torch::kBilinear)
                                                 .align_corners(true))
                          .reshape({height, width});
  const auto ramp = torch::linspace(1.0, 0.0, height).unsqueeze(1).expand({height, width});
  return (0.6 * ramp + 0.4 * smooth).clamp(0.0, 1.0).contiguous();
}

torch::Tensor transmission(const torch::Tensor& depth, double beta_scatter) {
  require(beta_scatter >= 0.0, "transmission: beta_scatter must be nonnegative");
  return torch::exp(-beta_scatter * depth);
}

torch::Tensor apply_scattering(const torch::Tensor& clean, const torch::Tensor& depth, const HazeParams& params) {
  require(clean.dim() == 3 && clean.size(0) == 3, "apply_scattering: expected a [3, H, W] image");
  require(depth.dim() == 2 && depth.size(0) == clean.size(1) && depth.size(1) == clean.size(2),
          "apply_scattering: depth map must be [H, W]");
  require(depth.min().item<double>() >= 0.0, "apply_scattering: depth must be nonnegative");
  for (double a : params.airlight) require(a >= 0.7 && a <= 1.0, "apply_scattering: airlight outside [0.7, 1]");
  const auto t = transmission(depth.to(clean.dtype()), params.beta_scatter).unsqueeze(0);
  const auto a = torch::tensor(std::vector<double>(params.airlight.begin(), params.airlight.end()), clean.dtype())
                     .reshape({3, 1, 1});
  return (clean * t + a * (1.0 - t)).clamp(0.0, 1.0);
}

torch::Tensor degrade_extras(const torch::Tensor& image, const HazeParams& params) {
  require(image.dim() == 3 && image.size(0) == 3, "degrade_extras: expected a [3, H, W] image");
  require(params.gamma > 0.0 && params.noise_sigma >= 0.0, "degrade_extras: invalid gamma or noise level");
  const auto cast = torch::tensor(std::vector<double>(params.color_cast.begin(), params.color_cast.end()),
                                  image.dtype())
                        .reshape({3, 1, 1});
  auto out = image.clamp(0.0, 1.0).pow(params.gamma) * cast;
  if (params.noise_sigma > 0.0) {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(params.noise_seed);
    out = out + params.noise_sigma * torch::randn(image.sizes(), gen, image.options());
  }
  return out.clamp(0.0, 1.0);
}

torch::Tensor make_hazy(const torch::Tensor& clean, const HazeParams& params) {
  const auto depth = synth_depth(clean.size(1), clean.size(2), params.depth_seed);
  return degrade_extras(apply_scattering(clean, depth, params), params);
}

HazeParams sample_params(uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  HazeParams p;
  const double base = uniform(0.7, 1.0);
  for (auto& a : p.airlight) a = std::clamp(base + uniform(-0.03, 0.03), 0.7, 1.0);
  p.beta_scatter = uniform(0.5, 3.0);
  p.gamma = uniform(0.8, 1.2);
  for (auto& c : p.color_cast) c = uniform(0.9, 1.1);
  p.noise_sigma = uniform(0.0, 0.02);
  p.depth_seed = derive_seed(seed, 1);
  p.noise_seed = derive_seed(seed, 2);
  return p;
}

torch::Tensor synth_clean_scene(int64_t height, int64_t width, uint64_t seed) {
  require(height >= 8 && width >= 8, "synth_clean_scene: size must be at least 8x8");
  std::mt19937_64 rng(seed);
  const auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  using Rgb = std::array<double, 3>;

  auto img = torch::zeros({3, height, width}, torch::kFloat64);
  auto px = img.accessor<double, 3>();
  const auto put = [&px](int64_t y, int64_t x, const Rgb& c) {
    for (int ch = 0; ch < 3; ++ch) px[ch][y][x] = c[static_cast<size_t>(ch)];
  };

  const auto horizon = static_cast<int64_t>(static_cast<double>(height) * uniform(0.3, 0.55));
  const Rgb sky_top{uniform(0.25, 0.5), uniform(0.45, 0.7), uniform(0.8, 1.0)};
  const Rgb sky_low{uniform(0.7, 0.9), uniform(0.8, 0.95), uniform(0.9, 1.0)};
  const std::array<Rgb, 3> ground_palette{Rgb{0.25, 0.5, 0.2}, Rgb{0.5, 0.4, 0.25}, Rgb{0.35, 0.35, 0.38}};
  Rgb ground = ground_palette[rng() % ground_palette.size()];
  for (auto& c : ground) c = std::clamp(c + uniform(-0.08, 0.08), 0.0, 1.0);
  const double fx = uniform(0.1, 0.5), fy = uniform(0.2, 0.8), phase = uniform(0.0, 6.28);

  for (int64_t y = 0; y < height; ++y) {
    for (int64_t x = 0; x < width; ++x) {
      Rgb c;
      if (y < horizon) {
        const double s = static_cast<double>(y) / static_cast<double>(std::max<int64_t>(1, horizon));
        for (size_t k = 0; k < 3; ++k) c[k] = sky_top[k] * (1.0 - s) + sky_low[k] * s;
      } else {
        const double near = static_cast<double>(y - horizon) / static_cast<double>(height - horizon);
        const double tex = 0.06 * std::sin(fx * static_cast<double>(x) + phase) * std::sin(fy * static_cast<double>(y));
        for (size_t k = 0; k < 3; ++k) c[k] = ground[k] * (0.8 + 0.4 * near) + tex;
      }
      put(y, x, c);
    }
  }

  // Structures standing on the horizon, some with window grids.
  const int64_t n_blocks = 3 + static_cast<int64_t>(rng() % 4);
  for (int64_t b = 0; b < n_blocks; ++b) {
    const auto bw = std::max<int64_t>(3, static_cast<int64_t>(static_cast<double>(width) * uniform(0.08, 0.3)));
    const auto x0 = static_cast<int64_t>(uniform(0.0, static_cast<double>(width - bw)));
    const auto top = std::max<int64_t>(0, horizon - static_cast<int64_t>(static_cast<double>(height) * uniform(0.05, 0.35)));
    const auto bottom = std::min<int64_t>(height, horizon + static_cast<int64_t>(static_cast<double>(height) * uniform(0.0, 0.15)));
    const Rgb color{uniform(0.15, 0.85), uniform(0.15, 0.85), uniform(0.15, 0.85)};
    const bool windows = uniform(0.0, 1.0) < 0.6;
    for (int64_t y = top; y < bottom; ++y) {
      for (int64_t x = x0; x < x0 + bw; ++x) {
        Rgb c = color;
        if (windows && (y - top) % 6 >= 2 && (y - top) % 6 < 4 && (x - x0) % 5 >= 1 && (x - x0) % 5 < 3) {
          for (auto& v : c) v *= 0.45;
        }
        put(y, x, c);
      }
    }
  }

  // Rounded vegetation in front.
  const int64_t n_trees = 2 + static_cast<int64_t>(rng() % 3);
  for (int64_t t = 0; t < n_trees; ++t) {
    const double cx = uniform(0.0, static_cast<double>(width));
    const double cy = static_cast<double>(horizon) + uniform(0.0, 0.3) * static_cast<double>(height - horizon);
    const double rx = static_cast<double>(width) * uniform(0.05, 0.15);
    const double ry = static_cast<double>(height) * uniform(0.06, 0.18);
    const Rgb color{uniform(0.05, 0.3), uniform(0.3, 0.6), uniform(0.05, 0.25)};
    for (int64_t y = 0; y < height; ++y) {
      for (int64_t x = 0; x < width; ++x) {
        const double dx = (static_cast<double>(x) - cx) / rx, dy = (static_cast<double>(y) - cy) / ry;
        const double r2 = dx * dx + dy * dy;
        if (r2 <= 1.0) {
          Rgb c = color;
          for (auto& v : c) v *= 0.75 + 0.35 * (1.0 - r2);
          put(y, x, c);
        }
      }
    }
  }
  return img.clamp(0.0, 1.0).to(torch::kFloat32);
}

nlohmann::json manifest_to_json(const Manifest& manifest) {
  auto arr = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    arr.push_back({{"clean_path", e.clean_path}, {"hazy_path", e.hazy_path}, {"params", e.params}, {"seed", e.seed}});
  }
  return arr;
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open manifest '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeFailure("malformed manifest '" + path.string() + "': " + e.what());
  }
  Manifest m;
  m.root = path.parent_path();
  for (const auto& item : doc) {
    ManifestEntry e;
    e.clean_path = item.at("clean_path").get<std::string>();
    e.hazy_path = item.at("hazy_path").get<std::string>();
    if (item.contains("params")) e.params = item.at("params").get<HazeParams>();
    e.seed = item.value("seed", uint64_t{0});
    m.entries.push_back(std::move(e));
  }
  return m;
}

Manifest make_dataset(const fs::path& clean_dir, int64_t count, uint64_t seed, const fs::path& out_dir,
                      int64_t patch) {
  require(count >= 0, "make_dataset: negative count");
  require(patch >= 8, "make_dataset: patch must be at least 8");
  std::vector<fs::path> sources;
  if (fs::is_directory(clean_dir)) {
    for (const auto& entry : fs::directory_iterator(clean_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") sources.push_back(entry.path());
    }
  }
  if (sources.empty()) throw RuntimeFailure("no PNG images found in '" + clean_dir.string() + "'");
  std::sort(sources.begin(), sources.end());

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw RuntimeFailure("cannot create output directory '" + out_dir.string() + "'");

  std::vector<torch::Tensor> images;
  images.reserve(sources.size());
  for (const auto& p : sources) {
    auto img = image::read_png(p);
    require(img.size(1) >= patch && img.size(2) >= patch, "make_dataset: source '" + p.string() + "' smaller than patch");
    images.push_back(std::move(img));
  }

  Manifest manifest;
  manifest.root = out_dir;
  for (int64_t i = 0; i < count; ++i) {
    const uint64_t pair_seed = derive_seed(seed, static_cast<uint64_t>(i));
    std::mt19937_64 rng(pair_seed);
    const auto& src = images[rng() % images.size()];
    const int64_t y0 = static_cast<int64_t>(rng() % static_cast<uint64_t>(src.size(1) - patch + 1));
    const int64_t x0 = static_cast<int64_t>(rng() % static_cast<uint64_t>(src.size(2) - patch + 1));
    const auto clean = src.slice(1, y0, y0 + patch).slice(2, x0, x0 + patch).contiguous();

    ManifestEntry e;
    e.seed = pair_seed;
    e.params = sample_params(derive_seed(pair_seed, 7));
    char name[32];
    std::snprintf(name, sizeof(name), "clean_%05lld.png", static_cast<long long>(i));
    e.clean_path = name;
    std::snprintf(name, sizeof(name), "hazy_%05lld.png", static_cast<long long>(i));
    e.hazy_path = name;

    image::write_png(out_dir / e.clean_path, clean);
    image::write_png(out_dir / e.hazy_path, make_hazy(clean, e.params));
    manifest.entries.push_back(std::move(e));
  }

  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw RuntimeFailure("cannot write manifest in '" + out_dir.string() + "'");
  out << manifest_to_json(manifest).dump(2) << '\n';
  return manifest;
}

PairTensors load_pairs(const Manifest& manifest) {
  require(!manifest.entries.empty(), "load_pairs: empty manifest");
  std::vector<torch::Tensor> clean, hazy;
  for (const auto& e : manifest.entries) {
    clean.push_back(image::read_png(manifest.root / e.clean_path));
    hazy.push_back(image::read_png(manifest.root / e.hazy_path));
  }
  return {torch::stack(clean), torch::stack(hazy)};
}

}  // namespace ipc::haze
