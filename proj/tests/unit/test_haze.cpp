#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ipc/errors.hpp"
#include "ipc/haze.hpp"
#include "ipc/image_io.hpp"
#include "test_support.hpp"

using namespace ipc;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path make_sources(const std::string& name, int count) {
  const auto dir = testing::scratch_dir(name);
  for (int i = 0; i < count; ++i) {
    image::write_png(dir / ("src_" + std::to_string(i) + ".png"), haze::synth_clean_scene(80, 96, 100 + i));
  }
  return dir;
}

}  // namespace

TEST_CASE("synth_depth range, determinism and mean") {
  const auto d = haze::synth_depth(32, 48, 7);
  CHECK((d.sizes().vec() == std::vector<int64_t>{32, 48}));
  CHECK(d.min().item<double>() >= 0.0);
  CHECK(d.max().item<double>() <= 1.0);
  CHECK(torch::equal(d, haze::synth_depth(32, 48, 7)));
  double total = 0.0;
  for (uint64_t s = 0; s < 120; ++s) total += haze::synth_depth(32, 32, s).mean().item<double>();
  const double mean = total / 120.0;
  CHECK(mean >= 0.3);
  CHECK(mean <= 0.7);
}

TEST_CASE("apply_scattering examples") {
  const auto clean = torch::rand({3, 8, 8});
  haze::HazeParams p;
  p.airlight = {0.8, 0.9, 1.0};
  p.beta_scatter = 0.0;
  CHECK(torch::allclose(haze::apply_scattering(clean, haze::synth_depth(8, 8, 1), p), clean));
  p.beta_scatter = 2.0;
  CHECK(torch::allclose(haze::apply_scattering(clean, torch::zeros({8, 8}), p), clean));

  p.beta_scatter = 200.0;
  const auto far = haze::apply_scattering(clean, torch::ones({8, 8}), p);
  for (int c = 0; c < 3; ++c) CHECK(torch::allclose(far[c], torch::full({8, 8}, static_cast<float>(p.airlight[c]))));

  p.airlight = {1.0, 1.0, 1.0};
  p.beta_scatter = std::log(2.0);
  const auto half = haze::apply_scattering(torch::full({3, 2, 2}, 0.5f), torch::ones({2, 2}), p);
  CHECK(torch::allclose(half, torch::full({3, 2, 2}, 0.75f), 1e-6, 1e-6));

  p.airlight = {0.5, 1.0, 1.0};
  CHECK_THROWS_AS(haze::apply_scattering(clean, torch::ones({8, 8}), p), ContractViolation);
  p.airlight = {1.0, 1.0, 1.0};
  p.beta_scatter = -1.0;
  CHECK_THROWS_AS(haze::apply_scattering(clean, torch::ones({8, 8}), p), ContractViolation);
}

TEST_CASE("degrade_extras examples") {
  const auto img = torch::rand({3, 8, 8});
  haze::HazeParams neutral;
  CHECK(torch::equal(haze::degrade_extras(img, neutral), img));
  haze::HazeParams g;
  g.gamma = 2.0;
  CHECK(torch::allclose(haze::degrade_extras(torch::full({3, 4, 4}, 0.5f), g), torch::full({3, 4, 4}, 0.25f)));
  haze::HazeParams loud;
  loud.noise_sigma = 0.5;
  loud.color_cast = {1.1, 0.9, 1.1};
  const auto out = haze::degrade_extras(img, loud);
  CHECK(out.min().item<double>() >= 0.0);
  CHECK(out.max().item<double>() <= 1.0);
}

TEST_CASE("sample_params stays inside the training ranges") {
  for (uint64_t s = 0; s < 200; ++s) {
    const auto p = haze::sample_params(s);
    for (double a : p.airlight) CHECK((a >= 0.7 && a <= 1.0));
    CHECK((p.beta_scatter >= 0.5 && p.beta_scatter <= 3.0));
    CHECK((p.gamma >= 0.8 && p.gamma <= 1.2));
    for (double c : p.color_cast) CHECK((c >= 0.9 && c <= 1.1));
    CHECK((p.noise_sigma >= 0.0 && p.noise_sigma <= 0.02));
  }
}

TEST_CASE("make_dataset with count 0 writes no images") {
  const auto src = make_sources("haze_src0", 1);
  const auto out = testing::scratch_dir("haze_out0");
  const auto m = haze::make_dataset(src, 0, 1, out);
  CHECK(m.entries.empty());
  for (const auto& e : fs::directory_iterator(out)) CHECK(e.path().extension() != ".png");
}

TEST_CASE("make_dataset is deterministic and recomputable") {
  const auto src = make_sources("haze_src", 3);
  const auto a = testing::scratch_dir("haze_a");
  const auto b = testing::scratch_dir("haze_b");
  const auto ma = haze::make_dataset(src, 6, 11, a, 32);
  haze::make_dataset(src, 6, 11, b, 32);
  CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
  for (const auto& e : ma.entries) CHECK(slurp(a / e.hazy_path) == slurp(b / e.hazy_path));

  const auto back = haze::read_manifest(a / "manifest.json");
  REQUIRE(back.entries.size() == 6);
  for (const auto& e : back.entries) {
    const auto clean = image::read_png(back.root / e.clean_path);
    const auto hazy = image::read_png(back.root / e.hazy_path);
    CHECK((clean.sizes().vec() == std::vector<int64_t>{3, 32, 32}));
    const auto expected = image::to_8bit_levels(haze::make_hazy(clean, e.params));
    CHECK(torch::equal(hazy, expected));
  }
}

TEST_CASE("make_dataset rejects an empty source directory") {
  const auto empty = testing::scratch_dir("haze_empty");
  CHECK_THROWS_AS(haze::make_dataset(empty, 3, 0, testing::scratch_dir("haze_empty_out")), RuntimeFailure);
}

TEST_CASE("png round trip keeps 8-bit levels") {
  const auto dir = testing::scratch_dir("png");
  const auto img = torch::rand({3, 5, 7});
  image::write_png(dir / "x.png", img);
  CHECK(torch::equal(image::read_png(dir / "x.png"), image::to_8bit_levels(img)));
  CHECK_THROWS(image::read_png(dir / "missing.png"));
}
