#include "ipc/cli.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "ipc/checkpoint.hpp"
#include "ipc/errors.hpp"
#include "ipc/eval.hpp"
#include "ipc/haze.hpp"
#include "ipc/image_io.hpp"
#include "ipc/training.hpp"

namespace ipc::cli {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << text;
}

std::string frame_name(int64_t t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "iter_%02lld.png", static_cast<long long>(t));
  return buf;
}

// Decoding flags shared by dehaze, eval and sweep-T.
struct DecodeFlags {
  int64_t iterations = 8;
  std::string mode = "critic";
  std::string sample = "multinomial";
  std::string select = "topk";
  double temperature = 1.0;
  bool freeze_retained = false;
  uint64_t seed = 0;

  void attach(CLI::App* app, bool with_iterations) {
    if (with_iterations) app->add_option("--iters", iterations, "Number of decoding iterations T")->capture_default_str();
    app->add_option("--mode", mode, "Decoder")
        ->check(CLI::IsMember({"critic", "confidence", "nn", "oneshot"}))
        ->capture_default_str();
    app->add_option("--sample", sample, "Code sampling")
        ->check(CLI::IsMember({"multinomial", "argmax"}))
        ->capture_default_str();
    app->add_option("--select", select, "Mask selection from scores")
        ->check(CLI::IsMember({"topk", "stochastic"}))
        ->capture_default_str();
    app->add_option("--temperature", temperature, "Sampling temperature")->capture_default_str();
    app->add_flag("--freeze-retained", freeze_retained, "Keep codes at unmasked positions");
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
  }

  eval::EvalOptions options() const {
    eval::EvalOptions o;
    o.mode = eval::parse_mode(mode);
    o.seed = seed;
    o.decode.iterations = iterations;
    o.decode.sampling = sample == "argmax" ? infer::Sampling::kArgmax : infer::Sampling::kMultinomial;
    o.decode.select_mode = select == "stochastic" ? mask::SelectMode::kStochastic : mask::SelectMode::kTopK;
    o.decode.temperature = temperature;
    o.decode.freeze_retained = freeze_retained;
    return o;
  }
};

struct ScenesArgs {
  fs::path out;
  int64_t count = 16;
  int64_t size = 64;
  uint64_t seed = 0;
};

int cmd_scenes(const ScenesArgs& a, std::ostream& out, std::ostream& err) {
  require(a.count >= 1 && a.size >= 8, "scenes: need count >= 1 and size >= 8");
  fs::create_directories(a.out);
  for (int64_t i = 0; i < a.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%04lld.png", static_cast<long long>(i));
    image::write_png(a.out / name, haze::synth_clean_scene(a.size, a.size, haze::derive_seed(a.seed, i)));
  }
  err << "wrote " << a.count << " scenes to " << a.out.string() << '\n';
  out << nlohmann::json{{"scenes", a.count}, {"out", a.out.string()}}.dump() << '\n';
  return kExitOk;
}

struct SynthArgs {
  fs::path clean_dir;
  fs::path out;
  int64_t count = 0;
  uint64_t seed = 0;
  int64_t patch = 64;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  const auto manifest = haze::make_dataset(a.clean_dir, a.count, a.seed, a.out, a.patch);
  err << "synthesised " << manifest.entries.size() << " pairs into " << a.out.string() << '\n';
  out << nlohmann::json{{"pairs", manifest.entries.size()}, {"manifest", (a.out / "manifest.json").string()}}.dump()
      << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string stage;
  fs::path manifest;
  fs::path out;
  fs::path config;
  fs::path init;
  fs::path resume;
  fs::path metrics;
  std::optional<int64_t> steps;
  std::optional<uint64_t> seed;
  std::optional<double> lr;
  std::optional<int64_t> batch;
  int64_t log_every = 100;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  ModelConfig mcfg;
  TrainConfig tcfg;
  nlohmann::json file_doc = nlohmann::json::object();
  if (!a.config.empty()) {
    file_doc = parse_flat_config(read_text(a.config));
    apply_config(file_doc, mcfg, tcfg);
  }

  std::optional<ckpt::Archive> resume;
  net::IpcModel model{nullptr};
  if (!a.resume.empty()) {
    resume = ckpt::read_archive(a.resume);
    model = ckpt::restore_model(*resume);
    mcfg = model->config;
    // Archived settings, then the file, then flags.
    auto rest = file_doc;
    rest.erase("model");
    rest.erase("preset");
    tcfg = ckpt::train_config(*resume);
    ModelConfig ignored;
    apply_config(rest, ignored, tcfg);
  } else if (!a.init.empty()) {
    const auto archive = ckpt::read_archive(a.init);
    model = ckpt::restore_model(archive);
    mcfg = model->config;
    if (ckpt::stage(archive) == Stage::kVqgan) model->init_low_quality_encoder();
  }

  tcfg.stage = parse_stage(a.stage);
  if (a.steps) tcfg.max_steps = *a.steps;
  if (a.seed) tcfg.seed = *a.seed;
  if (a.lr) tcfg.learning_rate = *a.lr;
  if (a.batch) tcfg.batch_size = *a.batch;
  if (!model) model = net::make_model(mcfg, tcfg.seed);
  if (tcfg.stage != Stage::kVqgan && a.init.empty() && a.resume.empty()) {
    err << "warning: training stage " << to_string(tcfg.stage) << " from random weights (no --init)\n";
  }

  const auto manifest = haze::read_manifest(a.manifest);
  const auto pairs = haze::load_pairs(manifest);
  train::Batches data{pairs.clean, pairs.hazy};

  train::Trainer trainer(model, tcfg);
  if (resume) ckpt::restore_trainer_state(trainer, *resume);

  std::ofstream metrics_file;
  std::ostream* metrics = &out;
  if (!a.metrics.empty()) {
    if (a.metrics.has_parent_path()) fs::create_directories(a.metrics.parent_path());
    metrics_file.open(a.metrics, std::ios::app);
    if (!metrics_file) throw RuntimeFailure("cannot write " + a.metrics.string());
    metrics = &metrics_file;
  }
  *metrics << std::setprecision(8);
  bool header = false;
  err << "training " << to_string(tcfg.stage) << " from step " << trainer.step() << " to " << tcfg.max_steps << " on "
      << manifest.entries.size() << " pairs\n";
  trainer.run(data, [&](int64_t step, const train::Metrics& m) {
    if (!header) {
      *metrics << "step";
      for (const auto& [name, value] : m) *metrics << ',' << name;
      *metrics << '\n';
      header = true;
    }
    *metrics << step;
    for (const auto& [name, value] : m) *metrics << ',' << value;
    *metrics << '\n';
    if (a.log_every > 0 && step % a.log_every == 0) {
      err << "step " << step;
      for (const auto& [name, value] : m) err << ' ' << name << '=' << value;
      err << '\n';
    }
  });
  ckpt::save(a.out, trainer);
  err << "saved " << a.out.string() << " (" << ckpt::checkpoint_id(a.out) << ")\n";
  return kExitOk;
}

struct DehazeArgs {
  fs::path input;
  fs::path ckpt;
  fs::path output;
  fs::path trace;
  DecodeFlags decode;
};

int cmd_dehaze(const DehazeArgs& a, std::ostream& out, std::ostream& err) {
  auto model = ckpt::load_model(a.ckpt);
  model->eval();
  auto opts = a.decode.options();
  opts.decode.trace_images = !a.trace.empty();
  const auto hazy = image::read_png(a.input);
  const auto padded = eval::pad_reflect(hazy);

  auto gen = at::make_generator<at::CPUGeneratorImpl>(opts.seed);
  const auto result = eval::decode(model, padded.image.unsqueeze(0), opts.mode, opts.decode, gen);
  image::write_png(a.output, eval::crop(result.image[0], padded.height, padded.width));

  if (!a.trace.empty()) {
    fs::create_directories(a.trace);
    for (const auto& s : result.trace.steps) {
      image::write_png(a.trace / frame_name(s.t), eval::crop(s.image[0], padded.height, padded.width));
    }
    const nlohmann::json doc{{"iterations", opts.decode.iterations}, {"mode", a.decode.mode},
                             {"seed", opts.seed},                    {"steps", result.trace.to_json(0)}};
    write_text(a.trace / "trace.json", doc.dump(2) + "\n");
  }
  err << "dehazed " << a.input.string() << " -> " << a.output.string() << '\n';
  out << nlohmann::json{{"output", a.output.string()},
                        {"mode", a.decode.mode},
                        {"iterations", opts.decode.iterations},
                        {"seed", opts.seed},
                        {"checkpoint_id", ckpt::checkpoint_id(a.ckpt)}}
             .dump()
      << '\n';
  return kExitOk;
}

struct EvalArgs {
  fs::path manifest;
  fs::path ckpt;
  fs::path report;
  fs::path summary;
  int64_t ssim_window = 8;
  DecodeFlags decode;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  auto model = ckpt::load_model(a.ckpt);
  model->eval();
  auto opts = a.decode.options();
  opts.ssim_window = a.ssim_window;
  const auto manifest = haze::read_manifest(a.manifest);
  auto report = eval::evaluate(model, manifest, opts);
  report.checkpoint_id = ckpt::checkpoint_id(a.ckpt);

  if (a.report.empty()) {
    out << report.to_csv();
  } else {
    write_text(a.report, report.to_csv());
  }
  if (!a.summary.empty()) write_text(a.summary, report.summary().dump(2) + "\n");
  err << std::fixed << std::setprecision(4) << "eval " << report.mode << " T=" << report.iterations << ": psnr "
      << report.mean.psnr_db << " dB, ssim " << report.mean.ssim << ", code accuracy " << report.mean.code_accuracy
      << " over " << report.rows.size() << " images\n";
  return kExitOk;
}

struct SweepArgs {
  fs::path manifest;
  fs::path ckpt;
  fs::path report;
  std::vector<int64_t> values{3, 4, 6, 8, 10};
  int64_t ssim_window = 8;
  DecodeFlags decode;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  require(!a.values.empty(), "sweep-T: no values");
  auto model = ckpt::load_model(a.ckpt);
  model->eval();
  const auto manifest = haze::read_manifest(a.manifest);
  const auto id = ckpt::checkpoint_id(a.ckpt);

  std::ostringstream csv;
  csv << "T,psnr_db,ssim,code_accuracy,seed\n" << std::setprecision(10);
  for (const auto t : a.values) {
    auto opts = a.decode.options();
    opts.ssim_window = a.ssim_window;
    opts.decode.iterations = t;
    const auto report = eval::evaluate(model, manifest, opts);
    csv << t << ',' << report.mean.psnr_db << ',' << report.mean.ssim << ',' << report.mean.code_accuracy << ','
        << opts.seed << '\n';
    err << "T=" << t << " code accuracy " << report.mean.code_accuracy << " psnr " << report.mean.psnr_db << '\n';
  }
  if (a.report.empty()) {
    out << csv.str();
  } else {
    write_text(a.report, csv.str());
  }
  err << "checkpoint " << id << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Iterative predictor-critic code decoding for image dehazing", "ipc_dehaze"};
  app.require_subcommand(1);

  ScenesArgs scenes;
  auto* s_scenes = app.add_subcommand("scenes", "Render procedural clean scenes");
  s_scenes->add_option("--out", scenes.out, "Output directory")->required();
  s_scenes->add_option("--count", scenes.count, "Number of scenes")->capture_default_str();
  s_scenes->add_option("--size", scenes.size, "Side length in pixels")->capture_default_str();
  s_scenes->add_option("--seed", scenes.seed, "Random seed")->capture_default_str();

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Synthesise hazy/clean training pairs");
  s_synth->add_option("--clean-dir", synth.clean_dir, "Directory of clean PNGs")->required();
  s_synth->add_option("--out", synth.out, "Output directory")->required();
  s_synth->add_option("--count", synth.count, "Number of pairs")->required();
  s_synth->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  s_synth->add_option("--patch", synth.patch, "Patch side length")->capture_default_str();

  TrainArgs train;
  auto* s_train = app.add_subcommand("train", "Run one training stage");
  s_train->add_option("--stage", train.stage, "Stage")->required()->check(CLI::IsMember({"vqgan", "predictor", "critic"}));
  s_train->add_option("--manifest", train.manifest, "Dataset manifest.json")->required();
  s_train->add_option("--out", train.out, "Checkpoint to write")->required();
  s_train->add_option("--config", train.config, "Flat key = value config file");
  auto* init_opt = s_train->add_option("--init", train.init, "Start from the weights of a checkpoint");
  s_train->add_option("--resume", train.resume, "Resume a checkpoint of the same stage")->excludes(init_opt);
  s_train->add_option("--metrics", train.metrics, "Append per-step CSV metrics here (default stdout)");
  s_train->add_option("--steps", train.steps, "Total step count");
  s_train->add_option("--seed", train.seed, "Random seed");
  s_train->add_option("--lr", train.lr, "Learning rate");
  s_train->add_option("--batch", train.batch, "Batch size");
  s_train->add_option("--log-every", train.log_every, "Progress log interval")->capture_default_str();

  DehazeArgs dehaze;
  auto* s_dehaze = app.add_subcommand("dehaze", "Dehaze one PNG");
  s_dehaze->add_option("--input", dehaze.input, "Hazy PNG")->required();
  s_dehaze->add_option("--ckpt", dehaze.ckpt, "Checkpoint")->required();
  s_dehaze->add_option("--output", dehaze.output, "Output PNG")->required();
  s_dehaze->add_option("--trace", dehaze.trace, "Directory for per-iteration frames and trace.json");
  dehaze.decode.attach(s_dehaze, true);

  EvalArgs ev;
  auto* s_eval = app.add_subcommand("eval", "Evaluate on a manifest");
  s_eval->add_option("--manifest", ev.manifest, "Dataset manifest.json")->required();
  s_eval->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  s_eval->add_option("--report", ev.report, "CSV report path (default stdout)");
  s_eval->add_option("--summary", ev.summary, "JSON summary path");
  s_eval->add_option("--ssim-window", ev.ssim_window, "SSIM window size")->capture_default_str();
  ev.decode.attach(s_eval, true);

  SweepArgs sweep;
  auto* s_sweep = app.add_subcommand("sweep-T", "Evaluate over several iteration counts");
  s_sweep->add_option("--manifest", sweep.manifest, "Dataset manifest.json")->required();
  s_sweep->add_option("--ckpt", sweep.ckpt, "Checkpoint")->required();
  s_sweep->add_option("--values", sweep.values, "Comma-separated T values")->delimiter(',')->capture_default_str();
  s_sweep->add_option("--report", sweep.report, "CSV report path (default stdout)");
  s_sweep->add_option("--ssim-window", sweep.ssim_window, "SSIM window size")->capture_default_str();
  sweep.decode.attach(s_sweep, false);

  std::vector<std::string> argv_store{"ipc_dehaze"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*s_scenes) return cmd_scenes(scenes, out, err);
    if (*s_synth) return cmd_synth(synth, out, err);
    if (*s_train) return cmd_train(train, out, err);
    if (*s_dehaze) return cmd_dehaze(dehaze, out, err);
    if (*s_eval) return cmd_eval(ev, out, err);
    if (*s_sweep) return cmd_sweep(sweep, out, err);
  } catch (const ContractViolation& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace ipc::cli
