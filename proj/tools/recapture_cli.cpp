#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "recapture/error.hpp"
#include "recapture/formats.hpp"
#include "recapture/inference.hpp"
#include "recapture/metrics.hpp"
#include "recapture/puppet.hpp"
#include "recapture/service.hpp"
#include "recapture/trainer.hpp"

namespace fs = std::filesystem;
using namespace recapture;

namespace {

struct Common {
  std::optional<uint64_t> seed;
  std::string config;
  std::string checkpoint;
};

nlohmann::json read_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  if (!fs::exists(path)) fail(ErrorKind::kNotFound, "config not found: " + path);
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidArgument, "config " + path + " is not valid JSON: " + e.what());
  }
}

std::string checkpoint_path(const Common& common) {
  if (!common.checkpoint.empty()) return common.checkpoint;
  if (const char* env = std::getenv("RECAPTURE_CHECKPOINT")) return env;
  fail(ErrorKind::kInvalidArgument, "no checkpoint given (--checkpoint or RECAPTURE_CHECKPOINT)");
}

SourceSample load_source(const std::string& image, const std::string& layout, const std::string& pose) {
  return {load_image(image), load_layout(layout), load_pose(pose)};
}

void cmd_make_dataset(const Common& common, const std::string& out, int count, int height, int width) {
  const auto cfg = read_config(common.config);
  PuppetConfig pc;
  pc.height = cfg.value("height", height);
  pc.width = cfg.value("width", width);
  pc.crop_probability = cfg.value("crop_probability", pc.crop_probability);
  pc.stripe_probability = cfg.value("stripe_probability", pc.stripe_probability);
  pc.heatmap_radius = cfg.value("heatmap_radius", pc.heatmap_radius);
  const auto manifest = write_dataset(cfg.value("count", count), common.seed.value_or(cfg.value("seed", 0ull)), out, pc);
  std::cout << nlohmann::json{{"pairs", manifest.at("pairs").size()}, {"directory", out}}.dump() << "\n";
}

void cmd_train(const Common& common, const std::string& data, const std::string& log, std::optional<int> steps,
               std::optional<int> batch, const std::string& variant, bool resume, int checkpoint_every, bool quiet) {
  auto cfg = read_config(common.config);
  if (!data.empty()) cfg["train_data"] = data;
  if (common.seed) cfg["seed"] = *common.seed;
  if (steps) cfg["steps"] = *steps;
  if (batch) cfg["batch_size"] = *batch;
  if (!variant.empty()) cfg["variant"] = variant;
  const auto ckpt = checkpoint_path(common);

  std::unique_ptr<Trainer> trainer;
  if (resume && fs::exists(ckpt)) {
    trainer = Trainer::load(ckpt);
  } else {
    trainer = std::make_unique<Trainer>(TrainConfig::from_json(cfg));
  }
  const auto& config = trainer->config();
  if (config.train_data.empty()) fail(ErrorKind::kInvalidArgument, "no training data (--data or train_data in config)");
  const auto train = load_compact(config.train_data, "train");
  if (train.empty()) fail(ErrorKind::kInvalidArgument, "dataset has no training pairs: " + config.train_data);
  std::vector<CompactPair> test;
  if (config.eval_every > 0) test = load_compact(config.test_data.empty() ? config.train_data : config.test_data, "test");

  TrainRunOptions options;
  options.log_path = log;
  options.checkpoint_path = ckpt;
  options.checkpoint_every = checkpoint_every;
  if (!quiet) {
    options.on_step = [&](const LossRecord& r) {
      if (r.step % 50 == 0 || r.step + 1 == config.steps) {
        std::cerr << "step " << r.step << " L_G " << r.values.at("L_G") << " L_1 " << r.values.at("L_1") << "\n";
      }
    };
  }
  run_training(*trainer, train, test, options);
  std::cout << nlohmann::json{{"steps", trainer->step()}, {"checkpoint", ckpt}}.dump() << "\n";
}

void cmd_evaluate(const Common& common, const std::string& data, const std::string& split, const std::string& out) {
  const auto ckpt = checkpoint_path(common);
  auto trainer = Trainer::load(ckpt);
  std::string dir = data;
  if (dir.empty()) dir = trainer->config().test_data.empty() ? trainer->config().train_data : trainer->config().test_data;
  if (dir.empty()) fail(ErrorKind::kInvalidArgument, "no dataset given (--data)");
  const auto test = load_compact(dir, split);
  if (test.empty()) fail(ErrorKind::kInvalidArgument, "no '" + split + "' pairs in " + dir);
  if (split != "train") check_disjoint(load_compact(dir, "train"), test);
  const auto report = trainer->evaluate(test).to_json();
  if (!out.empty()) write_file(out, dump_json(report));
  std::cout << report.dump() << "\n";
}

void cmd_generate(const Common& common, const std::string& image, const std::string& layout,
                  const std::string& pose, const std::string& target_pose, const std::string& out,
                  const std::string& layout_out) {
  auto model = RecaptureModel::load(checkpoint_path(common));
  const auto raw = load_source(image, layout, pose);
  const auto source = model->normalize(raw);
  const auto target = rescale_pose(load_pose(target_pose), raw.image.height(), raw.image.width(), model->height(),
                                   model->width());
  const auto predicted = model->predict_layout(source, target);
  const auto rendered = model->render(source, predicted, target);
  save_image(out, rendered);
  if (!layout_out.empty()) save_layout(layout_out, predicted);
  std::cout << nlohmann::json{{"output", out}, {"l1_to_source", mean_l1(rendered, source.image)}}.dump() << "\n";
}

void cmd_video(const Common& common, const std::string& image, const std::string& layout, const std::string& pose,
               const std::string& poses_dir, const std::string& out) {
  auto model = RecaptureModel::load(checkpoint_path(common));
  const auto raw = load_source(image, layout, pose);
  const auto source = model->normalize(raw);
  if (!fs::is_directory(poses_dir)) fail(ErrorKind::kNotFound, "pose directory not found: " + poses_dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(poses_dir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<PoseKeypoints> poses;
  for (const auto& f : files) {
    poses.push_back(rescale_pose(load_pose(f), raw.image.height(), raw.image.width(), model->height(), model->width()));
  }
  fs::create_directories(out);
  recapture_video(*model, source, poses, [&](size_t i, const PortraitImage& frame) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05zu.png", i);
    save_image(fs::path(out) / name, frame);
  });
  std::cout << nlohmann::json{{"frames", poses.size()}, {"directory", out}}.dump() << "\n";
}

void cmd_serve(const Common& common, const std::string& host, int port, const std::string& data_dir) {
  ServiceOptions options;
  options.host = host;
  options.port = port;
  options.data_dir = data_dir;
  if (options.data_dir.empty()) {
    const char* env = std::getenv("RECAPTURE_DATA_DIR");
    options.data_dir = env ? env : "recapture_sessions";
  }
  options.checkpoint = common.checkpoint;
  if (options.checkpoint.empty()) {
    if (const char* env = std::getenv("RECAPTURE_CHECKPOINT")) options.checkpoint = env;
  }
  options.seed = common.seed.value_or(0);
  run_service(options);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pose-guided portrait recapture: datasets, training, evaluation, generation and the HTTP service."};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--seed", common.seed, "random seed");
  app.add_option("--config", common.config, "JSON configuration file");
  app.add_option("--checkpoint", common.checkpoint, "checkpoint path (default: $RECAPTURE_CHECKPOINT)");

  std::string out, data, log, variant, split = "test", image, layout, pose, target_pose, poses_dir, layout_out;
  std::string host = "127.0.0.1", data_dir;
  int count = 100, height = 64, width = 64, port = 8080, checkpoint_every = 0;
  std::optional<int> steps, batch;
  bool resume = false, quiet = false;

  auto* make = app.add_subcommand("make-dataset", "write a synthetic paired dataset");
  make->add_option("--out", out, "output directory")->required();
  make->add_option("--count", count, "number of pairs");
  make->add_option("--height", height, "image height");
  make->add_option("--width", width, "image width");

  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  train->add_option("--data", data, "dataset directory");
  train->add_option("--log", log, "JSON-lines metrics log");
  train->add_option("--steps", steps, "total training steps");
  train->add_option("--batch", batch, "batch size");
  train->add_option("--variant", variant, "full | basic | basic+sat | basic+lgr");
  train->add_option("--checkpoint-every", checkpoint_every, "save every k steps");
  train->add_flag("--resume", resume, "continue from --checkpoint if it exists");
  train->add_flag("--quiet", quiet, "no progress output");

  auto* eval = app.add_subcommand("evaluate", "score a checkpoint on a dataset split");
  eval->add_option("--data", data, "dataset directory");
  eval->add_option("--split", split, "split to score");
  eval->add_option("--out", out, "write the report here as JSON");

  auto* gen = app.add_subcommand("generate", "recapture one source sample into a target pose");
  gen->add_option("--image", image, "source image PNG")->required();
  gen->add_option("--layout", layout, "source layout PNG")->required();
  gen->add_option("--pose", pose, "source pose JSON")->required();
  gen->add_option("--target-pose", target_pose, "target pose JSON")->required();
  gen->add_option("--out", out, "output image PNG")->required();
  gen->add_option("--layout-out", layout_out, "also write the predicted layout");

  auto* video = app.add_subcommand("recapture-video", "recapture a source sample along a pose sequence");
  video->add_option("--image", image, "source image PNG")->required();
  video->add_option("--layout", layout, "source layout PNG")->required();
  video->add_option("--pose", pose, "source pose JSON")->required();
  video->add_option("--poses", poses_dir, "directory of pose JSON files, taken in name order")->required();
  video->add_option("--out", out, "frame directory")->required();

  auto* serve = app.add_subcommand("serve", "start the HTTP session service");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port");
  serve->add_option("--data-dir", data_dir, "session store (default: $RECAPTURE_DATA_DIR)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << nlohmann::json{{"error", "usage"}, {"message", e.what()}}.dump() << "\n";
    std::cerr << app.help();
    return 2;
  }

  try {
    if (*make) cmd_make_dataset(common, out, count, height, width);
    if (*train) cmd_train(common, data, log, steps, batch, variant, resume, checkpoint_every, quiet);
    if (*eval) cmd_evaluate(common, data, split, out);
    if (*gen) cmd_generate(common, image, layout, pose, target_pose, out, layout_out);
    if (*video) cmd_video(common, image, layout, pose, poses_dir, out);
    if (*serve) cmd_serve(common, host, port, data_dir);
  } catch (const Error& e) {
    std::cerr << nlohmann::json{{"error", std::string(to_string(e.kind()))}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
