// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry point. Every subcommand is a thin shell over library
// operations; exit codes: 0 success, 1 usage error, 2 data/validation error,
// 3 runtime failure. Diagnostics go to stderr, machine-readable output to
// files only.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "wcdnet/data.h"
#include "wcdnet/report.h"
#include "wcdnet/train.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wcdnet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

// Data/validation problems (bad inputs, missing files, malformed configs)
// surface as invalid_argument or filesystem errors from the library.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open file: " + path);
  std::string s((std::istreambuf_iterator<char>(f)),
                std::istreambuf_iterator<char>());
  return s;
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError("config " + path + ": " + e.what());
  }
}

uint64_t resolve_seed(std::optional<uint64_t> flag, uint64_t fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv("WCDNET_SEED")) return std::stoull(env);
  return fallback;
}

std::string resolve_out(std::string flag_value, const std::string& fallback) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("WCDNET_OUT")) return env;
  return fallback;
}

SyntheticSpec synthetic_from_json(const json& j) {
  SyntheticSpec s;
  s.image_size = j.value("image_size", s.image_size);
  s.num_change_classes = j.value("num_change_classes", s.num_change_classes);
  s.num_pairs = j.value("num_pairs", s.num_pairs);
  s.unchanged_fraction = j.value("unchanged_fraction", s.unchanged_fraction);
  s.illumination_jitter = j.value("illumination_jitter", s.illumination_jitter);
  s.distractor_count = j.value("distractor_count", s.distractor_count);
  s.shadow = j.value("shadow", s.shadow);
  s.seed = j.value("seed", s.seed);
  return s;
}

ModelConfig model_from_config(const json& cfg) {
  if (cfg.contains("model")) return ModelConfig::from_json(cfg["model"].dump());
  return ModelConfig{};
}

TrainConfig train_from_config(const json& cfg) {
  if (cfg.contains("train")) return TrainConfig::from_json(cfg["train"].dump());
  return TrainConfig{};
}

DatasetManifest load_dataset(const std::string& dir) {
  try {
    return load_manifest(dir);
  } catch (const std::exception& e) {
    throw DataError(std::string("dataset ") + dir + ": " + e.what());
  }
}

void write_run_record(const std::string& out_dir, const std::string& data,
                      const std::string& val, const std::string& stage,
                      const std::string& checkpoint) {
  json j{{"data", data}, {"val", val}, {"stage", stage},
         {"best_checkpoint", checkpoint}};
  std::ofstream((fs::path(out_dir) / "run.json").string()) << j.dump(2) << "\n";
}

struct CommonDataArgs {
  std::string data, val;
  double val_fraction = 0.2;
};

// Returns train/val manifests; splits the tail off when no --val is given.
std::pair<DatasetManifest, DatasetManifest> resolve_splits(
    const CommonDataArgs& a) {
  DatasetManifest train = load_dataset(a.data);
  if (!a.val.empty()) return {train, load_dataset(a.val)};
  return split_manifest(train, a.val_fraction);
}

int run(int argc, char** argv) {
  CLI::App app{"Weakly supervised change detection: siamese U-Net with a "
               "change segmentation/classification head and CRF refinement"};
  app.require_subcommand(1);
  argv = app.ensure_utf8(argv);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Render the synthetic dataset");
  std::string gen_spec, gen_out, gen_config;
  std::optional<uint64_t> gen_seed;
  gen->add_option("--spec", gen_spec, "Synthetic spec JSON file");
  gen->add_option("--config", gen_config, "Alias for --spec");
  gen->add_option("--out", gen_out, "Output dataset directory");
  gen->add_option("--seed", gen_seed, "Generation seed override");
  gen->callback([&] {
    const std::string cfg_path = gen_spec.empty() ? gen_config : gen_spec;
    SyntheticSpec spec = synthetic_from_json(load_config(cfg_path));
    spec.seed = resolve_seed(gen_seed, spec.seed);
    const std::string out = resolve_out(gen_out, "dataset");
    DatasetManifest m = generate_synthetic(spec, out);
    std::cerr << "wrote " << m.entries.size() << " pairs to " << out << "\n";
  });

  // adapt-aicd
  auto* aicd = app.add_subcommand(
      "adapt-aicd", "Ingest an AICD-style directory into the dataset layout");
  std::string aicd_src, aicd_out, aicd_config;
  std::optional<uint64_t> aicd_seed;
  AicdAdaptOptions aicd_opt;
  aicd->add_option("--src", aicd_src, "Source directory")->required();
  aicd->add_option("--out", aicd_out, "Output dataset directory");
  aicd->add_option("--config", aicd_config, "Adapter options JSON");
  aicd->add_option("--seed", aicd_seed, "Unused; accepted for uniformity");
  aicd->add_option("--patch", aicd_opt.patch, "Patch size in pixels");
  aicd->add_option("--resize-to", aicd_opt.resize_to, "Post-crop resize (0 = off)");
  aicd->callback([&] {
    json cfg = load_config(aicd_config);
    aicd_opt.patch = cfg.value("patch", aicd_opt.patch);
    aicd_opt.grid_rows = cfg.value("grid_rows", aicd_opt.grid_rows);
    aicd_opt.grid_cols = cfg.value("grid_cols", aicd_opt.grid_cols);
    aicd_opt.resize_to = cfg.value("resize_to", aicd_opt.resize_to);
    aicd_opt.min_pixels = cfg.value("min_pixels", aicd_opt.min_pixels);
    const std::string out = resolve_out(aicd_out, "dataset");
    DatasetManifest m = adapt_aicd(aicd_src, out, aicd_opt);
    std::cerr << "wrote " << m.entries.size() << " patch pairs to " << out << "\n";
  });

  // adapt-hrscd
  auto* hrscd = app.add_subcommand(
      "adapt-hrscd", "Ingest an HRSCD-style directory into the dataset layout");
  std::string hrscd_src, hrscd_out, hrscd_config;
  std::optional<uint64_t> hrscd_seed;
  HrscdAdaptOptions hrscd_opt;
  hrscd->add_option("--src", hrscd_src, "Source directory")->required();
  hrscd->add_option("--out", hrscd_out, "Output dataset directory");
  hrscd->add_option("--config", hrscd_config, "Adapter options JSON");
  hrscd->add_option("--seed", hrscd_seed, "Unused; accepted for uniformity");
  hrscd->callback([&] {
    json cfg = load_config(hrscd_config);
    hrscd_opt.num_base_classes =
        cfg.value("num_base_classes", hrscd_opt.num_base_classes);
    hrscd_opt.oversample_min = cfg.value("oversample_min", hrscd_opt.oversample_min);
    hrscd_opt.min_pixels = cfg.value("min_pixels", hrscd_opt.min_pixels);
    const std::string out = resolve_out(hrscd_out, "dataset");
    DatasetManifest m = adapt_hrscd(hrscd_src, out, hrscd_opt);
    std::cerr << "wrote " << m.entries.size() << " pairs to " << out << "\n";
  });

  // train
  auto* train = app.add_subcommand("train", "Stage 1: train without the CRF layer");
  std::string train_config;
  CommonDataArgs train_data;
  std::string train_out;
  std::optional<uint64_t> train_seed;
  bool train_resume = false, train_no_residual = false, train_full = false;
  std::string train_init;
  train->add_option("--config", train_config, "Config JSON: {model:{},train:{}}");
  train->add_option("--data", train_data.data, "Training dataset directory")->required();
  train->add_option("--val", train_data.val, "Validation dataset directory");
  train->add_option("--val-fraction", train_data.val_fraction,
                    "Tail fraction used for validation when --val is absent");
  train->add_option("--out", train_out, "Run directory");
  train->add_option("--seed", train_seed, "Seed override");
  train->add_flag("--resume", train_resume, "Resume from the run's last checkpoint");
  train->add_flag("--no-residual", train_no_residual, "Disable the residual block");
  train->add_flag("--full-supervision", train_full,
                  "Multitask mode: adds the conditional mask loss");
  train->add_option("--init", train_init,
                    "Warm-start from a checkpoint (matching arrays only)");
  train->callback([&] {
    json cfg = load_config(train_config);
    ModelConfig mc = model_from_config(cfg);
    TrainConfig tc = train_from_config(cfg);
    tc.seed = resolve_seed(train_seed, tc.seed);
    if (train_no_residual) mc.residual_block_enabled = false;
    if (train_full) mc.supervision_mode = SupervisionMode::full_multitask;
    const std::string out = resolve_out(train_out, "runs/train");
    auto [tr, va] = resolve_splits(train_data);
    TrainResult r =
        train_stage1(mc, tr, va, tc, out, train_resume, train_init);
    write_run_record(out, train_data.data, train_data.val, "train",
                     r.best_checkpoint);
    std::cerr << "best val top-1 " << r.best_val_top1 << " -> "
              << r.best_checkpoint << "\n";
  });

  // finetune
  auto* finetune =
      app.add_subcommand("finetune", "Stage 2: insert the CRF layer and finetune");
  std::string ft_config, ft_ckpt, ft_out;
  CommonDataArgs ft_data;
  std::optional<uint64_t> ft_seed;
  bool ft_resume = false;
  finetune->add_option("--config", ft_config, "Config JSON: {train:{}}");
  finetune->add_option("--ckpt", ft_ckpt, "Stage-1 checkpoint")->required();
  finetune->add_option("--data", ft_data.data, "Training dataset directory")->required();
  finetune->add_option("--val", ft_data.val, "Validation dataset directory");
  finetune->add_option("--val-fraction", ft_data.val_fraction,
                       "Tail fraction used for validation when --val is absent");
  finetune->add_option("--out", ft_out, "Run directory");
  finetune->add_option("--seed", ft_seed, "Seed override");
  finetune->add_flag("--resume", ft_resume, "Resume from the run's last checkpoint");
  finetune->callback([&] {
    json cfg = load_config(ft_config);
    TrainConfig tc = train_from_config(cfg);
    tc.seed = resolve_seed(ft_seed, tc.seed);
    if (!fs::exists(ft_ckpt)) throw DataError("checkpoint not found: " + ft_ckpt);
    const std::string out = resolve_out(ft_out, "runs/finetune");
    auto [tr, va] = resolve_splits(ft_data);
    TrainResult r = finetune_stage2(ft_ckpt, tr, va, tc, out, ft_resume);
    write_run_record(out, ft_data.data, ft_data.val, "finetune",
                     r.best_checkpoint);
    std::cerr << "best val top-1 " << r.best_val_top1 << " -> "
              << r.best_checkpoint << "\n";
  });

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string eval_config, eval_ckpt, eval_data, eval_out;
  std::optional<uint64_t> eval_seed;
  eval->add_option("--config", eval_config, "Unused; accepted for uniformity");
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--data", eval_data, "Dataset directory")->required();
  eval->add_option("--out", eval_out, "Metrics JSON output path");
  eval->add_option("--seed", eval_seed, "Unused; accepted for uniformity");
  eval->callback([&] {
    if (!fs::exists(eval_ckpt)) throw DataError("checkpoint not found: " + eval_ckpt);
    Model model = model_from_checkpoint(eval_ckpt);
    DatasetManifest data = load_dataset(eval_data);
    ClassMapping mapping = ClassMapping::from_manifest(data);
    MetricsReport r = evaluate(model, data, mapping);
    const std::string out = resolve_out(eval_out, "metrics.json");
    std::ofstream(out) << r.to_json() << "\n";
    std::cerr << "top1 " << r.top1 << " miou " << r.miou << " -> " << out << "\n";
  });

  // predict
  auto* predict = app.add_subcommand("predict", "Predict one image pair");
  std::string pr_config, pr_ckpt, pr_prev, pr_curr, pr_out, pr_data;
  std::optional<uint64_t> pr_seed;
  predict->add_option("--config", pr_config, "Unused; accepted for uniformity");
  predict->add_option("--ckpt", pr_ckpt, "Checkpoint file")->required();
  predict->add_option("--prev", pr_prev, "Previous image")->required();
  predict->add_option("--curr", pr_curr, "Current image")->required();
  predict->add_option("--data", pr_data,
                      "Dataset directory providing label names (optional)");
  predict->add_option("--out", pr_out, "Output directory");
  predict->add_option("--seed", pr_seed, "Unused; accepted for uniformity");
  predict->callback([&] {
    if (!fs::exists(pr_ckpt)) throw DataError("checkpoint not found: " + pr_ckpt);
    Model model = model_from_checkpoint(pr_ckpt);
    const auto& mc = model.config();
    ImagePair pair;
    pair.prev = load_image_rgb(pr_prev);
    pair.curr = load_image_rgb(pr_curr);
    if (pair.prev.height != mc.input_height || pair.prev.width != mc.input_width)
      pair.prev = resize_bilinear(pair.prev, mc.input_height, mc.input_width);
    if (pair.curr.height != mc.input_height || pair.curr.width != mc.input_width)
      pair.curr = resize_bilinear(pair.curr, mc.input_height, mc.input_width);
    std::map<int, std::string> names;
    ClassMapping mapping;
    if (!pr_data.empty()) {
      DatasetManifest data = load_dataset(pr_data);
      names = data.label_names;
      mapping = ClassMapping::from_manifest(data);
    } else {
      for (int i = 0; i < mc.num_classes; ++i) mapping.ids.push_back(i);
      mapping.unchanged_index = mc.unchanged_class_index;
    }
    const std::string out = resolve_out(pr_out, "prediction");
    predict_to_files(model, pair, names, mapping, out);
    std::cerr << "wrote prediction to " << out << "\n";
  });

  // report
  auto* report = app.add_subcommand(
      "report", "Metrics JSON/CSV plus side-by-side panel images for a run");
  std::string rp_config, rp_run, rp_ckpt, rp_data, rp_out;
  std::optional<uint64_t> rp_seed;
  int rp_panels = 8;
  report->add_option("--config", rp_config, "Unused; accepted for uniformity");
  report->add_option("--run", rp_run, "Run directory (reads run.json)");
  report->add_option("--ckpt", rp_ckpt, "Checkpoint override");
  report->add_option("--data", rp_data, "Dataset override");
  report->add_option("--out", rp_out, "Report directory (default <run>/report)");
  report->add_option("--panels", rp_panels, "Number of panel images");
  report->add_option("--seed", rp_seed, "Unused; accepted for uniformity");
  report->callback([&] {
    std::string ckpt = rp_ckpt, data = rp_data;
    if (!rp_run.empty()) {
      const std::string rec_path = (fs::path(rp_run) / "run.json").string();
      if (fs::exists(rec_path)) {
        json rec = json::parse(read_file(rec_path));
        if (ckpt.empty()) ckpt = rec.value("best_checkpoint", "");
        if (data.empty()) data = rec.value("data", "");
      } else if (ckpt.empty()) {
        ckpt = (fs::path(rp_run) / "best.ckpt").string();
      }
    }
    if (ckpt.empty() || data.empty())
      throw DataError("report needs --run with run.json, or --ckpt and --data");
    if (!fs::exists(ckpt)) throw DataError("checkpoint not found: " + ckpt);
    Model model = model_from_checkpoint(ckpt);
    DatasetManifest split = load_dataset(data);
    ClassMapping mapping = ClassMapping::from_manifest(split);
    const std::string out = resolve_out(
        rp_out, rp_run.empty() ? "report" : (fs::path(rp_run) / "report").string());
    MetricsReport r = write_report(model, split, mapping, out, rp_panels);
    std::cerr << "top1 " << r.top1 << " miou " << r.miou << " -> " << out << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // help text to stdout, exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
