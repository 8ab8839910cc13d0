// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
//
// Golden tests for the command-line binary; the path comes from WCDNET_BIN.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "wcdnet/data.h"

using namespace wcdnet;
namespace fs = std::filesystem;

namespace {

std::string bin() {
  const char* p = std::getenv("WCDNET_BIN");
  REQUIRE_MESSAGE(p != nullptr, "WCDNET_BIN must point at the CLI binary");
  return p;
}

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "wcdnet_tests" / "cli";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

int run_cli(const std::string& args, const fs::path& stdout_to = {}) {
  std::string cmd = bin() + " " + args + " 2>" +
                    (work_dir() / "stderr.txt").string();
  if (!stdout_to.empty()) cmd += " >" + stdout_to.string();
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("help output enumerates subcommands and exits 0") {
  const fs::path out = work_dir() / "help.txt";
  CHECK(run_cli("--help", out) == 0);
  const std::string text = slurp(out);
  for (const char* cmd : {"gen-data", "adapt-aicd", "adapt-hrscd", "train",
                          "finetune", "eval", "predict", "report"})
    CHECK_MESSAGE(text.find(cmd) != std::string::npos, cmd);
  // per-command help lists its flags
  const fs::path th = work_dir() / "train_help.txt";
  CHECK(run_cli("train --help", th) == 0);
  const std::string train_text = slurp(th);
  for (const char* flag : {"--config", "--seed", "--data", "--val", "--out",
                           "--resume", "--no-residual", "--full-supervision"})
    CHECK_MESSAGE(train_text.find(flag) != std::string::npos, flag);
}

TEST_CASE("usage errors exit 1") {
  CHECK(run_cli("") == 1);                       // missing subcommand
  CHECK(run_cli("train --bogus-flag x") == 1);   // unknown flag
  CHECK(run_cli("no-such-command") == 1);
  CHECK(run_cli("train") == 1);                  // missing required --data
}

TEST_CASE("data and validation errors exit 2 naming the path") {
  CHECK(run_cli("eval --ckpt missing.bin --data also-missing") == 2);
  CHECK(slurp(work_dir() / "stderr.txt").find("missing.bin") !=
        std::string::npos);
  CHECK(run_cli("train --data " + (work_dir() / "no_ds").string() + " --out " +
                (work_dir() / "r").string()) == 2);
}

TEST_CASE("gen-data round-trips through the dataset loader") {
  const fs::path spec = work_dir() / "spec.json";
  std::ofstream(spec)
      << R"({"num_pairs": 10, "image_size": 32, "unchanged_fraction": 0.2})";
  const fs::path ds = work_dir() / "ds";
  CHECK(run_cli("gen-data --spec " + spec.string() + " --out " + ds.string() +
                " --seed 21") == 0);
  DatasetManifest m = load_manifest(ds.string());
  CHECK(m.entries.size() == 10);
  // same seed again -> identical manifest
  const fs::path ds2 = work_dir() / "ds2";
  CHECK(run_cli("gen-data --spec " + spec.string() + " --out " + ds2.string() +
                " --seed 21") == 0);
  DatasetManifest m2 = load_manifest(ds2.string());
  m2.root = m.root;
  CHECK(m2 == m);
}

TEST_CASE("train, eval, predict and report artifacts") {
  const fs::path ds = work_dir() / "ds";
  REQUIRE(fs::exists(ds));  // produced by the gen-data test above
  const fs::path cfg = work_dir() / "cfg.json";
  std::ofstream(cfg) << R"({"model": {"input_height": 32, "input_width": 32},
                            "train": {"max_epochs": 1, "batch_size": 4}})";
  const fs::path run = work_dir() / "run";
  CHECK(run_cli("train --data " + ds.string() + " --out " + run.string() +
                " --config " + cfg.string() + " --seed 4") == 0);
  CHECK(fs::exists(run / "best.ckpt"));
  CHECK(fs::exists(run / "train_log.csv"));
  CHECK(fs::exists(run / "run.json"));

  const fs::path metrics = work_dir() / "metrics.json";
  CHECK(run_cli("eval --ckpt " + (run / "best.ckpt").string() + " --data " +
                ds.string() + " --out " + metrics.string()) == 0);
  const std::string mtext = slurp(metrics);
  CHECK(mtext.find("\"top1\"") != std::string::npos);
  CHECK(mtext.find("\"miou\"") != std::string::npos);

  DatasetManifest m = load_manifest(ds.string());
  const fs::path pred = work_dir() / "pred";
  CHECK(run_cli("predict --ckpt " + (run / "best.ckpt").string() + " --prev " +
                (ds / m.entries[0].prev_path).string() + " --curr " +
                (ds / m.entries[0].curr_path).string() + " --data " +
                ds.string() + " --out " + pred.string()) == 0);
  CHECK(fs::exists(pred / "mask_soft.png"));
  CHECK(fs::exists(pred / "mask_binary.png"));
  CHECK(fs::exists(pred / "prediction.json"));

  CHECK(run_cli("report --run " + run.string() + " --panels 3") == 0);
  CHECK(fs::exists(run / "report" / "metrics.json"));
  CHECK(fs::exists(run / "report" / "metrics.csv"));
  int panels = 0;
  for (const auto& e : fs::directory_iterator(run / "report" / "panels"))
    if (e.path().extension() == ".png") ++panels;
  CHECK(panels == 3);
}
