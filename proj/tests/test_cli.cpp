#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "qaface/cli.hpp"

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "qaface_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out);
  out << text;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

const std::string kTinyConfig =
    "dataset.num_classes = 4\n"
    "dataset.samples_per_class = 20\n"
    "dataset.input_dim = 6\n"
    "dataset.embedding_dim = 5\n"
    "backbone.hidden_dim = 8\n"
    "train.epochs = 2\n"
    "train.batch_size = 16\n"
    "eval.pairs = 40\n";

}  // namespace

TEST_CASE("gradcheck subcommand passes") {
  CHECK(qaface::run_command({"gradcheck", "--cases", "100", "--seed", "7"}) == 0);
}

TEST_CASE("train with zero epochs emits a valid empty run") {
  auto dir = fresh_dir("train0");
  auto cfg = dir / "cfg.txt";
  write_text(cfg, kTinyConfig);
  CHECK(qaface::run_command({"train", "--config", cfg.string(), "--epochs", "0", "--out",
                             (dir / "run").string()}) == 0);
  CHECK(slurp(dir / "run" / "metrics.txt").empty());
  CHECK(fs::exists(dir / "run" / "checkpoint.ckpt"));
  CHECK(fs::exists(dir / "run" / "run_config.txt"));
}

TEST_CASE("train outputs are byte-identical across reruns") {
  auto dir = fresh_dir("train_repro");
  auto cfg = dir / "cfg.txt";
  write_text(cfg, kTinyConfig);
  REQUIRE(qaface::run_command({"train", "--config", cfg.string(), "--seed", "5", "--out",
                               (dir / "a").string()}) == 0);
  REQUIRE(qaface::run_command({"train", "--config", cfg.string(), "--seed", "5", "--out",
                               (dir / "b").string()}) == 0);
  CHECK(slurp(dir / "a" / "metrics.txt") == slurp(dir / "b" / "metrics.txt"));
  CHECK(slurp(dir / "a" / "checkpoint.ckpt") == slurp(dir / "b" / "checkpoint.ckpt"));
  CHECK_FALSE(slurp(dir / "a" / "metrics.txt").empty());
}

TEST_CASE("cli resume reproduces the uninterrupted run") {
  auto dir = fresh_dir("resume");
  auto cfg = dir / "cfg.txt";
  write_text(cfg, kTinyConfig);
  REQUIRE(qaface::run_command({"train", "--config", cfg.string(), "--out",
                               (dir / "full").string()}) == 0);
  REQUIRE(qaface::run_command({"train", "--config", cfg.string(), "--stop-after-iters", "3",
                               "--out", (dir / "part1").string()}) == 0);
  REQUIRE(qaface::run_command({"train", "--config", cfg.string(), "--resume",
                               (dir / "part1" / "checkpoint.ckpt").string(), "--out",
                               (dir / "part2").string()}) == 0);
  CHECK(slurp(dir / "part1" / "metrics.txt") + slurp(dir / "part2" / "metrics.txt") ==
        slurp(dir / "full" / "metrics.txt"));
  CHECK(slurp(dir / "part2" / "checkpoint.ckpt") == slurp(dir / "full" / "checkpoint.ckpt"));
}

TEST_CASE("eval consumes a checkpoint and writes reports") {
  auto dir = fresh_dir("eval");
  auto cfg = dir / "cfg.txt";
  write_text(cfg, kTinyConfig);
  REQUIRE(qaface::run_command({"train", "--config", cfg.string(), "--out",
                               (dir / "run").string()}) == 0);
  CHECK(qaface::run_command({"eval", "--config", cfg.string(), "--checkpoint",
                             (dir / "run" / "checkpoint.ckpt").string(), "--out",
                             (dir / "eval").string()}) == 0);
  std::string report = slurp(dir / "eval" / "eval_report.csv");
  CHECK(report.find("verification_accuracy,") != std::string::npos);
  CHECK(report.find("tar_at_far_0.1,") != std::string::npos);
  CHECK(fs::exists(dir / "eval" / "center_errors.csv"));

  // Mismatched config: runtime error, exit 1.
  auto other_cfg = dir / "other.txt";
  write_text(other_cfg, kTinyConfig + "margin.scale = 16\n");
  CHECK(qaface::run_command({"eval", "--config", other_cfg.string(), "--checkpoint",
                             (dir / "run" / "checkpoint.ckpt").string(), "--out",
                             (dir / "eval2").string()}) == 1);
}

TEST_CASE("config errors exit 2") {
  auto dir = fresh_dir("cfg_errors");
  auto bad_key = dir / "bad_key.txt";
  write_text(bad_key, "definitely.unknown = 1\n");
  CHECK(qaface::run_command({"train", "--config", bad_key.string(), "--out", dir.string()}) == 2);

  auto bad_value = dir / "bad_value.txt";
  write_text(bad_value, "injection.tau = banana\n");
  CHECK(qaface::run_command({"train", "--config", bad_value.string(), "--out", dir.string()}) == 2);

  CHECK(qaface::run_command({"ablate", "--param", "nonsense", "--values", "1", "--out",
                             dir.string()}) == 2);
}

TEST_CASE("curves emits deterministic csv data") {
  auto dir_a = fresh_dir("curves_a");
  auto dir_b = fresh_dir("curves_b");
  REQUIRE(qaface::run_command({"curves", "--s", "1,16,64", "--out", dir_a.string()}) == 0);
  REQUIRE(qaface::run_command({"curves", "--s", "1,16,64", "--out", dir_b.string()}) == 0);
  std::string table = slurp(dir_a / "curves_p.csv");
  CHECK(table == slurp(dir_b / "curves_p.csv"));
  CHECK(table.find("cos_true,p_s1,p_s16,p_s64,slope_s1,slope_s16,slope_s64\n") == 0);
  CHECK(std::count(table.begin(), table.end(), '\n') == 402);  // header + 401 points
  CHECK(fs::exists(dir_a / "curves_multiclass.csv"));
}

TEST_CASE("histogram works without a checkpoint") {
  auto dir = fresh_dir("hist");
  auto cfg = dir / "cfg.txt";
  write_text(cfg, kTinyConfig);
  CHECK(qaface::run_command({"histogram", "--config", cfg.string(), "--levels", "0.5,0.95",
                             "--bins", "10", "--samples", "50", "--out", dir.string()}) == 0);
  std::string means = slurp(dir / "magnitude_means.csv");
  CHECK(means.find("level,space,mean\n") == 0);
  CHECK(fs::exists(dir / "histogram.csv"));
}

TEST_CASE("ablate writes one row per value") {
  auto dir = fresh_dir("ablate");
  auto cfg = dir / "cfg.txt";
  write_text(cfg, kTinyConfig);
  CHECK(qaface::run_command({"ablate", "--config", cfg.string(), "--param", "tau", "--values",
                             "0,2", "--out", dir.string()}) == 0);
  std::string table = slurp(dir / "ablation.csv");
  CHECK(std::count(table.begin(), table.end(), '\n') == 3);  // header + 2 rows
}

TEST_CASE("drift subcommand emits tables on a tiny run") {
  auto dir = fresh_dir("drift");
  CHECK(qaface::run_command({"drift", "--seeds", "2", "--spc", "60", "--epochs", "8", "--batch",
                             "30", "--out", dir.string()}) == 0);
  std::string summary = slurp(dir / "drift_summary.csv");
  CHECK(summary.find("quality_win_fraction,") != std::string::npos);
  std::string table = slurp(dir / "drift_table.csv");
  CHECK(std::count(table.begin(), table.end(), '\n') == 13);  // header + 2 seeds x 3 variants x 2 classes
}

TEST_CASE("unknown subcommand is a usage error") {
  CHECK(qaface::run_command({"frobnicate"}) == 2);
}
