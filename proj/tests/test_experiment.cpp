#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <thread>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "difflab/experiment.hpp"
#include "difflab/metrics.hpp"
#include "difflab/rng.hpp"
#include "doctest.h"

using namespace difflab;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg = parse_config_text(R"(
[schedule]
T = 6
beta_start = 1e-3
beta_end = 0.04

[dataset]
kind = synth
height = 4
width = 4
templates = horizontal-stripes, vertical-stripes
std = 0.25
samples_per_class = 3

[classifier]
epochs = 120
lr = 0.5

[attack]
iterations = 3
rgf_queries = 6
kappa = 0.08
step_size = 0.03

[run]
seed = 21
)");
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s)
    if (c == '\n') ++n;
  return n;
}

struct TempRoot {
  fs::path path;
  TempRoot() {
    path = fs::temp_directory_path() /
           ("difflab_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempRoot() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("csv floats survive a parse round trip at full precision") {
  for (const double v : {0.1 + 0.2, 1.0 / 3.0, 1e-17, 123456.789, 0.0}) {
    const std::string s = csv_double(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);
  }
  CHECK(csv_double(0.5) == "0.5");
}

TEST_CASE("thread resolution respects the environment cap") {
  const int hw =
      std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
  ::setenv("DIFFLAB_MAX_THREADS", "2", 1);
  CHECK(resolve_threads(8) == std::min(hw, 2));
  CHECK(resolve_threads(1) == 1);  // capped by image count too
  ::setenv("DIFFLAB_MAX_THREADS", "1", 1);
  CHECK(resolve_threads(8) == 1);
  ::setenv("DIFFLAB_MAX_THREADS", "0", 1);
  CHECK_THROWS(resolve_threads(8));
  ::setenv("DIFFLAB_MAX_THREADS", "lots", 1);
  CHECK_THROWS(resolve_threads(8));
  ::unsetenv("DIFFLAB_MAX_THREADS");
  CHECK(resolve_threads(4) == std::min(hw, 4));
  CHECK(resolve_threads(0) == 1);
}

TEST_CASE("workbench assembly is deterministic and truncates to max_images") {
  ExperimentConfig cfg = small_config();
  const Workbench a = assemble_workbench(cfg);
  const Workbench b = assemble_workbench(cfg);
  CHECK(a.data.images.size() == 6);
  CHECK(a.attack_images == 6);
  CHECK(max_abs_diff(a.data.images[2], b.data.images[2]) == 0.0);
  for (std::size_t i = 0; i < a.classifier.w1.size(); ++i)
    CHECK(a.classifier.w1[i] == b.classifier.w1[i]);
  CHECK(a.classifier.train_accuracy >= 0.5);
  CHECK(a.schedule.T == 6);

  cfg.max_images = 4;
  const Workbench c = assemble_workbench(cfg);
  CHECK(c.attack_images == 4);
  CHECK(c.data.images.size() == 6);  // classifier still sees everything

  cfg.seed = 22;
  const Workbench d = assemble_workbench(cfg);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.data.images.size(); ++i)
    diff = std::max(diff, max_abs_diff(a.data.images[i], d.data.images[i]));
  CHECK(diff > 0.0);
}

TEST_CASE("attack runs leave a complete and reproducible directory") {
  TempRoot root;
  ExperimentConfig cfg = small_config();
  cfg.max_images = 4;
  RunOptions opt;
  opt.out_root = root.str();

  const std::string dir = run_attack_experiment(cfg, opt);
  CHECK(dir.find(root.str()) == 0);
  CHECK(fs::path(dir).filename().string().rfind("attack_", 0) == 0);

  CHECK(fs::exists(fs::path(dir) / "manifest.txt"));
  CHECK(fs::exists(fs::path(dir) / "config.snapshot.txt"));
  CHECK(!fs::exists(fs::path(dir) / "FAILED"));
  const std::string summary = slurp(fs::path(dir) / "summary.csv");
  CHECK(summary.rfind("image,label,clean_pred,adv_pred,success,iterations,"
                      "linf_delta,l2_image,psnr_db,ssim\n",
                      0) == 0);
  CHECK(count_lines(summary) == 1 + 4 + 1);  // header + rows + aggregate
  CHECK(summary.find("\nall,") != std::string::npos);

  for (int i = 0; i < 4; ++i) {
    CHECK(fs::exists(fs::path(dir) / ("trace_" + std::to_string(i) + ".csv")));
    CHECK(fs::exists(fs::path(dir) / ("clean_" + std::to_string(i) + ".pgm")));
    CHECK(fs::exists(fs::path(dir) / ("recon_" + std::to_string(i) + ".pgm")));
    CHECK(fs::exists(fs::path(dir) / ("adv_" + std::to_string(i) + ".pgm")));
  }
  const std::string trace = slurp(fs::path(dir) / "trace_0.csv");
  CHECK(trace.rfind("iter,loss,pred,linf_delta,l2_image\n", 0) == 0);
  CHECK(count_lines(trace) >= 2);

  // config snapshot reproduces the effective run configuration
  const ExperimentConfig snap = load_config((fs::path(dir) / "config.snapshot.txt").string());
  CHECK(snap.seed == cfg.seed);
  CHECK(snap.max_images == 4);
  CHECK(snap.T == cfg.T);

  // byte-identical rerun, also under a different thread cap
  const std::string dir2 = run_attack_experiment(cfg, opt);
  CHECK(slurp(fs::path(dir2) / "summary.csv") == summary);
  ::setenv("DIFFLAB_MAX_THREADS", "1", 1);
  const std::string dir3 = run_attack_experiment(cfg, opt);
  ::unsetenv("DIFFLAB_MAX_THREADS");
  CHECK(slurp(fs::path(dir3) / "summary.csv") == summary);

  // the CLI seed override lands in the snapshot and changes the data
  RunOptions seeded = opt;
  seeded.override_seed = true;
  seeded.seed = 777;
  const std::string dir4 = run_attack_experiment(cfg, seeded);
  const ExperimentConfig snap4 =
      load_config((fs::path(dir4) / "config.snapshot.txt").string());
  CHECK(snap4.seed == 777);
  CHECK(slurp(fs::path(dir4) / "summary.csv") != summary);
}

TEST_CASE("estimator none ties attack success to clean mistakes") {
  TempRoot root;
  ExperimentConfig cfg = small_config();
  cfg.attack.estimator = GradEstimator::None;
  RunOptions opt;
  opt.out_root = root.str();
  const std::string dir = run_attack_experiment(cfg, opt);
  const std::string summary = slurp(fs::path(dir) / "summary.csv");

  // aggregate row: all,<images>,<clean_error>,,<asr>,...
  const std::size_t pos = summary.find("\nall,");
  REQUIRE(pos != std::string::npos);
  std::istringstream tail(summary.substr(pos + 1));
  std::string field;
  std::getline(tail, field, ',');  // "all"
  std::getline(tail, field, ',');
  CHECK(field == "6");
  std::getline(tail, field, ',');
  const double clean_error = std::strtod(field.c_str(), nullptr);
  std::getline(tail, field, ',');  // empty adv_pred slot
  CHECK(field.empty());
  std::getline(tail, field, ',');
  const double asr = std::strtod(field.c_str(), nullptr);
  CHECK(asr == clean_error);  // delta never moves, so only clean errors "win"
}

TEST_CASE("failed assembly leaves a marker instead of a silent absence") {
  TempRoot root;
  ExperimentConfig cfg = small_config();
  cfg.dataset_kind = DatasetKind::Idx;
  cfg.idx_images = (root.path / "missing_images.idx").string();
  cfg.idx_labels = (root.path / "missing_labels.idx").string();
  RunOptions opt;
  opt.out_root = root.str();
  std::string dir;
  CHECK_THROWS(dir = run_attack_experiment(cfg, opt));

  bool found = false;
  for (const auto& entry : fs::directory_iterator(root.path)) {
    const fs::path marker = entry.path() / "FAILED";
    if (fs::exists(marker)) {
      found = true;
      CHECK(slurp(marker).find("idx") != std::string::npos);
    }
  }
  CHECK(found);
}

TEST_CASE("inversion runs report reconstruction error and stacks") {
  TempRoot root;
  ExperimentConfig cfg = small_config();
  cfg.max_images = 3;
  RunOptions opt;
  opt.out_root = root.str();
  const std::string dir = run_invert_experiment(cfg, opt);
  CHECK(fs::path(dir).filename().string().rfind("invert_", 0) == 0);
  const std::string csv = slurp(fs::path(dir) / "invert.csv");
  CHECK(csv.rfind("image,label,recon_err\n", 0) == 0);
  CHECK(count_lines(csv) == 1 + 3 + 1);
  for (int i = 0; i < 3; ++i)
    CHECK(fs::exists(fs::path(dir) / "stacks" /
                     ("stack_" + std::to_string(i) + ".bin")));

  // worst reconstruction error lives in the aggregate row and is tiny
  const std::size_t pos = csv.find("\nall,");
  REQUIRE(pos != std::string::npos);
  std::istringstream tail(csv.substr(pos + 1));
  std::string field;
  std::getline(tail, field, ',');
  std::getline(tail, field, ',');
  std::getline(tail, field);
  CHECK(std::strtod(field.c_str(), nullptr) <= 1e-8);

  // saved stacks replay through the public loader
  const NoiseSchedule sched =
      build_schedule(cfg.T, cfg.beta_start, cfg.beta_end, cfg.eta_ddpm,
                     cfg.h_formula);
  const NoiseMapStack stack =
      load_stack((fs::path(dir) / "stacks" / "stack_0.bin").string(), sched);
  CHECK(stack.schedule.T == cfg.T);
}

TEST_CASE("eval runs score accuracy and reconstruction fidelity") {
  TempRoot root;
  ExperimentConfig cfg = small_config();
  RunOptions opt;
  opt.out_root = root.str();
  const std::string dir = run_eval_experiment(cfg, opt);
  const std::string csv = slurp(fs::path(dir) / "eval.csv");
  CHECK(csv.rfind("image,label,clean_pred,correct,recon_err,psnr_db,ssim\n",
                  0) == 0);
  CHECK(count_lines(csv) == 1 + 6 + 1);

  // exact reconstruction makes fidelity perfect: psnr_db = inf, ssim = 1
  const std::size_t pos = csv.find("\nall,");
  REQUIRE(pos != std::string::npos);
  std::istringstream tail(csv.substr(pos + 1));
  std::string field;
  for (int i = 0; i < 4; ++i) std::getline(tail, field, ',');
  const double accuracy = std::strtod(field.c_str(), nullptr);
  CHECK(accuracy >= 0.0);
  CHECK(accuracy <= 1.0);
  std::getline(tail, field, ',');
  CHECK(std::strtod(field.c_str(), nullptr) <= 1e-8);  // mean recon err
  std::getline(tail, field, ',');
  CHECK(field == "inf");
  std::getline(tail, field);
  CHECK(std::strtod(field.c_str(), nullptr) == 1.0);
}

TEST_CASE("bench arms scale denoiser calls with the step count") {
  TempRoot root;
  ExperimentConfig cfg = small_config();
  cfg.max_images = 2;
  cfg.attack.estimator = GradEstimator::None;  // deterministic early behavior
  RunOptions opt;
  opt.out_root = root.str();
  CHECK_THROWS(run_bench(cfg, opt, {10}));
  CHECK_THROWS(run_bench(cfg, opt, {}));

  const std::string dir = run_bench(cfg, opt, {5, 10});
  const std::string csv = slurp(fs::path(dir) / "bench.csv");
  CHECK(csv.rfind("T,images,cond_evals,uncond_evals,evals_per_example,"
                  "wall_seconds,wall_per_example,eval_ratio,wall_ratio\n",
                  0) == 0);
  REQUIRE(count_lines(csv) == 3);

  std::istringstream lines(csv);
  std::string header, arm1, arm2;
  std::getline(lines, header);
  std::getline(lines, arm1);
  std::getline(lines, arm2);
  auto field = [](const std::string& row, int idx) {
    std::istringstream ss(row);
    std::string f;
    for (int i = 0; i <= idx; ++i) std::getline(ss, f, ',');
    return f;
  };
  CHECK(field(arm1, 0) == "5");
  CHECK(field(arm2, 0) == "10");
  CHECK(field(arm1, 7) == "1");  // self-ratio
  const double c1 = std::strtod(field(arm1, 2).c_str(), nullptr);
  const double c2 = std::strtod(field(arm2, 2).c_str(), nullptr);
  CHECK(c2 == doctest::Approx(2.0 * c1).epsilon(1e-12));
  CHECK(std::strtod(field(arm2, 7).c_str(), nullptr) ==
        doctest::Approx(2.0).epsilon(1e-12));
}
