#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "difflab/classifier.hpp"
#include "difflab/config.hpp"
#include "difflab/data_io.hpp"
#include "difflab/denoiser.hpp"
#include "difflab/schedule.hpp"

namespace difflab {

// Substream tags for seeds derived from the run seed. Per-image attack seeds
// are mix_seed(seed, kImageStreamBase + i), so parallel scheduling can never
// change any result.
inline constexpr std::uint64_t kDataStream = 0x5001;
inline constexpr std::uint64_t kClassifierStream = 0x5002;
inline constexpr std::uint64_t kImageStreamBase = 0x10000;

struct RunOptions {
  std::string out_root = ".";
  bool override_seed = false;
  std::uint64_t seed = 0;
};

// Number of worker threads for a run over `images` images: hardware
// concurrency capped by the DIFFLAB_MAX_THREADS environment variable
// (values < 1 rejected) and by the image count itself.
int resolve_threads(int images);

// Dataset + analytic denoiser model + trained victim, all derived
// deterministically from the config and its seed.
struct Workbench {
  LabeledDataset data;
  DenoiserModel model;
  NoiseSchedule schedule;
  Classifier classifier;
  int attack_images = 0;  // prefix of data actually processed
};

Workbench assemble_workbench(const ExperimentConfig& cfg);

// Each runner creates a fresh timestamped directory under opt.out_root named
// <command>_YYYYMMDD-HHMMSS (suffixed -2, -3, ... on collision) containing a
// config snapshot that reproduces the run, a manifest, and the command's
// reports. A partial run leaves a FAILED marker file with the error message.
// All return the run directory path.
std::string run_attack_experiment(ExperimentConfig cfg, const RunOptions& opt);
std::string run_invert_experiment(ExperimentConfig cfg, const RunOptions& opt);
std::string run_eval_experiment(ExperimentConfig cfg, const RunOptions& opt);

// One attack arm per entry of step_counts (each overrides schedule T, all
// else identical), run single-threaded; bench.csv reports per-example
// denoiser-call counts, wall time, and ratios relative to the first arm.
// Fewer than two step counts is an error.
std::string run_bench(ExperimentConfig cfg, const RunOptions& opt,
                      const std::vector<int>& step_counts);

// 17-significant-digit float formatting shared by every CSV writer; CSVs
// must be byte-stable across reruns of the same (config, seed).
std::string csv_double(double v);

}  // namespace difflab
