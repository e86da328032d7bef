#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "difflab/attack.hpp"
#include "difflab/classifier.hpp"
#include "difflab/data_io.hpp"
#include "difflab/schedule.hpp"

namespace difflab {

// Parse/validation failure; the message names the offending section/key.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class DatasetKind { Synth, Idx };

// Typed view of the plain-text experiment config. The format is strict
// key = value lines under [section] headers, '#' comments; unknown sections
// or keys, duplicates, type errors, and missing required keys are rejected
// with the field path in the message.
struct ExperimentConfig {
  // [schedule]
  int T = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  double eta_ddpm = 1.0;
  HFormula h_formula = HFormula::LogSnrDiff;

  // [dataset]
  DatasetKind dataset_kind = DatasetKind::Synth;
  SynthSpec synth;               // Synth: full spec; Idx: model part only
  std::string idx_images;
  std::string idx_labels;

  // [classifier]
  ClassifierKind classifier_kind = ClassifierKind::SoftmaxLinear;
  Activation activation = Activation::Tanh;
  int hidden = 16;
  int epochs = 200;
  double lr = 0.5;

  // [condition]
  ConditionKind condition_kind = ConditionKind::Class;
  double guidance_scale = 1.0;

  // [attack]
  AttackConfig attack;

  // [run]
  std::uint64_t seed = 0;
  int max_images = 0;  // 0 = whole dataset
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical serialization: parsing the output reproduces the config exactly
// (doubles printed with 17 significant digits). Used for run snapshots.
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace difflab
