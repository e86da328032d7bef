#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "difflab/config.hpp"
#include "difflab/experiment.hpp"
#include "difflab/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"analytic diffusion-inversion attack lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", difflab::kVersion);

  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::vector<int> steps;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config file")
        ->required();
    cmd->add_option("--out", out_dir, "directory to create the run under");
    cmd->add_option("--seed", seed, "override the config's run seed")
        ->each([&](const std::string&) { seed_set = true; });
  };

  CLI::App* invert = app.add_subcommand(
      "invert", "extract per-image noise-map stacks and verify exact replay");
  CLI::App* attack = app.add_subcommand(
      "attack", "run the latent-space attack over the dataset");
  CLI::App* eval = app.add_subcommand(
      "eval", "report reconstruction fidelity and clean accuracy");
  CLI::App* bench = app.add_subcommand(
      "bench", "time attacks across schedule lengths");
  for (CLI::App* cmd : {invert, attack, eval, bench}) add_common(cmd);
  bench->add_option("--steps", steps, "schedule lengths, e.g. 20,200")
      ->delimiter(',')
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const difflab::ExperimentConfig cfg = difflab::load_config(config_path);
    difflab::RunOptions opt;
    opt.out_root = out_dir;
    opt.override_seed = seed_set;
    opt.seed = seed;
    std::string dir;
    if (app.got_subcommand(invert)) {
      dir = difflab::run_invert_experiment(cfg, opt);
    } else if (app.got_subcommand(attack)) {
      dir = difflab::run_attack_experiment(cfg, opt);
    } else if (app.got_subcommand(eval)) {
      dir = difflab::run_eval_experiment(cfg, opt);
    } else {
      dir = difflab::run_bench(cfg, opt, steps);
    }
    std::cout << dir << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
