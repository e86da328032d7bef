#define DOCTEST_CONFIG_IMPLEMENT
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "difflab/config.hpp"
#include "doctest.h"

namespace fs = std::filesystem;

namespace {

std::string g_binary;

int run_command(const std::string& cmd, std::string* output = nullptr) {
  const std::string capture = cmd + " > cli_out.txt 2>&1";
  const int status = std::system(capture.c_str());
  if (output) {
    std::ifstream in("cli_out.txt");
    std::ostringstream buf;
    buf << in.rdbuf();
    *output = buf.str();
  }
  std::remove("cli_out.txt");
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kConfig = R"([schedule]
T = 4
beta_start = 1e-3
beta_end = 0.05

[dataset]
kind = synth
height = 4
width = 4
templates = horizontal-stripes, vertical-stripes
std = 0.25
samples_per_class = 2

[classifier]
epochs = 60

[attack]
iterations = 2
rgf_queries = 4

[run]
seed = 3
)";

struct CliFixture {
  fs::path root;
  fs::path config;
  CliFixture() {
    root = fs::temp_directory_path() /
           ("difflab_cli_" + std::to_string(::getpid()));
    fs::create_directories(root);
    config = root / "experiment.txt";
    std::ofstream out(config);
    out << kConfig;
  }
  ~CliFixture() { fs::remove_all(root); }
  std::string base(const std::string& sub) const {
    return g_binary + " " + sub + " --config " + config.string() + " --out " +
           root.string();
  }
};

// One run directory was printed on stdout; trim the trailing newline.
std::string printed_dir(const std::string& output) {
  std::string s = output;
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

}  // namespace

TEST_CASE("attack subcommand produces a run directory and prints it") {
  CliFixture fx;
  std::string out;
  REQUIRE(run_command(fx.base("attack"), &out) == 0);
  const std::string dir = printed_dir(out);
  REQUIRE(!dir.empty());
  CHECK(fs::exists(fs::path(dir) / "summary.csv"));
  CHECK(fs::exists(fs::path(dir) / "manifest.txt"));
  CHECK(fs::exists(fs::path(dir) / "trace_0.csv"));
}

TEST_CASE("invert and eval subcommands write their reports") {
  CliFixture fx;
  std::string out;
  REQUIRE(run_command(fx.base("invert"), &out) == 0);
  CHECK(fs::exists(fs::path(printed_dir(out)) / "invert.csv"));
  CHECK(fs::exists(fs::path(printed_dir(out)) / "stacks" / "stack_0.bin"));

  REQUIRE(run_command(fx.base("eval"), &out) == 0);
  CHECK(fs::exists(fs::path(printed_dir(out)) / "eval.csv"));
}

TEST_CASE("bench subcommand needs its step list") {
  CliFixture fx;
  std::string out;
  REQUIRE(run_command(fx.base("bench") + " --steps 4,8", &out) == 0);
  CHECK(fs::exists(fs::path(printed_dir(out)) / "bench.csv"));
  CHECK(run_command(fx.base("bench"), &out) != 0);       // missing --steps
  CHECK(run_command(fx.base("bench") + " --steps 4", &out) != 0);
}

TEST_CASE("seed flag overrides the config seed in the snapshot") {
  CliFixture fx;
  std::string out;
  REQUIRE(run_command(fx.base("attack") + " --seed 777", &out) == 0);
  const difflab::ExperimentConfig snap = difflab::load_config(
      (fs::path(printed_dir(out)) / "config.snapshot.txt").string());
  CHECK(snap.seed == 777);

  REQUIRE(run_command(fx.base("attack"), &out) == 0);
  const difflab::ExperimentConfig plain = difflab::load_config(
      (fs::path(printed_dir(out)) / "config.snapshot.txt").string());
  CHECK(plain.seed == 3);
}

TEST_CASE("failures exit non-zero with a diagnostic") {
  CliFixture fx;
  std::string out;
  CHECK(run_command(g_binary + " attack --config no_such_file.txt --out " +
                        fx.root.string(),
                    &out) != 0);
  CHECK(out.find("error") != std::string::npos);

  CHECK(run_command(g_binary, &out) != 0);  // subcommand required

  std::ofstream bad(fx.root / "bad.txt");
  bad << "[schedule]\nT = 0\nbeta_start = 1e-3\nbeta_end = 0.05\n";
  bad.close();
  CHECK(run_command(g_binary + " attack --config " +
                        (fx.root / "bad.txt").string() + " --out " +
                        fx.root.string(),
                    &out) != 0);
  CHECK(out.find("error") != std::string::npos);
}

TEST_CASE("version flag reports and exits cleanly") {
  std::string out;
  CHECK(run_command(g_binary + " --version", &out) == 0);
  CHECK(!out.empty());
}

int main(int argc, char** argv) {
  doctest::Context context;
  // the harness appends the CLI binary path after the doctest options
  if (argc > 1 && argv[argc - 1][0] != '-') {
    g_binary = argv[argc - 1];
    --argc;
  }
  context.applyCommandLine(argc, argv);
  if (g_binary.empty() || !fs::exists(g_binary)) {
    std::fprintf(stderr, "usage: test_cli [doctest options] <cli binary>\n");
    return 2;
  }
  return context.run();
}
