// cdcd {train|sample|eval|bench|make-world} --config <path> [--set k=v ...] [--out <dir>]

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "cdcd/commands.hpp"
#include "cdcd/error.hpp"

namespace {

unsigned thread_cap() {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const char* env = std::getenv("CDCD_THREADS");
  if (!env || !*env) return hw;
  try {
    const int n = std::stoi(env);
    if (n >= 1) return static_cast<unsigned>(n);
  } catch (const std::logic_error&) {
  }
  throw cdcd::Error("CDCD_THREADS must be a positive integer, got '" + std::string(env) + "'");
}

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "config file of key=value lines");
  cmd->add_option("--set", c.sets, "override one setting, key=value")->allow_extra_args(false);
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive discrete diffusion: training, sampling, evaluation and benchmarks"};
  app.require_subcommand(1);

  Common common;
  std::optional<int> label, count;
  std::string truncation;
  std::string checkpoint, steps, modes;
  std::optional<int> seeds;

  auto* train = app.add_subcommand("train", "train a denoiser and write a checkpoint");
  auto* sample = app.add_subcommand("sample", "draw class-conditioned samples from a checkpoint");
  auto* eval = app.add_subcommand("eval", "score a checkpoint on its world");
  auto* bench = app.add_subcommand("bench", "sweep steps, modes and seeds under one epoch budget");
  auto* world = app.add_subcommand("make-world", "write a synthetic world and its corpora");
  for (auto* cmd : {train, sample, eval, bench, world}) add_common(cmd, common);

  sample->add_option("--checkpoint", checkpoint, "checkpoint file");
  sample->add_option("--class", label, "conditioning class");
  sample->add_option("--count", count, "number of samples");
  sample->add_option("--truncation", truncation, "truncation rate in (0, 1]");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file");
  bench->add_option("--T", steps, "comma-separated step counts");
  bench->add_option("--mode", modes, "comma-separated modes");
  bench->add_option("--seeds", seeds, "number of seeds");

  CLI11_PARSE(app, argc, argv);

  try {
    cdcd::RunConfig config = cdcd::default_run_config();
    if (!common.config.empty()) config = cdcd::load_run_config(common.config, config);
    std::vector<std::string> sets = common.sets;
    if (!checkpoint.empty()) sets.push_back((eval->parsed() ? "eval.checkpoint=" : "sampler.checkpoint=") + checkpoint);
    if (label) sets.push_back("sampler.class=" + std::to_string(*label));
    if (count) sets.push_back("sampler.count=" + std::to_string(*count));
    if (!truncation.empty()) sets.push_back("sampler.truncation=" + truncation);
    if (!steps.empty()) sets.push_back("bench.steps=" + steps);
    if (!modes.empty()) sets.push_back("bench.modes=" + modes);
    if (seeds) sets.push_back("bench.seeds=" + std::to_string(*seeds));
    for (const std::string& kv : sets) cdcd::apply_setting(config, kv);

    if (train->parsed()) return cdcd::cmd_train(config, common.out);
    if (sample->parsed()) return cdcd::cmd_sample(config, common.out);
    if (eval->parsed()) return cdcd::cmd_eval(config, common.out);
    if (bench->parsed()) return cdcd::cmd_bench(config, common.out, thread_cap());
    return cdcd::cmd_make_world(config, common.out);
  } catch (const std::exception& e) {
    std::cerr << "cdcd: " << e.what() << "\n";
    return 1;
  }
}
