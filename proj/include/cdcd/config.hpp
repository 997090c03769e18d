#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdcd/data.hpp"
#include "cdcd/eval.hpp"
#include "cdcd/sampler.hpp"
#include "cdcd/trainer.hpp"

namespace cdcd {

struct WorldSpec {
  int classes = 4;
  int codebook = 16;
  int length = 16;
  double concentration = 0.1;
  std::uint64_t seed = 1;
};

struct DataSpec {
  int train_per_class = 128;
  int heldout_per_class = 32;
  std::uint64_t seed = 11;
  /// Optional corpus files; when set they replace sampling from the world.
  std::string train_corpus;
  std::string heldout_corpus;
};

struct SampleSpec {
  std::string checkpoint;
  int label = 0;
};

struct BenchOptions {
  std::vector<int> steps{8, 16};
  std::vector<std::string> modes{"vanilla", "step-intra"};
  int seeds = 3;
  int eval_per_class = 100;
};

/// Every setting of a run. Text form is flat `key=value` lines with dotted
/// section names; `#` starts a comment.
struct RunConfig {
  WorldSpec world;
  DataSpec data;
  TrainConfig train;
  SamplerConfig sampler;
  SampleSpec sample;
  EvalOptions eval;
  std::string eval_checkpoint;
  BenchOptions bench;
};

/// Defaults used by the shipped configs: the W1 world and the desk-scale model.
RunConfig default_run_config();

/// Applies one `key=value` assignment; unknown keys and malformed values throw.
void apply_setting(RunConfig& config, const std::string& assignment);
std::vector<std::string> known_keys();

/// Reads a config file on top of `base`; errors carry the line number.
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base);
RunConfig parse_run_config(const std::string& text, RunConfig base, const std::string& source = "config");

/// Every key with its resolved value, in `known_keys()` order. Feeding the
/// lines back through `apply_setting` reproduces the config.
std::vector<std::string> snapshot(const RunConfig& config);
std::string snapshot_text(const RunConfig& config);

World build_world(const RunConfig& config);
/// Training and held-out sets, from the corpus files when given, else sampled from the world.
std::pair<Dataset, Dataset> build_datasets(const RunConfig& config, const World& world);
/// Model config with K, S, T, L and classes resolved from the schedule and world.
DenoiserConfig resolved_model_config(const RunConfig& config);

}  // namespace cdcd
