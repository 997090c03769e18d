#pragma once

#include <filesystem>

#include "cdcd/config.hpp"
#include "cdcd/io.hpp"

namespace cdcd {

/// Each command writes its artifacts under `out` and returns 0; failures throw.

/// checkpoint.ckpt, training_log.csv, timing.csv and config.resolved.
int cmd_train(const RunConfig& config, const std::filesystem::path& out);
/// samples.corpus from the checkpoint named by sampler.checkpoint.
int cmd_sample(const RunConfig& config, const std::filesystem::path& out);
/// eval.csv for the checkpoint named by eval.checkpoint, on its own world and held-out set.
int cmd_eval(const RunConfig& config, const std::filesystem::path& out);
/// bench.csv plus per-cell markers under out/cells; `threads` caps parallel cells.
int cmd_bench(const RunConfig& config, const std::filesystem::path& out, unsigned threads);
/// world.txt, train.corpus, heldout.corpus and config.resolved.
int cmd_make_world(const RunConfig& config, const std::filesystem::path& out);

/// Training config with the schedule codebook taken from the world.
TrainConfig resolved_train_config(const RunConfig& config);
/// Config snapshot stored in a checkpoint, parsed back onto the defaults.
RunConfig checkpoint_run_config(const Checkpoint& ckpt);

std::string training_log_csv(const TrainingLog& log);
std::string describe_world(const World& world);

}  // namespace cdcd
