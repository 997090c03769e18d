#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cdcd/data.hpp"
#include "cdcd/denoiser.hpp"
#include "cdcd/diffusion.hpp"
#include "cdcd/losses.hpp"
#include "cdcd/negatives.hpp"

namespace cdcd {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 4.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.96;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  /// Fraction of items whose contrastive term is kept (rho).
  double contrastive_fraction = 1.0;
  int eval_interval = 1;
  /// Unset: intra for step mode, inter for sample mode.
  std::optional<NegativeKind> negative_kind;
  /// Intra-shuffle chunk size; 0 means L / 4.
  int chunk = 0;

  LossConfig loss;
  ScheduleConfig schedule;
  DenoiserConfig model;
};

void validate(const TrainConfig& config);
NegativeKind resolved_negative_kind(const TrainConfig& config);

struct AdamHyper {
  double learning_rate = 4.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.96;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  std::vector<Tensor> first;
  std::vector<Tensor> second;
  long steps = 0;
};

/// AdamW with bias correction and decoupled weight decay.
void optimizer_step(Params& params, std::span<const Tensor> grads, AdamState& state, const AdamHyper& hyper);

/// Scales `grads` in place so their global L2 norm is at most `max_norm`; returns the norm before scaling.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

/// True with probability rho; decides whether the contrastive term runs for an item at step t.
bool contrastive_step_gate(int t, double rho, Stream& rng);

struct TrainingRecord {
  int epoch = 0;
  LossBreakdown mean;
  double heldout_elbo = 0.0;  // nats per token
  double wall_seconds = 0.0;
};

struct TrainingLog {
  std::vector<TrainingRecord> records;
};

struct TrainResult {
  Params params;
  TrainingLog log;
};

/// Per-iteration: draw t, corrupt, vb estimate, contrastive branch, step.
/// Deterministic in (config, data). Held-out ELBO is logged every
/// `eval_interval` epochs when `heldout` is nonempty.
TrainResult train(const TrainConfig& config, const Dataset& data, const Dataset& heldout = {});

}  // namespace cdcd
