#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cdcd/denoiser.hpp"
#include "cdcd/diffusion.hpp"
#include "cdcd/rng.hpp"

namespace cdcd {

struct SamplerConfig {
  double truncation = 0.86;
  int count = 1;
  std::uint64_t seed = 0;
};

/// Keeps the shortest prefix of entries, sorted by probability (ties: lower
/// index first), whose mass reaches r; zeroes the rest and renormalizes.
std::vector<double> truncate_distribution(std::span<const double> dist, double r);

/// Ancestral sampling: x_T from the reference prior, then for t = T..2 a draw
/// from the reverse kernel built on the truncated clean-token head, and
/// finally x_0 from the truncated head at t = 1.
TokenSequence sample(const Params& params, int label, const Schedule& schedule, const SamplerConfig& config,
                     Stream rng);

/// `count` samples evaluated in lockstep; sample i equals
/// `sample(params, label, schedule, config, rng.split(i))`.
std::vector<TokenSequence> sample_batch(const Params& params, int label, const Schedule& schedule,
                                        const SamplerConfig& config, int count, const Stream& rng);

}  // namespace cdcd
