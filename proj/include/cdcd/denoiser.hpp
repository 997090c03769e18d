#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdcd/diffusion.hpp"
#include "cdcd/tensor.hpp"

namespace cdcd {

struct DenoiserConfig {
  int codebook = 16;  // K: clean tokens predicted by the head
  int states = 17;    // S: input vocabulary, K + 1 with a mask token
  int length = 16;    // L
  int steps = 8;      // T: rows of the learned timestep table
  int classes = 4;
  int width = 64;
  int blocks = 2;
  int heads = 2;
  int ffn_mult = 4;
  std::uint64_t seed = 0;
};

void validate(const DenoiserConfig& config);

/// Learnable tensors of the reverse model, in a fixed order given by
/// `param_layout`. The conditioning table is one of them.
struct Params {
  DenoiserConfig config;
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  std::size_t count() const { return tensors.size(); }
  std::size_t scalar_count() const;
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  friend bool operator==(const Params& a, const Params& b) {
    return a.names == b.names && a.tensors == b.tensors;
  }
};

struct ParamSpec {
  std::string name;
  std::vector<std::size_t> shape;
};

std::vector<ParamSpec> param_layout(const DenoiserConfig& config);

/// Deterministic in `config.seed`. Weights are N(0, 1/fan_in), layer norms
/// start at identity and the output head is zero, so the first predictions
/// are uniform.
Params init_params(const DenoiserConfig& config);

/// One sequence to denoise: noisy tokens, step t in [1, T], class label.
struct DenoiseInput {
  std::span<const int> tokens;
  int step = 1;
  int label = 0;
};

/// Registers every tensor of `params` as a parameter node, in layout order.
std::vector<NodeId> register_params(Graph& graph, const Params& params);

/// Appends the network to `graph` and returns the clean-token logits with
/// shape [batch * L, K].
NodeId build_logits(Graph& graph, const Params& params, std::span<const NodeId> nodes,
                    std::span<const DenoiseInput> batch);

/// p_theta(x0 | x_t, t, c): L rows over the K clean tokens.
PositionDistributions predict_x0(const Params& params, const TokenSequence& xt, int t, int label);
std::vector<PositionDistributions> predict_x0_batch(const Params& params, std::span<const DenoiseInput> batch);

/// Mixes posteriors q(x_{t-1} | x_t, x0~) under a clean-token distribution.
/// Candidates x0~ that cannot reach x_t are dropped and the remaining mass
/// renormalized; it is an error if none can.
PositionDistributions compose_reverse(const PositionDistributions& x0_probs, const TokenSequence& xt, int t,
                                      const Schedule& schedule);

/// p_theta(x_{t-1} | x_t, c) for 2 <= t <= T, via the clean-token head.
PositionDistributions reverse_step_distribution(const Params& params, const TokenSequence& xt, int t, int label,
                                                const Schedule& schedule);

}  // namespace cdcd
