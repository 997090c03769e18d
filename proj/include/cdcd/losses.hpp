#pragma once

#include <span>
#include <string>
#include <vector>

#include "cdcd/denoiser.hpp"
#include "cdcd/diffusion.hpp"
#include "cdcd/tensor.hpp"

namespace cdcd {

enum class LossMode { Vanilla, Step, Sample };
enum class AdaptiveWeight { Off, LinearDecay };
enum class VbEstimator { SingleTerm, Cumulative };
/// Where the sample-wise term draws z_t: the positive chain, or one chain per negative.
enum class SampleSource { Positive, Negative };

std::string to_string(LossMode m);
std::string to_string(AdaptiveWeight w);
std::string to_string(VbEstimator v);
std::string to_string(SampleSource s);
LossMode parse_loss_mode(const std::string& s);
AdaptiveWeight parse_adaptive_weight(const std::string& s);
VbEstimator parse_vb_estimator(const std::string& s);
SampleSource parse_sample_source(const std::string& s);

struct LossConfig {
  double lambda = 5e-5;
  LossMode mode = LossMode::Vanilla;
  int negatives = 10;
  AdaptiveWeight adaptive = AdaptiveWeight::Off;
  VbEstimator vb = VbEstimator::SingleTerm;
  double aux_weight = 1.0;
  SampleSource sample_source = SampleSource::Positive;
};

void validate(const LossConfig& config);

/// Per-term record in nats. `l_tm1` and `l_0` hold the estimator's
/// contributions (already scaled by T and the adaptive weight in single-term
/// mode), so total = l_T + l_tm1 + l_0 + aux_weight * l_aux + lambda * l_cdcd.
struct LossBreakdown {
  double l_T = 0.0;
  double l_tm1 = 0.0;
  double l_0 = 0.0;
  double l_aux = 0.0;
  double l_cdcd = 0.0;
  double total = 0.0;
  int step = 0;

  double vb() const { return l_T + l_tm1 + l_0; }
};

/// Step weight w_t = (T - t + 1) / T when linear decay is on, else 1.
double adaptive_weight(AdaptiveWeight mode, int t, int steps);

/// Random-stream layout shared by every loss: the step draw and the
/// corruption noise come from fixed children of the stream handed in, so two
/// calls with the same stream see the same t and the same corruption uniforms.
int draw_step(const Stream& rng, int steps);
Stream corruption_stream(const Stream& rng, int t);

/// Graph-building entry points. The trainer and the gradient checks use these;
/// the scalar functions below wrap them.
struct Model {
  Graph& graph;
  const Params& params;
  std::span<const NodeId> nodes;
};

/// Output of `build_vb`: the loss node, the breakdown values, and the
/// network evaluation at the sampled (z_t, t) for reuse by the auxiliary terms.
struct VbTerms {
  NodeId loss = 0;
  LossBreakdown parts;
  TokenSequence zt;
  NodeId log_probs = 0;  // [L, K] log p_theta(x0 | z_t, t, c)
};

VbTerms build_vb(Model model, const TokenSequence& x0, int label, const Schedule& schedule,
                 const LossConfig& config, const Stream& rng);
/// -sum_l log_probs[l, target_l]
NodeId build_aux(Model model, NodeId log_probs, const TokenSequence& target);

struct TotalTerms {
  NodeId loss = 0;
  LossBreakdown parts;
};

/// Full objective for one positive. Contrastive terms are built only when
/// the mode is not vanilla and `contrastive` is set and lambda > 0.
TotalTerms build_total(Model model, const TokenSequence& x0, std::span<const TokenSequence> negatives, int label,
                       const Schedule& schedule, const LossConfig& config, const Stream& rng,
                       bool contrastive = true);

/// Variational-bound estimate (l_T, l_tm1, l_0 filled; l_aux, l_cdcd zero).
LossBreakdown loss_vb(const Params& params, const TokenSequence& x0, int label, const Schedule& schedule,
                      const LossConfig& config, const Stream& rng);

/// -sum_l log p_theta(x0_l | x_t, t, c)
double loss_aux_x0(const Params& params, const TokenSequence& x0, const TokenSequence& xt, int t, int label);

struct ContrastiveResult {
  double l_cdcd = 0.0;
  /// Step mode: L_vb of each negative. Sample mode: auxiliary NLL of each negative.
  std::vector<double> per_negative;
};

/// -(1/N) sum_j L_vb(z^j) with every negative run on the same stream as the positive.
ContrastiveResult loss_cdcd_step(const Params& params, const TokenSequence& x0,
                                 std::span<const TokenSequence> negatives, int label, const Schedule& schedule,
                                 const LossConfig& config, const Stream& rng);

/// -(1/N) sum_j -log p_theta(z^j_0 | z_t, t, c), z_t drawn from the positive chain
/// (or from each negative's chain with SampleSource::Negative).
ContrastiveResult loss_cdcd_sample(const Params& params, const TokenSequence& x0,
                                   std::span<const TokenSequence> negatives, int label, const Schedule& schedule,
                                   const LossConfig& config, const Stream& rng);

/// -log(f / (f + sum_j f_j)) for positive density ratios.
double infonce_cdcd(double positive, std::span<const double> negatives);

LossBreakdown total_loss(const Params& params, const TokenSequence& x0, std::span<const TokenSequence> negatives,
                         int label, const Schedule& schedule, const LossConfig& config, const Stream& rng);

}  // namespace cdcd
