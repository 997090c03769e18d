#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdcd/rng.hpp"

namespace cdcd {

enum class Kernel { Uniform, MaskUniform };
enum class ScheduleShape { Linear, Cosine };

std::string to_string(Kernel k);
std::string to_string(ScheduleShape s);
Kernel parse_kernel(const std::string& s);
ScheduleShape parse_schedule_shape(const std::string& s);

struct ScheduleConfig {
  int steps = 8;
  int codebook = 16;
  Kernel kernel = Kernel::MaskUniform;
  ScheduleShape shape = ScheduleShape::Linear;
  /// Total corruption reached at the last step, in (0, 1]. For the mask kernel
  /// this is the terminal mask mass; the remaining corruption is uniform.
  double terminal = 1.0;
};

/// One step's kernel: stay with alpha, resample uniformly over the K data
/// tokens with beta, jump to the mask token with gamma.
struct StepCoefficients {
  double alpha = 1.0;
  double beta = 0.0;
  double gamma = 0.0;
};

/// Forward corruption chain. Holds every single-step matrix Q_t and the
/// cumulative products Qbar_t = Q_1 ... Q_t (Qbar_0 is the identity), dense
/// S x S with S = K, or K + 1 when the mask token (index K) is present.
class Schedule {
 public:
  static Schedule from_coefficients(int codebook, Kernel kernel, std::vector<StepCoefficients> steps);

  int steps() const { return static_cast<int>(coeffs_.size()); }
  int codebook() const { return codebook_; }
  int states() const { return states_; }
  Kernel kernel() const { return kernel_; }
  bool has_mask() const { return kernel_ == Kernel::MaskUniform; }
  /// Mask token index, or -1 without a mask kernel.
  int mask_token() const { return has_mask() ? codebook_ : -1; }

  const StepCoefficients& coefficients(int t) const { return coeffs_.at(check_step(t, 1) - 1); }
  /// q(x_t = to | x_{t-1} = from), 1 <= t <= T.
  double step(int t, int from, int to) const { return step_row(t, from)[to]; }
  /// q(x_t = to | x_0 = from), 0 <= t <= T.
  double cumulative(int t, int from, int to) const { return cumulative_row(t, from)[to]; }
  std::span<const double> step_row(int t, int from) const;
  std::span<const double> cumulative_row(int t, int from) const;

 private:
  int check_step(int t, int lo) const;

  int codebook_ = 0;
  int states_ = 0;
  Kernel kernel_ = Kernel::Uniform;
  std::vector<StepCoefficients> coeffs_;
  std::vector<double> step_;  // T blocks of S*S
  std::vector<double> cum_;   // T+1 blocks of S*S
};

/// Length-L token sequence with an optional conditioning class.
struct TokenSequence {
  std::vector<int> tokens;
  std::optional<int> label;

  std::size_t size() const { return tokens.size(); }
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// L rows of probability vectors over `states` outcomes.
class PositionDistributions {
 public:
  PositionDistributions() = default;
  PositionDistributions(std::size_t positions, std::size_t states, double fill = 0.0)
      : positions_(positions), states_(states), probs_(positions * states, fill) {}

  std::size_t positions() const { return positions_; }
  std::size_t states() const { return states_; }
  std::span<double> row(std::size_t l) { return {probs_.data() + l * states_, states_}; }
  std::span<const double> row(std::size_t l) const { return {probs_.data() + l * states_, states_}; }
  double& at(std::size_t l, std::size_t s) { return probs_[l * states_ + s]; }
  double at(std::size_t l, std::size_t s) const { return probs_[l * states_ + s]; }
  const std::vector<double>& data() const { return probs_; }

 private:
  std::size_t positions_ = 0;
  std::size_t states_ = 0;
  std::vector<double> probs_;
};

Schedule build_schedule(const ScheduleConfig& config);

/// Row l is row x0[l] of Qbar_t.
PositionDistributions forward_marginal(const TokenSequence& x0, int t, const Schedule& schedule);
/// Samples x_t ~ q(x_t | x_0) independently per position.
TokenSequence forward_sample(const TokenSequence& x0, int t, const Schedule& schedule, Stream& rng);
/// Samples x_t ~ q(x_t | x_{t-1}) with the single-step kernel.
TokenSequence forward_step_sample(const TokenSequence& prev, int t, const Schedule& schedule, Stream& rng);

/// Writes q(x_{t-1} = . | x_t = xt, x_0 = x0) into `out` (length S).
/// Returns false, leaving `out` zeroed, when xt is unreachable from x0.
bool posterior_row(const Schedule& schedule, int t, int x0, int xt, std::span<double> out);

/// q(x_{t-1} | x_t, x_0) per position, 2 <= t <= T.
PositionDistributions posterior(const TokenSequence& x0, const TokenSequence& xt, int t, const Schedule& schedule);

/// Sum over rows of KL(p_l || q_l) in nats.
double kl_categorical(const PositionDistributions& p, const PositionDistributions& q);
double kl_categorical(std::span<const double> p, std::span<const double> q);

/// Reference prior p(x_T): the average of the rows of Qbar_T over data tokens.
std::vector<double> stationary_distribution(const Schedule& schedule);

/// L_T = sum_l KL(q(x_T | x0_l) || p(x_T)).
double prior_kl(const TokenSequence& x0, const Schedule& schedule);

}  // namespace cdcd
