#include "cdcd/diffusion.hpp"

#include <cmath>
#include <numbers>

#include "cdcd/error.hpp"

namespace cdcd {

std::string to_string(Kernel k) { return k == Kernel::Uniform ? "uniform" : "mask-uniform"; }
std::string to_string(ScheduleShape s) { return s == ScheduleShape::Linear ? "linear" : "cosine"; }

Kernel parse_kernel(const std::string& s) {
  if (s == "uniform") return Kernel::Uniform;
  if (s == "mask-uniform" || s == "mask") return Kernel::MaskUniform;
  throw Error("unknown kernel '" + s + "' (expected uniform or mask-uniform)");
}

ScheduleShape parse_schedule_shape(const std::string& s) {
  if (s == "linear") return ScheduleShape::Linear;
  if (s == "cosine") return ScheduleShape::Cosine;
  throw Error("unknown schedule shape '" + s + "' (expected linear or cosine)");
}

Schedule Schedule::from_coefficients(int codebook, Kernel kernel, std::vector<StepCoefficients> steps) {
  if (codebook < 2) throw Error("schedule: codebook size must be >= 2, got " + std::to_string(codebook));
  if (steps.empty()) throw Error("schedule: at least one step is required");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& c = steps[i];
    if (c.alpha < 0 || c.beta < 0 || c.gamma < 0 || std::abs(c.alpha + c.beta + c.gamma - 1.0) > 1e-12)
      throw Error("schedule: step " + std::to_string(i + 1) + " coefficients are not a probability split");
    if (kernel == Kernel::Uniform && c.gamma != 0.0)
      throw Error("schedule: uniform kernel cannot carry mask mass");
  }

  Schedule s;
  s.codebook_ = codebook;
  s.kernel_ = kernel;
  s.states_ = kernel == Kernel::MaskUniform ? codebook + 1 : codebook;
  s.coeffs_ = std::move(steps);

  const std::size_t S = static_cast<std::size_t>(s.states_);
  const std::size_t K = static_cast<std::size_t>(codebook);
  const std::size_t T = s.coeffs_.size();
  s.step_.assign(T * S * S, 0.0);
  s.cum_.assign((T + 1) * S * S, 0.0);
  for (std::size_t i = 0; i < S; ++i) s.cum_[i * S + i] = 1.0;

  for (std::size_t t = 0; t < T; ++t) {
    const auto& c = s.coeffs_[t];
    double* q = s.step_.data() + t * S * S;
    for (std::size_t i = 0; i < K; ++i) {
      for (std::size_t j = 0; j < K; ++j) q[i * S + j] = c.beta / static_cast<double>(K);
      q[i * S + i] += c.alpha;
      if (S > K) q[i * S + K] = c.gamma;
    }
    if (S > K) q[K * S + K] = 1.0;

    const double* prev = s.cum_.data() + t * S * S;
    double* next = s.cum_.data() + (t + 1) * S * S;
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t k = 0; k < S; ++k) {
        const double a = prev[i * S + k];
        if (a == 0.0) continue;
        for (std::size_t j = 0; j < S; ++j) next[i * S + j] += a * q[k * S + j];
      }
  }
  return s;
}

int Schedule::check_step(int t, int lo) const {
  if (t < lo || t > steps())
    throw Error("schedule: step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                std::to_string(steps()) + "]");
  return t;
}

std::span<const double> Schedule::step_row(int t, int from) const {
  check_step(t, 1);
  if (from < 0 || from >= states_) throw Error("schedule: state " + std::to_string(from) + " out of range");
  const std::size_t S = static_cast<std::size_t>(states_);
  return {step_.data() + (static_cast<std::size_t>(t) - 1) * S * S + static_cast<std::size_t>(from) * S, S};
}

std::span<const double> Schedule::cumulative_row(int t, int from) const {
  check_step(t, 0);
  if (from < 0 || from >= states_) throw Error("schedule: state " + std::to_string(from) + " out of range");
  const std::size_t S = static_cast<std::size_t>(states_);
  return {cum_.data() + static_cast<std::size_t>(t) * S * S + static_cast<std::size_t>(from) * S, S};
}

Schedule build_schedule(const ScheduleConfig& config) {
  if (config.steps < 1) throw Error("build_schedule: step count must be >= 1");
  if (config.codebook < 2) throw Error("build_schedule: codebook size must be >= 2");
  if (!(config.terminal > 0.0 && config.terminal <= 1.0))
    throw Error("build_schedule: terminal corruption level must lie in (0, 1], got " + std::to_string(config.terminal));

  const int T = config.steps;
  const double c = config.terminal;
  const bool masked = config.kernel == Kernel::MaskUniform;

  // Corruption progress s_t in [0, 1], with s_0 = 0 and s_T = 1.
  const auto progress = [&](int t) {
    if (t >= T) return 1.0;
    const double u = static_cast<double>(t) / T;
    return config.shape == ScheduleShape::Linear ? u : 1.0 - std::cos(0.5 * std::numbers::pi * u);
  };
  // Cumulative (retain, mask) mass after t steps.
  const auto cumulative = [&](int t) -> std::pair<double, double> {
    const double s = progress(t);
    return masked ? std::pair{1.0 - s, c * s} : std::pair{1.0 - c * s, 0.0};
  };

  std::vector<StepCoefficients> steps;
  for (int t = 1; t <= T; ++t) {
    const auto [keep_prev, mask_prev] = cumulative(t - 1);
    const auto [keep, mask] = cumulative(t);
    StepCoefficients k;
    k.alpha = keep_prev > 0.0 ? keep / keep_prev : 0.0;
    k.gamma = mask_prev < 1.0 ? (mask - mask_prev) / (1.0 - mask_prev) : 1.0;
    if (!masked) k.gamma = 0.0;
    k.beta = 1.0 - k.alpha - k.gamma;
    if (k.beta < 1e-14) {
      // Rounding only; the cumulative parametrization keeps beta >= 0.
      k.alpha += k.beta;
      k.beta = 0.0;
    }
    steps.push_back(k);
  }
  return Schedule::from_coefficients(config.codebook, config.kernel, std::move(steps));
}

namespace {

void check_tokens(const TokenSequence& x, const Schedule& s, const char* what) {
  for (int tok : x.tokens)
    if (tok < 0 || tok >= s.states())
      throw Error(std::string(what) + ": token " + std::to_string(tok) + " outside [0, " + std::to_string(s.states()) +
                  ")");
}

}  // namespace

PositionDistributions forward_marginal(const TokenSequence& x0, int t, const Schedule& schedule) {
  if (t < 1 || t > schedule.steps()) throw Error("forward_marginal: step " + std::to_string(t) + " out of range");
  check_tokens(x0, schedule, "forward_marginal");
  PositionDistributions out(x0.size(), static_cast<std::size_t>(schedule.states()));
  for (std::size_t l = 0; l < x0.size(); ++l) {
    const auto row = schedule.cumulative_row(t, x0.tokens[l]);
    std::copy(row.begin(), row.end(), out.row(l).begin());
  }
  return out;
}

TokenSequence forward_sample(const TokenSequence& x0, int t, const Schedule& schedule, Stream& rng) {
  if (t < 1 || t > schedule.steps()) throw Error("forward_sample: step " + std::to_string(t) + " out of range");
  check_tokens(x0, schedule, "forward_sample");
  TokenSequence xt{std::vector<int>(x0.size()), x0.label};
  for (std::size_t l = 0; l < x0.size(); ++l)
    xt.tokens[l] = static_cast<int>(rng.categorical(schedule.cumulative_row(t, x0.tokens[l])));
  return xt;
}

TokenSequence forward_step_sample(const TokenSequence& prev, int t, const Schedule& schedule, Stream& rng) {
  if (t < 1 || t > schedule.steps()) throw Error("forward_step_sample: step " + std::to_string(t) + " out of range");
  check_tokens(prev, schedule, "forward_step_sample");
  TokenSequence xt{std::vector<int>(prev.size()), prev.label};
  for (std::size_t l = 0; l < prev.size(); ++l)
    xt.tokens[l] = static_cast<int>(rng.categorical(schedule.step_row(t, prev.tokens[l])));
  return xt;
}

bool posterior_row(const Schedule& schedule, int t, int x0, int xt, std::span<double> out) {
  const auto S = static_cast<std::size_t>(schedule.states());
  const double denom = schedule.cumulative(t, x0, xt);
  std::fill(out.begin(), out.end(), 0.0);
  if (!(denom > 0.0)) return false;
  const auto prior = schedule.cumulative_row(t - 1, x0);
  double total = 0.0;
  for (std::size_t k = 0; k < S; ++k) {
    out[k] = schedule.step(t, static_cast<int>(k), xt) * prior[k];
    total += out[k];
  }
  // total equals denom up to rounding; dividing by the realized sum keeps the row normalized.
  for (double& v : out) v /= total;
  return true;
}

PositionDistributions posterior(const TokenSequence& x0, const TokenSequence& xt, int t, const Schedule& schedule) {
  if (t < 2 || t > schedule.steps())
    throw Error("posterior: step " + std::to_string(t) + " outside [2, " + std::to_string(schedule.steps()) + "]");
  if (x0.size() != xt.size()) throw Error("posterior: x0 and xt lengths differ");
  check_tokens(x0, schedule, "posterior");
  check_tokens(xt, schedule, "posterior");
  PositionDistributions out(x0.size(), static_cast<std::size_t>(schedule.states()));
  for (std::size_t l = 0; l < x0.size(); ++l)
    if (!posterior_row(schedule, t, x0.tokens[l], xt.tokens[l], out.row(l)))
      throw Error("posterior: x_t token " + std::to_string(xt.tokens[l]) + " at position " + std::to_string(l) +
                  " is unreachable from x_0 token " + std::to_string(x0.tokens[l]) + " at step " + std::to_string(t));
  return out;
}

double kl_categorical(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error("kl_categorical: lengths differ");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (!(q[i] > 0.0)) throw Error("kl_categorical: q has zero mass at outcome " + std::to_string(i) + " where p > 0");
    kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return kl;
}

double kl_categorical(const PositionDistributions& p, const PositionDistributions& q) {
  if (p.positions() != q.positions() || p.states() != q.states()) throw Error("kl_categorical: shapes differ");
  double kl = 0.0;
  for (std::size_t l = 0; l < p.positions(); ++l) kl += kl_categorical(p.row(l), q.row(l));
  return kl;
}

std::vector<double> stationary_distribution(const Schedule& schedule) {
  const auto S = static_cast<std::size_t>(schedule.states());
  std::vector<double> prior(S, 0.0);
  for (int i = 0; i < schedule.codebook(); ++i) {
    const auto row = schedule.cumulative_row(schedule.steps(), i);
    for (std::size_t j = 0; j < S; ++j) prior[j] += row[j];
  }
  for (double& v : prior) v /= schedule.codebook();
  return prior;
}

double prior_kl(const TokenSequence& x0, const Schedule& schedule) {
  const auto prior = stationary_distribution(schedule);
  double kl = 0.0;
  for (int tok : x0.tokens) kl += kl_categorical(schedule.cumulative_row(schedule.steps(), tok), prior);
  return kl;
}

}  // namespace cdcd
