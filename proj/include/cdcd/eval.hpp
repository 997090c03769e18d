#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdcd/data.hpp"
#include "cdcd/denoiser.hpp"
#include "cdcd/diffusion.hpp"
#include "cdcd/sampler.hpp"
#include "cdcd/trainer.hpp"

namespace cdcd {

/// Exact: every x_t with q(x_t | x_0) > 0 is enumerated (needs S^L <= 4096).
/// MonteCarlo: one draw of x_t per step from a fixed stream. Auto picks Exact when allowed.
enum class ElboMethod { Auto, Exact, MonteCarlo };

constexpr double kJointStateGuard = 4096.0;
bool within_joint_guard(const Schedule& schedule, int length);

/// Negative ELBO of one sequence in nats: L_T + sum_{t>=2} L_{t-1} + L_0, every term evaluated.
double elbo_sequence(const Params& params, const TokenSequence& x0, int label, const Schedule& schedule,
                     const Stream& rng, ElboMethod method = ElboMethod::Auto);

/// Mean negative ELBO over the dataset divided by L (nats per token); each item is
/// conditioned on its own class and uses stream rng.split(index).
double elbo_nll(const Params& params, const Dataset& data, const Schedule& schedule, const Stream& rng,
                ElboMethod method = ElboMethod::Auto);

/// Model probability of every clean sequence (K^L entries, lexicographic) by
/// backward dynamic programming over joint states. Requires S^L <= 4096.
std::vector<double> exact_model_distribution(const Params& params, int label, const Schedule& schedule);

/// -log p_theta(x0 | c) from the dynamic program.
double exact_nll(const Params& params, const TokenSequence& x0, int label, const Schedule& schedule);

enum class RatioSource { Oracle, Model };
enum class NegativeSource { Marginal, InterClass };

struct MiEstimate {
  double bound = 0.0;
  double standard_error = 0.0;
  std::size_t draws = 0;
  /// Model ratios came from exp(-ELBO) rather than the exact likelihood.
  bool proxy = false;
};

/// log(N) - mean InfoNCE loss over the dataset's items, with density ratios
/// f(z, c) = p(z | c) / p(z) from the world (Oracle) or the model (Model).
MiEstimate mi_lower_bound(RatioSource source, const World& world, const Dataset& data, int negatives, Stream rng,
                          NegativeSource negative_source = NegativeSource::Marginal, const Params* params = nullptr,
                          const Schedule* schedule = nullptr);

/// `per_class` conditioned samples for every class, labelled with their conditioning class.
std::vector<TokenSequence> generate_class_samples(const Params& params, const Schedule& schedule,
                                                  const SamplerConfig& config, int classes, int per_class,
                                                  const Stream& rng);

double classification_accuracy(const World& world, std::span<const TokenSequence> samples);

/// Fraction of generated samples that the world's Bayes classifier assigns to their conditioning class.
double genre_accuracy(const World& world, const Params& params, const Schedule& schedule,
                      const SamplerConfig& config, int per_class, const Stream& rng);

/// Mean over classes of the total-variation distance between the samples'
/// empirical bigram frequencies and the world's bigram distribution.
double local_coherence_distance(const World& world, std::span<const TokenSequence> samples);

struct EvalReport {
  double elbo_per_token = 0.0;
  std::optional<double> exact_nll_per_token;
  double mi_lower_bound = 0.0;
  bool mi_proxy = false;
  double genre_accuracy = 0.0;
  double coherence_tv = 0.0;
  int steps = 0;
  std::string mode;
  std::uint64_t seed = 0;
};

struct EvalOptions {
  int per_class = 100;
  int negatives = 10;
  SamplerConfig sampler;
  std::uint64_t seed = 0;
  std::string mode = "vanilla";
};

EvalReport evaluate_model(const World& world, const Params& params, const Schedule& schedule,
                          const Dataset& heldout, const EvalOptions& options);
/// The exact-NLL column is present only when `with_exact` is set.
std::string eval_csv_header(bool with_exact);
std::string to_csv(const EvalReport& report);

/// Contrastive setting names: vanilla, step-intra, step-inter, sample-intra, sample-inter.
void apply_mode(TrainConfig& config, const std::string& mode);

struct BenchSpec {
  World world;
  Dataset train;
  Dataset heldout;
  TrainConfig base;
  std::vector<int> steps;
  std::vector<std::string> modes;
  std::vector<std::uint64_t> seeds;
  int eval_per_class = 100;
  SamplerConfig sampler;
  /// Completed cells leave a marker here and are skipped on rerun; empty disables resume.
  std::string resume_dir;
  unsigned threads = 1;
};

struct BenchRow {
  std::string world;
  int steps = 0;
  std::string mode;
  std::uint64_t seed = 0;
  double elbo_per_token = 0.0;
  double genre_accuracy = 0.0;
  double coherence_tv = 0.0;
  double wall_seconds = 0.0;
};

/// Trains one model per (T, mode, seed) cell under the same epoch budget and
/// scores it. Rows come back in (T, mode, seed) order whatever the thread count.
std::vector<BenchRow> convergence_bench(const BenchSpec& spec);
BenchRow run_bench_cell(const BenchSpec& spec, int steps, const std::string& mode, std::uint64_t seed);
std::string bench_csv_header();
std::string to_csv(const BenchRow& row);
BenchRow parse_bench_row(const std::string& line);

}  // namespace cdcd
