#include "cdcd/sampler.hpp"

#include <algorithm>
#include <cassert>
#include <numeric>

#include "cdcd/error.hpp"

namespace cdcd {

namespace {

constexpr std::size_t kMaxBatch = 256;

void truncate_rows(PositionDistributions& p, double r) {
  for (std::size_t l = 0; l < p.positions(); ++l) {
    const auto kept = truncate_distribution(p.row(l), r);
    std::copy(kept.begin(), kept.end(), p.row(l).begin());
  }
}

// Truncation at t >= 2, except where every kept candidate is unable to reach
// x_t; those positions keep the full head so the reverse step stays defined.
void truncate_reachable(PositionDistributions& p, double r, const TokenSequence& xt, int t, const Schedule& s) {
  for (std::size_t l = 0; l < p.positions(); ++l) {
    const auto kept = truncate_distribution(p.row(l), r);
    double reach = 0.0;
    for (std::size_t k = 0; k < kept.size(); ++k)
      if (s.cumulative(t, static_cast<int>(k), xt.tokens[l]) > 0.0) reach += kept[k];
    if (reach > 0.0) std::copy(kept.begin(), kept.end(), p.row(l).begin());
  }
}

}  // namespace

std::vector<double> truncate_distribution(std::span<const double> dist, double r) {
  if (!(r > 0.0 && r <= 1.0)) throw Error("truncate_distribution: rate must lie in (0, 1]");
  std::vector<double> out(dist.begin(), dist.end());
  if (r >= 1.0) return out;

  std::vector<std::size_t> order(dist.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });

  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < order.size() && mass < r) mass += dist[order[keep++]];
  for (std::size_t i = keep; i < order.size(); ++i) out[order[i]] = 0.0;
  for (double& v : out) v /= mass;
  return out;
}

namespace {

std::vector<TokenSequence> run_chains(const Params& params, int label, const Schedule& schedule,
                                      const SamplerConfig& config, const std::vector<Stream>& streams) {
  if (!(config.truncation > 0.0 && config.truncation <= 1.0))
    throw Error("sample: truncation rate must lie in (0, 1]");
  if (label < 0 || label >= params.config.classes) throw Error("sample: class " + std::to_string(label) + " out of range");
  if (params.config.codebook != schedule.codebook() || params.config.states != schedule.states() ||
      params.config.steps != schedule.steps())
    throw Error("sample: parameters and schedule disagree on K, S or T");

  const auto L = static_cast<std::size_t>(params.config.length);
  const auto prior = stationary_distribution(schedule);
  const int T = schedule.steps();

  std::vector<TokenSequence> xs;
  xs.reserve(streams.size());
  for (const Stream& stream : streams) {
    Stream s = stream.split(0);
    TokenSequence x{std::vector<int>(L), label};
    for (int& tok : x.tokens) tok = static_cast<int>(s.categorical(prior));
    xs.push_back(std::move(x));
  }

  for (int t = T; t >= 1; --t) {
    for (std::size_t start = 0; start < xs.size(); start += kMaxBatch) {
      const std::size_t end = std::min(xs.size(), start + kMaxBatch);
      std::vector<DenoiseInput> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back({xs[i].tokens, t, label});
      auto heads = predict_x0_batch(params, batch);
      for (std::size_t i = start; i < end; ++i) {
        PositionDistributions& head = heads[i - start];
        Stream s = streams[i].split(static_cast<std::uint64_t>(t));
        if (t == 1) {
          truncate_rows(head, config.truncation);
          for (std::size_t l = 0; l < L; ++l) xs[i].tokens[l] = static_cast<int>(s.categorical(head.row(l)));
        } else {
          truncate_reachable(head, config.truncation, xs[i], t, schedule);
          const PositionDistributions rev = compose_reverse(head, xs[i], t, schedule);
          for (std::size_t l = 0; l < L; ++l) xs[i].tokens[l] = static_cast<int>(s.categorical(rev.row(l)));
        }
      }
    }
  }
  // The clean-token head has no mask entry, so the t = 1 draw never emits one.
  for ([[maybe_unused]] const TokenSequence& x : xs)
    assert(std::none_of(x.tokens.begin(), x.tokens.end(), [&](int tok) { return tok >= schedule.codebook(); }));
  return xs;
}

}  // namespace

std::vector<TokenSequence> sample_batch(const Params& params, int label, const Schedule& schedule,
                                        const SamplerConfig& config, int count, const Stream& rng) {
  if (count < 0) throw Error("sample: negative count");
  std::vector<Stream> streams;
  streams.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) streams.push_back(rng.split(static_cast<std::uint64_t>(i)));
  return run_chains(params, label, schedule, config, streams);
}

TokenSequence sample(const Params& params, int label, const Schedule& schedule, const SamplerConfig& config,
                     Stream rng) {
  return std::move(run_chains(params, label, schedule, config, {rng}).front());
}

}  // namespace cdcd
