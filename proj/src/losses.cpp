#include "cdcd/losses.hpp"

#include <cmath>

#include "cdcd/error.hpp"

namespace cdcd {

std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::Vanilla: return "vanilla";
    case LossMode::Step: return "step";
    case LossMode::Sample: return "sample";
  }
  return "?";
}

std::string to_string(AdaptiveWeight w) { return w == AdaptiveWeight::Off ? "off" : "linear-decay"; }
std::string to_string(VbEstimator v) { return v == VbEstimator::SingleTerm ? "single-term" : "alg1-cumulative"; }
std::string to_string(SampleSource s) { return s == SampleSource::Positive ? "positive" : "negative"; }

LossMode parse_loss_mode(const std::string& s) {
  if (s == "vanilla") return LossMode::Vanilla;
  if (s == "step") return LossMode::Step;
  if (s == "sample") return LossMode::Sample;
  throw Error("unknown loss mode '" + s + "' (expected vanilla, step or sample)");
}

AdaptiveWeight parse_adaptive_weight(const std::string& s) {
  if (s == "off") return AdaptiveWeight::Off;
  if (s == "linear-decay") return AdaptiveWeight::LinearDecay;
  throw Error("unknown adaptive weight '" + s + "' (expected off or linear-decay)");
}

VbEstimator parse_vb_estimator(const std::string& s) {
  if (s == "single-term") return VbEstimator::SingleTerm;
  if (s == "alg1-cumulative") return VbEstimator::Cumulative;
  throw Error("unknown vb estimator '" + s + "' (expected single-term or alg1-cumulative)");
}

SampleSource parse_sample_source(const std::string& s) {
  if (s == "positive") return SampleSource::Positive;
  if (s == "negative") return SampleSource::Negative;
  throw Error("unknown sample source '" + s + "' (expected positive or negative)");
}

void validate(const LossConfig& c) {
  if (!(c.lambda >= 0.0)) throw Error("loss config: lambda must be >= 0");
  if (c.mode != LossMode::Vanilla && c.negatives < 1) throw Error("loss config: negative count must be >= 1");
  if (!(c.aux_weight >= 0.0)) throw Error("loss config: auxiliary weight must be >= 0");
}

double adaptive_weight(AdaptiveWeight mode, int t, int steps) {
  if (mode == AdaptiveWeight::Off) return 1.0;
  return static_cast<double>(steps - t + 1) / steps;
}

int draw_step(const Stream& rng, int steps) {
  Stream s = rng.split(0);
  return static_cast<int>(s.below(static_cast<std::uint64_t>(steps))) + 1;
}

Stream corruption_stream(const Stream& rng, int t) { return rng.split(1).split(static_cast<std::uint64_t>(t)); }

namespace {

struct StepTerm {
  NodeId loss;
  NodeId log_probs;
};

Tensor one_hot(const TokenSequence& x, std::size_t width) {
  Tensor t({x.size(), width}, 0.0);
  for (std::size_t l = 0; l < x.size(); ++l) {
    const int tok = x.tokens[l];
    if (tok < 0 || static_cast<std::size_t>(tok) >= width)
      throw Error("loss: clean token " + std::to_string(tok) + " outside the codebook");
    t.data[l * width + static_cast<std::size_t>(tok)] = 1.0;
  }
  return t;
}

// Unweighted per-step term at (z_t, t): L_0 for t = 1, KL(q(x_{t-1}|z_t,x0) || p_theta(x_{t-1}|z_t,c)) otherwise.
StepTerm build_step_term(Model m, const TokenSequence& x0, const TokenSequence& zt, int t, int label,
                         const Schedule& schedule) {
  Graph& g = m.graph;
  const DenoiseInput in{zt.tokens, t, label};
  const NodeId logits = build_logits(g, m.params, m.nodes, std::span(&in, 1));
  const NodeId log_probs = g.log_softmax(logits);
  const auto L = x0.size();
  const auto K = static_cast<std::size_t>(schedule.codebook());
  const auto S = static_cast<std::size_t>(schedule.states());

  if (t == 1) {
    const NodeId picked = g.sum(g.mul(log_probs, g.constant(one_hot(x0, K))));
    return {g.scale(picked, -1.0), log_probs};
  }

  const PositionDistributions q = posterior(x0, zt, t, schedule);
  Tensor post({L, K, S}, 0.0);
  Tensor reach({L, K}, 0.0);
  bool all_reachable = true;
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t k = 0; k < K; ++k) {
      std::span<double> row(post.data.data() + (l * K + k) * S, S);
      const bool ok = posterior_row(schedule, t, static_cast<int>(k), zt.tokens[l], row);
      reach.data[l * K + k] = ok ? 1.0 : 0.0;
      all_reachable = all_reachable && ok;
    }
  double neg_entropy = 0.0;
  for (double v : q.data())
    if (v > 0.0) neg_entropy += v * std::log(v);

  const NodeId probs = g.softmax(logits);
  const NodeId mixed = g.reshape(g.matmul(g.reshape(probs, {L, 1, K}), g.constant(std::move(post))), {L, S});
  NodeId kl = g.add(g.cross_entropy(mixed, g.constant(Tensor({L, S}, q.data()))), g.constant(Tensor::scalar(neg_entropy)));
  if (!all_reachable) {
    // Candidates that cannot reach z_t are dropped: divide each row by its reachable mass.
    const NodeId kept = g.sum_last(g.mul(probs, g.constant(std::move(reach))));
    kl = g.add(kl, g.scale(g.cross_entropy(kept, g.constant(Tensor({L}, 1.0))), -1.0));
  }
  return {kl, log_probs};
}

}  // namespace

VbTerms build_vb(Model m, const TokenSequence& x0, int label, const Schedule& schedule, const LossConfig& config,
                 const Stream& rng) {
  Graph& g = m.graph;
  const int T = schedule.steps();
  const int t = draw_step(rng, T);

  VbTerms out;
  out.parts.step = t;
  out.parts.l_T = prior_kl(x0, schedule);

  const auto add_term = [&](int i, double factor) {
    Stream corr = corruption_stream(rng, i);
    TokenSequence zi = forward_sample(x0, i, schedule, corr);
    const StepTerm term = build_step_term(m, x0, zi, i, label, schedule);
    const NodeId scaled = g.scale(term.loss, factor);
    if (i == 1)
      out.parts.l_0 += g.value(scaled).item();
    else
      out.parts.l_tm1 += g.value(scaled).item();
    if (i == t) {
      out.zt = std::move(zi);
      out.log_probs = term.log_probs;
    }
    return scaled;
  };

  NodeId sum;
  if (config.vb == VbEstimator::SingleTerm) {
    sum = add_term(t, static_cast<double>(T) * adaptive_weight(config.adaptive, t, T));
  } else {
    sum = add_term(1, 1.0);
    for (int i = 2; i <= t; ++i) sum = g.add(sum, add_term(i, adaptive_weight(config.adaptive, i, T)));
  }
  out.loss = g.add(sum, g.constant(Tensor::scalar(out.parts.l_T)));
  out.parts.total = g.value(out.loss).item();
  return out;
}

NodeId build_aux(Model m, NodeId log_probs, const TokenSequence& target) {
  Graph& g = m.graph;
  const std::size_t K = g.value(log_probs).cols();
  return g.scale(g.sum(g.mul(log_probs, g.constant(one_hot(target, K)))), -1.0);
}

TotalTerms build_total(Model m, const TokenSequence& x0, std::span<const TokenSequence> negatives, int label,
                       const Schedule& schedule, const LossConfig& config, const Stream& rng, bool contrastive) {
  validate(config);
  Graph& g = m.graph;
  VbTerms vb = build_vb(m, x0, label, schedule, config, rng);
  TotalTerms out{vb.loss, vb.parts};

  const NodeId aux = build_aux(m, vb.log_probs, x0);
  out.parts.l_aux = g.value(aux).item();
  if (config.aux_weight != 0.0) out.loss = g.add(out.loss, g.scale(aux, config.aux_weight));

  if (contrastive && config.mode != LossMode::Vanilla && config.lambda > 0.0) {
    if (negatives.empty()) throw Error("cdcd loss: empty negative set");
    // Running mean: duplicated terms leave it bit-identical to each term.
    NodeId acc = 0;
    for (std::size_t j = 0; j < negatives.size(); ++j) {
      NodeId term;
      if (config.mode == LossMode::Step) {
        term = build_vb(m, negatives[j], label, schedule, config, rng).loss;
      } else if (config.sample_source == SampleSource::Positive) {
        term = build_aux(m, vb.log_probs, negatives[j]);
      } else {
        Stream corr = corruption_stream(rng, vb.parts.step);
        const TokenSequence zj = forward_sample(negatives[j], vb.parts.step, schedule, corr);
        const DenoiseInput in{zj.tokens, vb.parts.step, label};
        term = build_aux(m, g.log_softmax(build_logits(g, m.params, m.nodes, std::span(&in, 1))), negatives[j]);
      }
      acc = j == 0 ? term : g.add(acc, g.scale(g.add(term, g.scale(acc, -1.0)), 1.0 / static_cast<double>(j + 1)));
    }
    const NodeId cdcd = g.scale(acc, -1.0);
    out.parts.l_cdcd = g.value(cdcd).item();
    out.loss = g.add(out.loss, g.scale(cdcd, config.lambda));
  }
  out.parts.total = g.value(out.loss).item();
  return out;
}

LossBreakdown loss_vb(const Params& params, const TokenSequence& x0, int label, const Schedule& schedule,
                      const LossConfig& config, const Stream& rng) {
  Graph g;
  const auto ids = register_params(g, params);
  LossBreakdown parts = build_vb({g, params, ids}, x0, label, schedule, config, rng).parts;
  return parts;
}

double loss_aux_x0(const Params& params, const TokenSequence& x0, const TokenSequence& xt, int t, int label) {
  const PositionDistributions p = predict_x0(params, xt, t, label);
  if (p.positions() != x0.size()) throw Error("loss_aux_x0: length mismatch");
  double nll = 0.0;
  for (std::size_t l = 0; l < x0.size(); ++l) {
    const int tok = x0.tokens[l];
    if (tok < 0 || static_cast<std::size_t>(tok) >= p.states())
      throw Error("loss_aux_x0: clean token " + std::to_string(tok) + " outside the codebook");
    nll -= std::log(p.at(l, static_cast<std::size_t>(tok)));
  }
  return nll;
}

ContrastiveResult loss_cdcd_step(const Params& params, const TokenSequence& x0,
                                 std::span<const TokenSequence> negatives, int label, const Schedule& schedule,
                                 const LossConfig& config, const Stream& rng) {
  (void)x0;  // the positive only fixes the shared stream; its own bound lives in loss_vb
  if (negatives.empty()) throw Error("loss_cdcd_step: empty negative set");
  ContrastiveResult out;
  double mean = 0.0;
  for (const TokenSequence& neg : negatives) {
    const double v = loss_vb(params, neg, label, schedule, config, rng).total;
    out.per_negative.push_back(v);
    mean += (v - mean) / static_cast<double>(out.per_negative.size());
  }
  out.l_cdcd = -mean;
  return out;
}

ContrastiveResult loss_cdcd_sample(const Params& params, const TokenSequence& x0,
                                   std::span<const TokenSequence> negatives, int label, const Schedule& schedule,
                                   const LossConfig& config, const Stream& rng) {
  if (negatives.empty()) throw Error("loss_cdcd_sample: empty negative set");
  const int t = draw_step(rng, schedule.steps());
  ContrastiveResult out;
  double mean = 0.0;
  Stream corr = corruption_stream(rng, t);
  const TokenSequence zt = forward_sample(x0, t, schedule, corr);
  for (const TokenSequence& neg : negatives) {
    double v;
    if (config.sample_source == SampleSource::Positive) {
      v = loss_aux_x0(params, neg, zt, t, label);
    } else {
      Stream c = corruption_stream(rng, t);
      v = loss_aux_x0(params, neg, forward_sample(neg, t, schedule, c), t, label);
    }
    out.per_negative.push_back(v);
    mean += (v - mean) / static_cast<double>(out.per_negative.size());
  }
  out.l_cdcd = -mean;
  return out;
}

double infonce_cdcd(double positive, std::span<const double> negatives) {
  if (!(positive > 0.0)) throw Error("infonce_cdcd: positive ratio must be > 0");
  double others = 0.0;
  for (double f : negatives) {
    if (!(f > 0.0)) throw Error("infonce_cdcd: negative ratio must be > 0");
    others += f;
  }
  return std::log1p(others / positive);
}

LossBreakdown total_loss(const Params& params, const TokenSequence& x0, std::span<const TokenSequence> negatives,
                         int label, const Schedule& schedule, const LossConfig& config, const Stream& rng) {
  Graph g;
  const auto ids = register_params(g, params);
  return build_total({g, params, ids}, x0, negatives, label, schedule, config, rng).parts;
}

}  // namespace cdcd
