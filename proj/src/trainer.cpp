#include "cdcd/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "cdcd/error.hpp"
#include "cdcd/eval.hpp"

namespace cdcd {

void validate(const TrainConfig& c) {
  if (c.epochs < 0) throw Error("train config: epochs must be >= 0");
  if (c.batch_size < 1) throw Error("train config: batch size must be >= 1");
  if (!(c.learning_rate > 0.0)) throw Error("train config: learning rate must be > 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0))
    throw Error("train config: Adam betas must lie in [0, 1)");
  if (!(c.adam_eps > 0.0)) throw Error("train config: Adam epsilon must be > 0");
  if (!(c.weight_decay >= 0.0)) throw Error("train config: weight decay must be >= 0");
  if (!(c.clip_norm > 0.0)) throw Error("train config: clip norm must be > 0");
  if (!(c.contrastive_fraction > 0.0 && c.contrastive_fraction <= 1.0))
    throw Error("train config: contrastive fraction must lie in (0, 1]");
  if (c.eval_interval < 1) throw Error("train config: eval interval must be >= 1");
  if (c.chunk < 0) throw Error("train config: chunk size must be >= 0");
  if (c.schedule.steps < 1) throw Error("train config: steps must be >= 1");
  validate(c.loss);
}

NegativeKind resolved_negative_kind(const TrainConfig& c) {
  if (c.negative_kind) return *c.negative_kind;
  return c.loss.mode == LossMode::Sample ? NegativeKind::Inter : NegativeKind::Intra;
}

void optimizer_step(Params& params, std::span<const Tensor> grads, AdamState& state, const AdamHyper& h) {
  if (grads.size() != params.count()) throw Error("optimizer_step: gradient count does not match parameters");
  if (state.first.empty()) {
    for (const Tensor& p : params.tensors) {
      state.first.emplace_back(p.shape, 0.0);
      state.second.emplace_back(p.shape, 0.0);
    }
  }
  ++state.steps;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.steps));
  for (std::size_t i = 0; i < params.count(); ++i) {
    Tensor& p = params.tensors[i];
    const Tensor& g = grads[i];
    if (g.size() != p.size()) throw Error("optimizer_step: gradient shape mismatch for " + params.names[i]);
    Tensor& m = state.first[i];
    Tensor& v = state.second[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m.data[k] = h.beta1 * m.data[k] + (1.0 - h.beta1) * g.data[k];
      v.data[k] = h.beta2 * v.data[k] + (1.0 - h.beta2) * g.data[k] * g.data[k];
      const double update = (m.data[k] / c1) / (std::sqrt(v.data[k] / c2) + h.eps);
      p.data[k] -= h.learning_rate * (update + h.weight_decay * p.data[k]);
    }
  }
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads)
    for (double v : g.data) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (Tensor& g : grads)
      for (double& v : g.data) v *= s;
  }
  return norm;
}

bool contrastive_step_gate(int t, double rho, Stream& rng) {
  (void)t;
  if (!(rho > 0.0 && rho <= 1.0)) throw Error("contrastive_step_gate: rho must lie in (0, 1]");
  if (rho == 1.0) return true;
  return rng.bernoulli(rho);
}

namespace {

DenoiserConfig resolved_model(const TrainConfig& c, const Schedule& schedule, const Dataset& data) {
  DenoiserConfig m = c.model;
  m.codebook = schedule.codebook();
  m.states = schedule.states();
  m.steps = schedule.steps();
  m.length = data.length;
  m.classes = data.classes;
  m.seed = c.seed;
  return m;
}

void accumulate(LossBreakdown& acc, const LossBreakdown& x) {
  acc.l_T += x.l_T;
  acc.l_tm1 += x.l_tm1;
  acc.l_0 += x.l_0;
  acc.l_aux += x.l_aux;
  acc.l_cdcd += x.l_cdcd;
  acc.total += x.total;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& data, const Dataset& heldout) {
  validate(config);
  validate(data);
  if (data.empty()) throw Error("train: empty dataset");
  if (data.codebook != config.schedule.codebook)
    throw Error("train: dataset codebook " + std::to_string(data.codebook) + " does not match schedule codebook " +
                std::to_string(config.schedule.codebook));
  if (!heldout.empty()) {
    validate(heldout);
    if (heldout.codebook != data.codebook || heldout.length != data.length)
      throw Error("train: held-out set does not match the training data shape");
  }

  const Schedule schedule = build_schedule(config.schedule);
  TrainResult result{init_params(resolved_model(config, schedule, data)), {}};
  Params& params = result.params;

  const bool contrastive = config.loss.mode != LossMode::Vanilla && config.loss.lambda > 0.0;
  const NegativeKind kind = resolved_negative_kind(config);
  const int chunk = config.chunk > 0 ? config.chunk : default_chunk_size(data.length);
  const AdamHyper hyper{config.learning_rate, config.beta1, config.beta2, config.adam_eps, config.weight_decay};
  AdamState adam;

  const Stream root(config.seed);
  const Stream loss_streams = root.split(1);
  const Stream negative_streams = root.split(2);
  const Stream gate_streams = root.split(3);
  const Stream shuffle_streams = root.split(4);
  const Stream eval_stream = root.split(5);

  std::vector<std::size_t> order(data.size());
  std::uint64_t item_counter = 0;
  const auto t0 = std::chrono::steady_clock::now();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Stream shuffle = shuffle_streams.split(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    LossBreakdown epoch_sum;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      Graph g;
      const auto ids = register_params(g, params);
      const Model model{g, params, ids};
      NodeId batch_loss = 0;

      for (std::size_t b = start; b < end; ++b) {
        const std::uint64_t counter = item_counter++;
        const TokenSequence& x0 = data.items[order[b]];
        const int label = *x0.label;
        const Stream rng = loss_streams.split(counter);

        std::vector<TokenSequence> negatives;
        bool gate = false;
        if (contrastive) {
          Stream gs = gate_streams.split(counter);
          gate = contrastive_step_gate(draw_step(rng, schedule.steps()), config.contrastive_fraction, gs);
          if (gate) {
            Stream ns = negative_streams.split(counter);
            negatives = build_negative_set(x0, label, data, kind, config.loss.negatives, chunk, ns, order[b]).samples;
          }
        }
        const TotalTerms terms = build_total(model, x0, negatives, label, schedule, config.loss, rng, gate);
        if (!std::isfinite(terms.parts.total)) throw Error("train: non-finite loss at epoch " + std::to_string(epoch));
        accumulate(epoch_sum, terms.parts);
        batch_loss = b == start ? terms.loss : g.add(batch_loss, terms.loss);
      }
      batch_loss = g.scale(batch_loss, 1.0 / static_cast<double>(end - start));

      auto grad_map = g.backward(batch_loss);
      std::vector<Tensor> grads;
      grads.reserve(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i) {
        auto it = grad_map.find(ids[i]);
        grads.push_back(it != grad_map.end() ? std::move(it->second) : Tensor(params.tensors[i].shape, 0.0));
      }
      const double norm = clip_global_norm(grads, config.clip_norm);
      if (!std::isfinite(norm)) throw Error("train: non-finite gradient at epoch " + std::to_string(epoch));
      optimizer_step(params, grads, adam, hyper);
    }

    TrainingRecord rec;
    rec.epoch = epoch;
    const double n = static_cast<double>(data.size());
    rec.mean = {epoch_sum.l_T / n, epoch_sum.l_tm1 / n, epoch_sum.l_0 / n, epoch_sum.l_aux / n,
                epoch_sum.l_cdcd / n, epoch_sum.total / n, 0};
    if (!heldout.empty() && (epoch % config.eval_interval == 0 || epoch == config.epochs))
      rec.heldout_elbo = elbo_nll(params, heldout, schedule, eval_stream);
    else
      rec.heldout_elbo = std::nan("");
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.records.push_back(rec);
  }
  return result;
}

}  // namespace cdcd
