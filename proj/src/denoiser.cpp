#include "cdcd/denoiser.hpp"

#include <cmath>
#include <random>

#include "cdcd/error.hpp"

namespace cdcd {

void validate(const DenoiserConfig& c) {
  if (c.codebook < 2 || c.states < c.codebook || c.length < 1 || c.steps < 1 || c.classes < 1 || c.width < 1 ||
      c.blocks < 0 || c.heads < 1 || c.ffn_mult < 1)
    throw Error("denoiser config: nonpositive extent");
  if (c.width % c.heads != 0)
    throw Error("denoiser config: width " + std::to_string(c.width) + " not divisible by head count " +
                std::to_string(c.heads));
}

std::size_t Params::scalar_count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors) n += t.size();
  return n;
}

const Tensor& Params::get(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return tensors[i];
  throw Error("params: no tensor named '" + name + "'");
}

Tensor& Params::get(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const Params&>(*this).get(name));
}

std::vector<ParamSpec> param_layout(const DenoiserConfig& c) {
  validate(c);
  const auto d = static_cast<std::size_t>(c.width);
  const auto dh = d / static_cast<std::size_t>(c.heads);
  const auto ff = d * static_cast<std::size_t>(c.ffn_mult);
  std::vector<ParamSpec> out = {
      {"token_embedding", {static_cast<std::size_t>(c.states), d}},
      {"position_embedding", {static_cast<std::size_t>(c.length), d}},
      {"time_embedding", {static_cast<std::size_t>(c.steps), d}},
      {"class_embedding", {static_cast<std::size_t>(c.classes), d}},
  };
  for (int b = 0; b < c.blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    out.push_back({p + "ln1.gain", {d}});
    out.push_back({p + "ln1.bias", {d}});
    for (int h = 0; h < c.heads; ++h) {
      out.push_back({p + "attn.query" + std::to_string(h), {d, dh}});
      out.push_back({p + "attn.key" + std::to_string(h), {d, dh}});
      out.push_back({p + "attn.value" + std::to_string(h), {d, dh}});
    }
    out.push_back({p + "attn.out.weight", {d, d}});
    out.push_back({p + "attn.out.bias", {d}});
    out.push_back({p + "ln2.gain", {d}});
    out.push_back({p + "ln2.bias", {d}});
    out.push_back({p + "ffn.in.weight", {d, ff}});
    out.push_back({p + "ffn.in.bias", {ff}});
    out.push_back({p + "ffn.out.weight", {ff, d}});
    out.push_back({p + "ffn.out.bias", {d}});
  }
  out.push_back({"final_ln.gain", {d}});
  out.push_back({"final_ln.bias", {d}});
  out.push_back({"head.weight", {d, static_cast<std::size_t>(c.codebook)}});
  out.push_back({"head.bias", {static_cast<std::size_t>(c.codebook)}});
  return out;
}

Params init_params(const DenoiserConfig& config) {
  Params p;
  p.config = config;
  Stream rng(config.seed);
  for (const ParamSpec& spec : param_layout(config)) {
    Tensor t(spec.shape, 0.0);
    const std::string& n = spec.name;
    const auto ends_with = [&](const std::string& suffix) {
      return n.size() >= suffix.size() && n.compare(n.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".gain")) {
      std::fill(t.data.begin(), t.data.end(), 1.0);
    } else if (ends_with("bias") || n == "head.weight") {
      // zero
    } else {
      // Embedding tables are looked up, not multiplied: scale by the width instead of the row count.
      const bool table = ends_with("_embedding");
      const double fan_in = static_cast<double>(table ? spec.shape[1] : spec.shape[0]);
      std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(fan_in));
      Stream local = rng.split(p.names.size());
      for (double& v : t.data) v = normal(local);
    }
    p.names.push_back(spec.name);
    p.tensors.push_back(std::move(t));
  }
  return p;
}

std::vector<NodeId> register_params(Graph& graph, const Params& params) {
  std::vector<NodeId> ids;
  ids.reserve(params.count());
  for (const Tensor& t : params.tensors) ids.push_back(graph.parameter(t));
  return ids;
}

NodeId build_logits(Graph& g, const Params& params, std::span<const NodeId> nodes,
                    std::span<const DenoiseInput> batch) {
  const DenoiserConfig& c = params.config;
  if (nodes.size() != params.count()) throw Error("build_logits: parameter node count mismatch");
  if (batch.empty()) throw Error("build_logits: empty batch");

  const auto L = static_cast<std::size_t>(c.length);
  const auto B = batch.size();
  const auto d = static_cast<std::size_t>(c.width);
  const auto H = static_cast<std::size_t>(c.heads);
  const auto dh = d / H;

  std::vector<std::size_t> tok, pos, time, cls;
  tok.reserve(B * L);
  for (const DenoiseInput& in : batch) {
    if (in.tokens.size() != L)
      throw Error("build_logits: sequence length " + std::to_string(in.tokens.size()) + ", expected " +
                  std::to_string(L));
    if (in.step < 1 || in.step > c.steps) throw Error("build_logits: step " + std::to_string(in.step) + " out of range");
    if (in.label < 0 || in.label >= c.classes)
      throw Error("predict_x0: unknown class index " + std::to_string(in.label));
    for (std::size_t l = 0; l < L; ++l) {
      const int t = in.tokens[l];
      if (t < 0 || t >= c.states) throw Error("build_logits: token " + std::to_string(t) + " out of range");
      tok.push_back(static_cast<std::size_t>(t));
      pos.push_back(l);
      time.push_back(static_cast<std::size_t>(in.step - 1));
      cls.push_back(static_cast<std::size_t>(in.label));
    }
  }

  std::size_t cursor = 0;
  const auto next = [&]() { return nodes[cursor++]; };

  NodeId h = g.gather(next(), std::move(tok));
  h = g.add(h, g.gather(next(), std::move(pos)));
  h = g.add(h, g.gather(next(), std::move(time)));
  h = g.add(h, g.gather(next(), std::move(cls)));

  const double score_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int b = 0; b < c.blocks; ++b) {
    const NodeId ln1_g = next(), ln1_b = next();
    const NodeId a = g.layer_norm(h, ln1_g, ln1_b);
    std::vector<NodeId> heads;
    for (std::size_t head = 0; head < H; ++head) {
      const NodeId wq = next(), wk = next(), wv = next();
      const NodeId q = g.reshape(g.matmul(a, wq), {B, L, dh});
      const NodeId k = g.reshape(g.matmul(a, wk), {B, L, dh});
      const NodeId v = g.reshape(g.matmul(a, wv), {B, L, dh});
      const NodeId attn = g.softmax(g.scale(g.matmul(q, k, true), score_scale));
      heads.push_back(g.reshape(g.matmul(attn, v), {B * L, dh}));
    }
    const NodeId merged = H == 1 ? heads.front() : g.concat(heads);
    const NodeId wo = next(), bo = next();
    h = g.add(h, g.affine(merged, wo, bo));

    const NodeId ln2_g = next(), ln2_b = next();
    const NodeId f = g.layer_norm(h, ln2_g, ln2_b);
    const NodeId w1 = next(), b1 = next(), w2 = next(), b2 = next();
    h = g.add(h, g.affine(g.gelu(g.affine(f, w1, b1)), w2, b2));
  }
  const NodeId lnf_g = next(), lnf_b = next();
  const NodeId out = g.layer_norm(h, lnf_g, lnf_b);
  const NodeId wout = next(), bout = next();
  return g.affine(out, wout, bout);
}

std::vector<PositionDistributions> predict_x0_batch(const Params& params, std::span<const DenoiseInput> batch) {
  Graph g;
  std::vector<NodeId> ids;
  ids.reserve(params.count());
  for (const Tensor& t : params.tensors) ids.push_back(g.constant(t));
  const Tensor& probs = g.value(g.softmax(build_logits(g, params, ids, batch)));

  const auto L = static_cast<std::size_t>(params.config.length);
  const auto K = static_cast<std::size_t>(params.config.codebook);
  std::vector<PositionDistributions> out;
  out.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    PositionDistributions p(L, K);
    std::copy_n(probs.data.begin() + static_cast<std::ptrdiff_t>(b * L * K), L * K, p.row(0).begin());
    out.push_back(std::move(p));
  }
  return out;
}

PositionDistributions predict_x0(const Params& params, const TokenSequence& xt, int t, int label) {
  const DenoiseInput in{xt.tokens, t, label};
  return std::move(predict_x0_batch(params, std::span(&in, 1)).front());
}

PositionDistributions compose_reverse(const PositionDistributions& x0_probs, const TokenSequence& xt, int t,
                                      const Schedule& schedule) {
  if (t < 2 || t > schedule.steps())
    throw Error("reverse_step_distribution: step " + std::to_string(t) + " outside [2, " +
                std::to_string(schedule.steps()) + "]");
  if (x0_probs.positions() != xt.size() || x0_probs.states() != static_cast<std::size_t>(schedule.codebook()))
    throw Error("reverse_step_distribution: prediction shape does not match x_t / codebook");
  const auto S = static_cast<std::size_t>(schedule.states());
  PositionDistributions out(xt.size(), S);
  std::vector<double> post(S);
  for (std::size_t l = 0; l < xt.size(); ++l) {
    double kept = 0.0;
    auto row = out.row(l);
    for (std::size_t k = 0; k < x0_probs.states(); ++k) {
      const double w = x0_probs.at(l, k);
      if (w == 0.0 || !posterior_row(schedule, t, static_cast<int>(k), xt.tokens[l], post)) continue;
      kept += w;
      for (std::size_t s = 0; s < S; ++s) row[s] += w * post[s];
    }
    if (!(kept > 0.0))
      throw Error("reverse_step_distribution: no predicted clean token can reach x_t token " +
                  std::to_string(xt.tokens[l]) + " at position " + std::to_string(l));
    for (double& v : row) v /= kept;
  }
  return out;
}

PositionDistributions reverse_step_distribution(const Params& params, const TokenSequence& xt, int t, int label,
                                                const Schedule& schedule) {
  if (t < 2 || t > schedule.steps())
    throw Error("reverse_step_distribution: step " + std::to_string(t) + " outside [2, " +
                std::to_string(schedule.steps()) + "]");
  return compose_reverse(predict_x0(params, xt, t, label), xt, t, schedule);
}

}  // namespace cdcd
