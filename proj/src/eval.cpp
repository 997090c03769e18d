#include "cdcd/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "cdcd/error.hpp"

namespace cdcd {

namespace {

constexpr std::size_t kMaxBatch = 256;

double joint_states(int states, int length) { return std::pow(static_cast<double>(states), length); }

// Calls f(index, prob) for every joint state with nonzero probability under the
// product of the rows of `d`; index is base `d.states()`, first position most significant.
template <typename F>
void for_each_support(const PositionDistributions& d, F&& f) {
  const std::size_t L = d.positions();
  const std::size_t S = d.states();
  std::vector<std::vector<std::pair<std::size_t, double>>> support(L);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t s = 0; s < S; ++s)
      if (d.at(l, s) > 0.0) support[l].emplace_back(s, d.at(l, s));

  std::vector<std::size_t> pick(L, 0);
  if (std::any_of(support.begin(), support.end(), [](const auto& s) { return s.empty(); })) return;
  for (;;) {
    std::size_t index = 0;
    double prob = 1.0;
    for (std::size_t l = 0; l < L; ++l) {
      index = index * S + support[l][pick[l]].first;
      prob *= support[l][pick[l]].second;
    }
    f(index, prob);
    std::size_t pos = L;
    while (pos > 0) {
      --pos;
      if (++pick[pos] < support[pos].size()) break;
      pick[pos] = 0;
      if (pos == 0) return;
    }
    if (L == 0) return;
  }
}

std::vector<int> decode(std::size_t index, int states, int length) {
  std::vector<int> x(static_cast<std::size_t>(length));
  for (int l = length - 1; l >= 0; --l) {
    x[static_cast<std::size_t>(l)] = static_cast<int>(index % static_cast<std::size_t>(states));
    index /= static_cast<std::size_t>(states);
  }
  return x;
}

struct Job {
  std::size_t item;
  int t;
  TokenSequence xt;
  double weight;
};

void check_compatible(const Params& params, const Schedule& schedule, const char* who) {
  if (params.config.codebook != schedule.codebook() || params.config.states != schedule.states() ||
      params.config.steps != schedule.steps())
    throw Error(std::string(who) + ": parameters and schedule disagree on K, S or T");
}

// Negative ELBO for each (x0, label) pair; item i uses streams[i] in Monte Carlo mode.
std::vector<double> elbo_items(const Params& params, std::span<const TokenSequence> xs, std::span<const int> labels,
                               const Schedule& schedule, std::span<const Stream> streams, ElboMethod method) {
  check_compatible(params, schedule, "elbo");
  const int T = schedule.steps();
  const int L = params.config.length;
  const bool exact = method == ElboMethod::Exact ||
                     (method == ElboMethod::Auto && within_joint_guard(schedule, L));
  if (method == ElboMethod::Exact && !within_joint_guard(schedule, L))
    throw Error("elbo: exact evaluation needs S^L <= 4096; shrink K or L, or use Monte Carlo");

  std::vector<double> out(xs.size(), 0.0);
  std::vector<Job> jobs;
  const auto flush = [&]() {
    for (std::size_t start = 0; start < jobs.size(); start += kMaxBatch) {
      const std::size_t end = std::min(jobs.size(), start + kMaxBatch);
      std::vector<DenoiseInput> batch;
      for (std::size_t j = start; j < end; ++j) batch.push_back({jobs[j].xt.tokens, jobs[j].t, labels[jobs[j].item]});
      const auto heads = predict_x0_batch(params, batch);
      for (std::size_t j = start; j < end; ++j) {
        const Job& job = jobs[j];
        const TokenSequence& x0 = xs[job.item];
        const PositionDistributions& head = heads[j - start];
        double term = 0.0;
        if (job.t == 1) {
          for (std::size_t l = 0; l < x0.size(); ++l)
            term -= std::log(head.at(l, static_cast<std::size_t>(x0.tokens[l])));
        } else {
          term = kl_categorical(posterior(x0, job.xt, job.t, schedule), compose_reverse(head, job.xt, job.t, schedule));
        }
        out[job.item] += job.weight * term;
      }
    }
    jobs.clear();
  };

  for (std::size_t i = 0; i < xs.size(); ++i) {
    const TokenSequence& x0 = xs[i];
    if (static_cast<int>(x0.size()) != L) throw Error("elbo: sequence length does not match the model");
    out[i] += prior_kl(x0, schedule);
    for (int t = 1; t <= T; ++t) {
      if (exact) {
        const PositionDistributions q = forward_marginal(x0, t, schedule);
        for_each_support(q, [&](std::size_t index, double prob) {
          jobs.push_back({i, t, TokenSequence{decode(index, schedule.states(), L), x0.label}, prob});
        });
      } else {
        Stream corr = corruption_stream(streams[i], t);
        jobs.push_back({i, t, forward_sample(x0, t, schedule, corr), 1.0});
      }
    }
    if (jobs.size() >= 4 * kMaxBatch) flush();
  }
  flush();
  return out;
}

}  // namespace

bool within_joint_guard(const Schedule& schedule, int length) {
  return joint_states(schedule.states(), length) <= kJointStateGuard;
}

double elbo_sequence(const Params& params, const TokenSequence& x0, int label, const Schedule& schedule,
                     const Stream& rng, ElboMethod method) {
  const int labels[] = {label};
  return elbo_items(params, std::span(&x0, 1), labels, schedule, std::span(&rng, 1), method).front();
}

double elbo_nll(const Params& params, const Dataset& data, const Schedule& schedule, const Stream& rng,
                ElboMethod method) {
  validate(data);
  if (data.empty()) throw Error("elbo_nll: empty dataset");
  std::vector<int> labels;
  std::vector<Stream> streams;
  for (std::size_t i = 0; i < data.size(); ++i) {
    labels.push_back(*data.items[i].label);
    streams.push_back(rng.split(i));
  }
  const auto per_item = elbo_items(params, data.items, labels, schedule, streams, method);
  double sum = 0.0;
  for (double v : per_item) sum += v;
  return sum / (static_cast<double>(data.size()) * data.length);
}

std::vector<double> exact_model_distribution(const Params& params, int label, const Schedule& schedule) {
  check_compatible(params, schedule, "exact_model_distribution");
  const int L = params.config.length;
  const int S = schedule.states();
  const int K = schedule.codebook();
  if (!within_joint_guard(schedule, L))
    throw Error("exact_nll: S^L = " + std::to_string(joint_states(S, L)) +
                " exceeds the joint-state guard of 4096; shrink K or L");
  if (label < 0 || label >= params.config.classes) throw Error("exact_nll: class out of range");

  const auto prior = stationary_distribution(schedule);
  PositionDistributions prior_rows(static_cast<std::size_t>(L), static_cast<std::size_t>(S));
  for (int l = 0; l < L; ++l)
    std::copy(prior.begin(), prior.end(), prior_rows.row(static_cast<std::size_t>(l)).begin());
  std::vector<double> v(static_cast<std::size_t>(joint_states(S, L)), 0.0);
  for_each_support(prior_rows, [&](std::size_t index, double prob) { v[index] = prob; });

  std::vector<double> model(static_cast<std::size_t>(joint_states(K, L)), 0.0);
  for (int t = schedule.steps(); t >= 1; --t) {
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] > 0.0) live.push_back(i);
    std::vector<double> next(t == 1 ? 0 : v.size(), 0.0);
    for (std::size_t start = 0; start < live.size(); start += kMaxBatch) {
      const std::size_t end = std::min(live.size(), start + kMaxBatch);
      std::vector<TokenSequence> xt;
      std::vector<DenoiseInput> batch;
      for (std::size_t j = start; j < end; ++j) xt.push_back({decode(live[j], S, L), label});
      for (const TokenSequence& x : xt) batch.push_back({x.tokens, t, label});
      const auto heads = predict_x0_batch(params, batch);
      for (std::size_t j = start; j < end; ++j) {
        const double w = v[live[j]];
        if (t == 1) {
          for_each_support(heads[j - start], [&](std::size_t index, double prob) { model[index] += w * prob; });
        } else {
          const auto rev = compose_reverse(heads[j - start], xt[j - start], t, schedule);
          for_each_support(rev, [&](std::size_t index, double prob) { next[index] += w * prob; });
        }
      }
    }
    if (t > 1) v = std::move(next);
  }
  return model;
}

double exact_nll(const Params& params, const TokenSequence& x0, int label, const Schedule& schedule) {
  if (static_cast<int>(x0.size()) != params.config.length) throw Error("exact_nll: sequence length mismatch");
  const auto model = exact_model_distribution(params, label, schedule);
  std::size_t index = 0;
  for (int tok : x0.tokens) {
    if (tok < 0 || tok >= schedule.codebook()) throw Error("exact_nll: token outside the codebook");
    index = index * static_cast<std::size_t>(schedule.codebook()) + static_cast<std::size_t>(tok);
  }
  return -std::log(model[index]);
}

MiEstimate mi_lower_bound(RatioSource source, const World& world, const Dataset& data, int negatives, Stream rng,
                          NegativeSource negative_source, const Params* params, const Schedule* schedule) {
  if (negatives < 1) throw Error("mi_lower_bound: N must be >= 1");
  validate(data);
  if (data.empty()) throw Error("mi_lower_bound: empty dataset");
  const auto G = static_cast<std::size_t>(world.classes);
  if (data.classes != world.classes) throw Error("mi_lower_bound: dataset and world disagree on class count");

  MiEstimate est;
  // log p(z | g) for every class g, from the world or the model.
  std::function<std::vector<double>(const TokenSequence&)> class_loglik;
  std::vector<std::vector<double>> exact_model;
  std::map<std::vector<int>, std::vector<double>> cache;
  if (source == RatioSource::Oracle) {
    class_loglik = [&](const TokenSequence& z) {
      std::vector<double> out(G);
      for (std::size_t g = 0; g < G; ++g) out[g] = log_sequence_probability(world, z.tokens, static_cast<int>(g));
      return out;
    };
  } else {
    if (!params || !schedule) throw Error("mi_lower_bound: model ratios need parameters and a schedule");
    if (within_joint_guard(*schedule, params->config.length)) {
      for (std::size_t g = 0; g < G; ++g)
        exact_model.push_back(exact_model_distribution(*params, static_cast<int>(g), *schedule));
      class_loglik = [&](const TokenSequence& z) {
        std::size_t index = 0;
        for (int tok : z.tokens) index = index * static_cast<std::size_t>(world.codebook) + static_cast<std::size_t>(tok);
        std::vector<double> out(G);
        for (std::size_t g = 0; g < G; ++g) out[g] = std::log(exact_model[g][index]);
        return out;
      };
    } else {
      est.proxy = true;
      const Stream elbo_rng = rng.split(0x5eed);
      class_loglik = [&, elbo_rng](const TokenSequence& z) {
        auto it = cache.find(z.tokens);
        if (it != cache.end()) return it->second;
        std::vector<double> out(G);
        for (std::size_t g = 0; g < G; ++g)
          out[g] = -elbo_sequence(*params, z, static_cast<int>(g), *schedule, elbo_rng);
        cache.emplace(z.tokens, out);
        return out;
      };
    }
  }
  const auto log_ratio = [&](const TokenSequence& z, int g) {
    const auto ll = class_loglik(z);
    double mx = -INFINITY;
    for (double v : ll) mx = std::max(mx, v);
    double acc = 0.0;
    for (std::size_t h = 0; h < G; ++h) acc += world.class_prior[h] * std::exp(ll[h] - mx);
    return ll[static_cast<std::size_t>(g)] - (mx + std::log(acc));
  };

  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const TokenSequence& z = data.items[i];
    const int g = *z.label;
    Stream s = rng.split(i);
    const double lf0 = log_ratio(z, g);
    std::vector<double> lfs{lf0};
    for (int j = 0; j < negatives; ++j) {
      const TokenSequence& neg = negative_source == NegativeSource::Marginal ? data.items[s.below(data.size())]
                                                                             : inter_sample(data, g, s);
      lfs.push_back(log_ratio(neg, g));
    }
    const double mx = *std::max_element(lfs.begin(), lfs.end());
    double acc = 0.0;
    for (double lf : lfs) acc += std::exp(lf - mx);
    const double loss = mx + std::log(acc) - lf0;
    sum += loss;
    sum_sq += loss * loss;
  }
  const double n = static_cast<double>(data.size());
  const double mean = sum / n;
  const double var = std::max(0.0, sum_sq / n - mean * mean);
  est.bound = std::log(static_cast<double>(negatives)) - mean;
  est.standard_error = std::sqrt(var / n);
  est.draws = data.size();
  return est;
}

std::vector<TokenSequence> generate_class_samples(const Params& params, const Schedule& schedule,
                                                  const SamplerConfig& config, int classes, int per_class,
                                                  const Stream& rng) {
  std::vector<TokenSequence> out;
  for (int g = 0; g < classes; ++g) {
    auto batch = sample_batch(params, g, schedule, config, per_class, rng.split(static_cast<std::uint64_t>(g)));
    for (auto& x : batch) out.push_back(std::move(x));
  }
  return out;
}

double classification_accuracy(const World& world, std::span<const TokenSequence> samples) {
  if (samples.empty()) throw Error("classification_accuracy: no samples");
  std::size_t hits = 0;
  for (const TokenSequence& x : samples) {
    if (!x.label) throw Error("classification_accuracy: unlabelled sample");
    if (bayes_classify(world, x.tokens) == *x.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double genre_accuracy(const World& world, const Params& params, const Schedule& schedule,
                      const SamplerConfig& config, int per_class, const Stream& rng) {
  if (per_class < 1) throw Error("genre_accuracy: need at least one sample per class");
  const auto samples = generate_class_samples(params, schedule, config, world.classes, per_class, rng);
  return classification_accuracy(world, samples);
}

double local_coherence_distance(const World& world, std::span<const TokenSequence> samples) {
  if (samples.empty()) throw Error("local_coherence_distance: no samples");
  const auto K = static_cast<std::size_t>(world.codebook);
  const auto G = static_cast<std::size_t>(world.classes);
  std::vector<std::vector<double>> counts(G, std::vector<double>(K * K, 0.0));
  std::vector<double> totals(G, 0.0);
  for (const TokenSequence& x : samples) {
    if (!x.label || *x.label < 0 || *x.label >= world.classes)
      throw Error("local_coherence_distance: sample without a valid class");
    const auto g = static_cast<std::size_t>(*x.label);
    for (std::size_t l = 1; l < x.size(); ++l) {
      const int a = x.tokens[l - 1];
      const int b = x.tokens[l];
      if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= K || static_cast<std::size_t>(b) >= K)
        throw Error("local_coherence_distance: token outside the codebook");
      counts[g][static_cast<std::size_t>(a) * K + static_cast<std::size_t>(b)] += 1.0;
      totals[g] += 1.0;
    }
  }
  double sum = 0.0;
  int present = 0;
  for (std::size_t g = 0; g < G; ++g) {
    if (totals[g] == 0.0) continue;
    const auto truth = true_bigram_distribution(world, static_cast<int>(g));
    double tv = 0.0;
    for (std::size_t k = 0; k < K * K; ++k) tv += std::abs(counts[g][k] / totals[g] - truth[k]);
    sum += 0.5 * tv;
    ++present;
  }
  if (present == 0) throw Error("local_coherence_distance: samples hold no bigrams");
  return sum / present;
}

EvalReport evaluate_model(const World& world, const Params& params, const Schedule& schedule,
                          const Dataset& heldout, const EvalOptions& options) {
  if (heldout.empty()) throw Error("eval: empty held-out set");
  const Stream root(options.seed);
  EvalReport r;
  r.steps = schedule.steps();
  r.mode = options.mode;
  r.seed = options.seed;
  r.elbo_per_token = elbo_nll(params, heldout, schedule, root.split(0));
  if (within_joint_guard(schedule, heldout.length)) {
    std::vector<std::vector<double>> dists;
    for (int g = 0; g < world.classes; ++g) dists.push_back(exact_model_distribution(params, g, schedule));
    double sum = 0.0;
    for (const TokenSequence& x : heldout.items) {
      std::size_t index = 0;
      for (int tok : x.tokens) index = index * static_cast<std::size_t>(world.codebook) + static_cast<std::size_t>(tok);
      sum -= std::log(dists[static_cast<std::size_t>(*x.label)][index]);
    }
    r.exact_nll_per_token = sum / (static_cast<double>(heldout.size()) * heldout.length);
  }
  const MiEstimate mi = mi_lower_bound(RatioSource::Model, world, heldout, options.negatives, root.split(1),
                                       NegativeSource::Marginal, &params, &schedule);
  r.mi_lower_bound = mi.bound;
  r.mi_proxy = mi.proxy;
  const auto samples =
      generate_class_samples(params, schedule, options.sampler, world.classes, options.per_class, root.split(2));
  r.genre_accuracy = classification_accuracy(world, samples);
  r.coherence_tv = local_coherence_distance(world, samples);
  return r;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string eval_csv_header(bool with_exact) {
  return std::string("elbo_per_token,") + (with_exact ? "exact_nll_per_token," : "") +
         "mi_lower_bound,mi_source,genre_acc,coherence_tv,T,mode,seed";
}

std::string to_csv(const EvalReport& r) {
  std::string s = fmt(r.elbo_per_token) + ",";
  if (r.exact_nll_per_token) s += fmt(*r.exact_nll_per_token) + ",";
  s += fmt(r.mi_lower_bound) + "," + (r.mi_proxy ? "elbo-proxy" : "exact") + "," + fmt(r.genre_accuracy) + "," +
       fmt(r.coherence_tv) + "," + std::to_string(r.steps) + "," + r.mode + "," + std::to_string(r.seed);
  return s;
}

void apply_mode(TrainConfig& c, const std::string& mode) {
  if (mode == "vanilla") {
    c.loss.mode = LossMode::Vanilla;
    c.negative_kind.reset();
    return;
  }
  const auto dash = mode.find('-');
  if (dash == std::string::npos) throw Error("unknown mode '" + mode + "'");
  c.loss.mode = parse_loss_mode(mode.substr(0, dash));
  if (c.loss.mode == LossMode::Vanilla) throw Error("unknown mode '" + mode + "'");
  c.negative_kind = parse_negative_kind(mode.substr(dash + 1));
}

BenchRow run_bench_cell(const BenchSpec& spec, int steps, const std::string& mode, std::uint64_t seed) {
  TrainConfig cfg = spec.base;
  cfg.schedule.steps = steps;
  cfg.seed = seed;
  apply_mode(cfg, mode);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult trained = train(cfg, spec.train);
  const Schedule schedule = build_schedule(cfg.schedule);

  // Evaluation streams do not depend on the cell, so cells are scored on common noise.
  const Stream eval_root(0xe5a1);
  BenchRow row;
  row.world = spec.world.id();
  row.steps = steps;
  row.mode = mode;
  row.seed = seed;
  row.elbo_per_token = elbo_nll(trained.params, spec.heldout, schedule, eval_root.split(0));
  const auto samples = generate_class_samples(trained.params, schedule, spec.sampler, spec.world.classes,
                                              spec.eval_per_class, eval_root.split(1));
  row.genre_accuracy = classification_accuracy(spec.world, samples);
  row.coherence_tv = local_coherence_distance(spec.world, samples);
  row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

std::string bench_csv_header() { return "world,T,mode,seed,elbo_per_token,genre_acc,coherence_tv,wall_s"; }

std::string to_csv(const BenchRow& r) {
  return r.world + "," + std::to_string(r.steps) + "," + r.mode + "," + std::to_string(r.seed) + "," +
         fmt(r.elbo_per_token) + "," + fmt(r.genre_accuracy) + "," + fmt(r.coherence_tv) + "," + fmt(r.wall_seconds);
}

BenchRow parse_bench_row(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (f.size() != 8) throw Error("bench row: expected 8 fields, got " + std::to_string(f.size()));
  try {
    BenchRow r;
    r.world = f[0];
    r.steps = std::stoi(f[1]);
    r.mode = f[2];
    r.seed = std::stoull(f[3]);
    r.elbo_per_token = std::stod(f[4]);
    r.genre_accuracy = std::stod(f[5]);
    r.coherence_tv = std::stod(f[6]);
    r.wall_seconds = std::stod(f[7]);
    return r;
  } catch (const std::logic_error&) {
    throw Error("bench row: malformed field in '" + line + "'");
  }
}

std::vector<BenchRow> convergence_bench(const BenchSpec& spec) {
  struct Cell {
    int steps;
    std::string mode;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (int T : spec.steps)
    for (const std::string& m : spec.modes)
      for (std::uint64_t s : spec.seeds) cells.push_back({T, m, s});

  namespace fs = std::filesystem;
  const auto marker = [&](const Cell& c) {
    return fs::path(spec.resume_dir) / "cells" /
           ("T" + std::to_string(c.steps) + "_" + c.mode + "_s" + std::to_string(c.seed) + ".done");
  };
  if (!spec.resume_dir.empty()) fs::create_directories(fs::path(spec.resume_dir) / "cells");

  std::vector<std::optional<BenchRow>> rows(cells.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!spec.resume_dir.empty() && fs::exists(marker(cells[i]))) {
      std::ifstream in(marker(cells[i]));
      std::string line;
      std::getline(in, line);
      rows[i] = parse_bench_row(line);
    } else {
      todo.push_back(i);
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr failure;
  const auto worker = [&]() {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= todo.size()) return;
      {
        std::lock_guard lock(err_mutex);
        if (failure) return;
      }
      const Cell& c = cells[todo[k]];
      try {
        BenchRow row = run_bench_cell(spec, c.steps, c.mode, c.seed);
        if (!spec.resume_dir.empty()) {
          const fs::path done = marker(c);
          const fs::path tmp = done.string() + ".tmp";
          {
            std::ofstream out(tmp);
            out << to_csv(row) << "\n";
            if (!out) throw Error("bench: cannot write marker " + tmp.string());
          }
          fs::rename(tmp, done);
        }
        rows[todo[k]] = std::move(row);
      } catch (...) {
        std::lock_guard lock(err_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(spec.threads, static_cast<unsigned>(todo.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<BenchRow> out;
  for (auto& r : rows) out.push_back(std::move(*r));
  return out;
}

}  // namespace cdcd
