// Runs the fourteen acceptance criteria and prints one PASS/FAIL line each.
// Exit status is nonzero only when an exact or property criterion (1-8, 14)
// fails; the directional sweep criteria (9-13) report without gating.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cdcd/commands.hpp"
#include "cdcd/error.hpp"
#include "cdcd/eval.hpp"
#include "cdcd/io.hpp"

using namespace cdcd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  bool gating;
  std::function<Outcome()> run;
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Schedule random_schedule(int K, int T, Stream& rng) {
  const Kernel kernel = rng.bernoulli(0.5) ? Kernel::Uniform : Kernel::MaskUniform;
  std::vector<StepCoefficients> steps;
  for (int t = 0; t < T; ++t) {
    double a = 0.2 + 0.7 * rng.uniform(), b = rng.uniform(), g = kernel == Kernel::MaskUniform ? rng.uniform() : 0.0;
    const double z = (1.0 - a) / (b + g);
    steps.push_back({a, b * z, g * z});
  }
  return Schedule::from_coefficients(K, kernel, std::move(steps));
}

DenoiserConfig tiny_model(const Schedule& s, int length, int classes, std::uint64_t seed) {
  DenoiserConfig c;
  c.codebook = s.codebook();
  c.states = s.states();
  c.length = length;
  c.steps = s.steps();
  c.classes = classes;
  c.width = 8;
  c.blocks = 1;
  c.heads = 2;
  c.seed = seed;
  return c;
}

Params random_params(const DenoiserConfig& c, Stream rng, double scale = 1.0) {
  Params p = init_params(c);
  for (Tensor& t : p.tensors)
    for (double& v : t.data) v += scale * (rng.uniform() - 0.5);
  return p;
}

TokenSequence random_sequence(int K, int L, int label, Stream& rng) {
  TokenSequence x{std::vector<int>(static_cast<std::size_t>(L)), label};
  for (int& v : x.tokens) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(K)));
  return x;
}

// Joint probability of each position's state path x_1..x_t by brute force, one position at a time.
std::vector<std::vector<double>> path_table(const Schedule& s, int x0, int t) {
  const int S = s.states();
  // table[a][b]: P(x_{t-1} = a, x_t = b | x_0)
  std::vector<std::vector<double>> table(static_cast<std::size_t>(S), std::vector<double>(static_cast<std::size_t>(S), 0.0));
  std::vector<int> path(static_cast<std::size_t>(t), 0);
  for (;;) {
    double p = 1.0;
    int prev = x0;
    for (int i = 0; i < t; ++i) {
      p *= s.step(i + 1, prev, path[static_cast<std::size_t>(i)]);
      prev = path[static_cast<std::size_t>(i)];
    }
    const int before = t >= 2 ? path[static_cast<std::size_t>(t - 2)] : x0;
    table[static_cast<std::size_t>(before)][static_cast<std::size_t>(path.back())] += p;
    int pos = t - 1;
    while (pos >= 0 && ++path[static_cast<std::size_t>(pos)] == S) path[static_cast<std::size_t>(pos--)] = 0;
    if (pos < 0) break;
  }
  return table;
}

Outcome bayes_identity() {
  double worst = 0.0;
  Stream rng(101);
  for (int c = 0; c < 100; ++c) {
    const Schedule s = random_schedule(3, 3, rng);
    const TokenSequence x0 = random_sequence(3, 2, 0, rng);
    const int t = 2 + static_cast<int>(rng.below(2));
    const TokenSequence xt = forward_sample(x0, t, s, rng);
    const PositionDistributions post = posterior(x0, xt, t, s);
    // Joint over both positions' full paths, then marginalized per position.
    const auto p0 = path_table(s, x0.tokens[0], t), p1 = path_table(s, x0.tokens[1], t);
    const auto S = static_cast<std::size_t>(s.states());
    std::vector<double> joint(S * S, 0.0);
    double z = 0.0;
    for (std::size_t a = 0; a < S; ++a)
      for (std::size_t b = 0; b < S; ++b) {
        joint[a * S + b] = p0[a][static_cast<std::size_t>(xt.tokens[0])] * p1[b][static_cast<std::size_t>(xt.tokens[1])];
        z += joint[a * S + b];
      }
    for (std::size_t a = 0; a < S; ++a) {
      double m0 = 0.0, m1 = 0.0;
      for (std::size_t b = 0; b < S; ++b) {
        m0 += joint[a * S + b] / z;
        m1 += joint[b * S + a] / z;
      }
      worst = std::max({worst, std::abs(m0 - post.at(0, a)), std::abs(m1 - post.at(1, a))});
    }
  }
  return {worst < 1e-12, "max abs error " + num(worst) + " over 100 configurations"};
}

Outcome chain_composition() {
  double worst = 0.0;
  Stream rng(202);
  for (int c = 0; c < 100; ++c) {
    const Schedule s = random_schedule(3, 3, rng);
    const TokenSequence x0 = random_sequence(3, 2, 0, rng);
    for (int t = 1; t <= 3; ++t) {
      const PositionDistributions m = forward_marginal(x0, t, s);
      for (std::size_t l = 0; l < 2; ++l) {
        const auto table = path_table(s, x0.tokens[l], t);
        for (std::size_t b = 0; b < m.states(); ++b) {
          double e = 0.0;
          for (const auto& row : table) e += row[b];
          worst = std::max(worst, std::abs(e - m.at(l, b)));
        }
      }
    }
  }
  return {worst < 1e-12, "max abs error " + num(worst) + " over 100 configurations, t = 1..3"};
}

Outcome elbo_dominance() {
  double worst = 1e300;
  int checks = 0;
  for (std::uint64_t inst = 1; inst <= 20; ++inst) {
    Stream rng(300 + inst);
    const World w = make_world(2, 3, 2, 0.5, inst);
    TrainConfig tc;
    tc.schedule = {3, 3, inst % 2 ? Kernel::Uniform : Kernel::MaskUniform, ScheduleShape::Linear,
                   inst % 2 ? 0.9 : 1.0};
    tc.model.width = 8;
    tc.model.blocks = 1;
    tc.batch_size = 2;
    tc.epochs = 20;  // 10 batches per epoch: 200 optimizer steps
    tc.learning_rate = 1e-2;
    tc.seed = inst;
    const Dataset data = sample_dataset(w, 10, Stream(inst));
    const Schedule s = build_schedule(tc.schedule);
    const Params initial = random_params(tiny_model(s, 2, 2, inst), rng.split(1));
    const Params trained = train(tc, data).params;
    for (const Params* p : {&initial, &trained})
      for (int label = 0; label < 2; ++label)
        for_each_sequence(3, 2, [&](std::span<const int> z) {
          const TokenSequence x{{z.begin(), z.end()}, label};
          const double gap = elbo_sequence(*p, x, label, s, Stream(1), ElboMethod::Exact) - exact_nll(*p, x, label, s);
          worst = std::min(worst, gap);
          ++checks;
        });
  }
  return {worst >= -1e-9, "min ELBO - exact NLL " + num(worst) + " over " + std::to_string(checks) +
                              " sequences (20 instances, random and after 200 steps)"};
}

Outcome gradient_check() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Stream rng(400 + seed);
    const Schedule s = build_schedule({3, 3, seed % 2 ? Kernel::MaskUniform : Kernel::Uniform,
                                       seed % 3 ? ScheduleShape::Linear : ScheduleShape::Cosine, seed % 2 ? 1.0 : 0.9});
    const Params p = random_params(tiny_model(s, 4, 2, seed), rng.split(0));
    const TokenSequence x0 = random_sequence(3, 4, 1, rng);
    std::vector<TokenSequence> negs;
    for (int j = 0; j < 3; ++j) negs.push_back(random_sequence(3, 4, static_cast<int>(rng.below(2)), rng));
    for (LossMode mode : {LossMode::Vanilla, LossMode::Step, LossMode::Sample}) {
      LossConfig c;
      c.mode = mode;
      c.lambda = 0.5;
      c.vb = seed % 2 ? VbEstimator::Cumulative : VbEstimator::SingleTerm;
      c.adaptive = seed % 3 ? AdaptiveWeight::LinearDecay : AdaptiveWeight::Off;
      c.sample_source = seed == 4 ? SampleSource::Negative : SampleSource::Positive;
      const Stream loss_rng = rng.split(10 + static_cast<std::uint64_t>(mode));
      const LossBuilder build = [&](Graph& g, std::span<const NodeId> ids) {
        return build_total({g, p, ids}, x0, negs, 1, s, c, loss_rng).loss;
      };
      worst = std::max(worst, finite_difference_check(build, p.tensors, 1e-5, 64, rng.split(20 + seed)));
    }
  }
  return {worst < 1e-4, "max relative error " + num(worst) + " (3 modes x 5 seeds, 64 coordinates)"};
}

Outcome mi_bound() {
  const World w = make_world(2, 4, 3, 0.5, 5);
  const double mi = true_mutual_information(w);
  const Dataset big = sample_dataset(w, 50000, Stream(51));
  bool ok = true;
  std::string detail = "I = " + num(mi);
  std::vector<double> medians;
  for (int n : {1, 5, 10}) {
    const MiEstimate e = mi_lower_bound(RatioSource::Oracle, w, big, n, Stream(static_cast<std::uint64_t>(500 + n)));
    ok = ok && e.bound <= mi + 3.0 * e.standard_error;
    std::vector<double> reps;
    for (std::uint64_t r = 0; r < 9; ++r) {
      const Dataset d = sample_dataset(w, 2500, Stream(600 + r));
      reps.push_back(mi_lower_bound(RatioSource::Oracle, w, d, n, Stream(700 + r)).bound);
    }
    medians.push_back(median(reps));
    detail += "; N=" + std::to_string(n) + " bound " + num(e.bound) + " +- " + num(e.standard_error, 2) + " median " +
              num(medians.back());
  }
  const bool monotone = medians[0] <= medians[1] && medians[1] <= medians[2];
  return {ok && monotone, detail + (monotone ? "" : " (median not monotone)")};
}

Outcome assembly_identity() {
  double worst = 0.0;
  Stream rng(606);
  for (int c = 0; c < 1000; ++c) {
    const int K = 2 + static_cast<int>(rng.below(3)), L = 2 + static_cast<int>(rng.below(3));
    const int T = 1 + static_cast<int>(rng.below(4));
    const Schedule s = build_schedule({T, K, rng.bernoulli(0.5) ? Kernel::Uniform : Kernel::MaskUniform,
                                       ScheduleShape::Linear, 0.5 + 0.5 * rng.uniform()});
    const Params p = random_params(tiny_model(s, L, 2, static_cast<std::uint64_t>(c)), rng.split(1));
    const int label = static_cast<int>(rng.below(2));
    const TokenSequence x0 = random_sequence(K, L, label, rng);
    std::vector<TokenSequence> negs;
    const int n = 1 + static_cast<int>(rng.below(5));
    for (int j = 0; j < n; ++j) negs.push_back(random_sequence(K, L, label, rng));
    LossConfig cfg;
    cfg.mode = LossMode::Step;
    cfg.lambda = rng.uniform();
    cfg.aux_weight = 0.0;
    cfg.vb = rng.bernoulli(0.5) ? VbEstimator::Cumulative : VbEstimator::SingleTerm;
    cfg.adaptive = rng.bernoulli(0.5) ? AdaptiveWeight::LinearDecay : AdaptiveWeight::Off;
    const Stream shared = rng.split(2);
    double negative_mean = 0.0;
    for (const auto& z : negs) negative_mean += loss_vb(p, z, label, s, cfg, shared).total / n;
    const double expect = loss_vb(p, x0, label, s, cfg, shared).total + cfg.lambda * -negative_mean;
    worst = std::max(worst, std::abs(total_loss(p, x0, negs, label, s, cfg, shared).total - expect));
  }
  return {worst <= 1e-12, "max abs difference " + num(worst) + " over 1000 cases"};
}

Outcome cancellation() {
  int bad = 0, cases = 0;
  Stream rng(707);
  for (int c = 0; c < 200; ++c) {
    const Schedule s = build_schedule({1 + static_cast<int>(rng.below(5)), 3,
                                       rng.bernoulli(0.5) ? Kernel::Uniform : Kernel::MaskUniform,
                                       ScheduleShape::Cosine, 0.9});
    const Params p = random_params(tiny_model(s, 4, 2, static_cast<std::uint64_t>(c)), rng.split(1));
    const TokenSequence x0 = random_sequence(3, 4, 1, rng);
    const std::vector<TokenSequence> dup(1 + rng.below(10), x0);
    const Stream shared = rng.split(2);
    LossConfig cfg;
    cfg.lambda = 0.5;
    cfg.vb = rng.bernoulli(0.5) ? VbEstimator::Cumulative : VbEstimator::SingleTerm;
    cfg.mode = LossMode::Step;
    const double vb = loss_vb(p, x0, 1, s, cfg, shared).total;
    bad += loss_cdcd_step(p, x0, dup, 1, s, cfg, shared).l_cdcd != -vb;
    bad += total_loss(p, x0, dup, 1, s, cfg, shared).l_cdcd != -vb;
    cfg.mode = LossMode::Sample;
    const LossBreakdown b = total_loss(p, x0, dup, 1, s, cfg, shared);
    bad += b.l_cdcd != -b.l_aux;
    cases += 3;
  }
  return {bad == 0, std::to_string(cases - bad) + "/" + std::to_string(cases) + " exact equalities (step and sample)"};
}

Outcome sampler_fidelity() {
  const Schedule s = build_schedule({2, 3, Kernel::Uniform, ScheduleShape::Linear, 0.8});
  const Params p = random_params(tiny_model(s, 1, 2, 8), Stream(808), 1.5);
  const std::vector<double> exact = exact_model_distribution(p, 0, s);
  const int n = 200000;
  std::vector<double> counts(3, 0.0);
  for (const auto& x : sample_batch(p, 0, s, {1.0, 1, 0}, n, Stream(809)))
    counts[static_cast<std::size_t>(x.tokens[0])] += 1.0;
  double chi2 = 0.0;
  for (std::size_t k = 0; k < 3; ++k) chi2 += std::pow(counts[k] - n * exact[k], 2) / (n * exact[k]);
  const double pvalue = std::exp(-chi2 / 2.0);  // chi-square survival function, 2 degrees of freedom
  return {pvalue > 0.01, "chi2 " + num(chi2) + ", p = " + num(pvalue) + " over 200k draws"};
}

Outcome reproducibility() {
  const fs::path root = fs::temp_directory_path() / "cdcd_acceptance_repro";
  fs::remove_all(root);
  RunConfig c = default_run_config();
  for (const char* kv : {"world.classes=2", "world.codebook=4", "world.length=6", "data.train_per_class=16",
                         "data.heldout_per_class=4", "schedule.steps=3", "model.width=8", "model.blocks=1",
                         "train.epochs=3", "train.batch_size=8", "loss.mode=step", "loss.lambda=0.1",
                         "loss.negatives=2"})
    apply_setting(c, kv);
  cmd_train(c, root / "a");
  cmd_train(c, root / "b");
  const bool ckpt = file_digest(root / "a" / "checkpoint.ckpt") == file_digest(root / "b" / "checkpoint.ckpt");
  const bool log = file_digest(root / "a" / "training_log.csv") == file_digest(root / "b" / "training_log.csv");

  const Checkpoint loaded = load_checkpoint(root / "a" / "checkpoint.ckpt");
  save_checkpoint(root / "copy.ckpt", loaded);
  const bool ckpt_rt = file_digest(root / "copy.ckpt") == file_digest(root / "a" / "checkpoint.ckpt") &&
                       params_from_checkpoint(resolved_model_config(c), loaded).tensors == loaded.tensors;

  const World w = make_world(3, 16, 16, 0.5, 9);
  Dataset corpus = sample_dataset(w, 3334, Stream(1));
  corpus.items.resize(10000);
  save_corpus(root / "a.corpus", corpus);
  const Dataset back = load_corpus(root / "a.corpus");
  save_corpus(root / "b.corpus", back);
  const bool corpus_rt = back.items == corpus.items && file_digest(root / "a.corpus") == file_digest(root / "b.corpus");
  fs::remove_all(root);
  return {ckpt && log && ckpt_rt && corpus_rt,
          std::string("checkpoints ") + (ckpt ? "identical" : "DIFFER") + ", logs " + (log ? "identical" : "DIFFER") +
              ", checkpoint round trip " + (ckpt_rt ? "exact" : "BROKEN") + ", 10k corpus round trip " +
              (corpus_rt ? "exact" : "BROKEN")};
}

// W1 sweep shared by criteria 9-13.
struct Sweep {
  std::vector<BenchRow> vanilla8, vanilla16, step8, sample8, sample8_high, sample8_rho;
  double seconds_c9 = 0.0;
};

std::vector<double> column(const std::vector<BenchRow>& rows, double BenchRow::*field) {
  std::vector<double> v;
  for (const auto& r : rows) v.push_back(r.*field);
  return v;
}

Sweep run_sweep(const fs::path& out, unsigned threads) {
  const RunConfig rc = default_run_config();
  BenchSpec base;
  base.world = build_world(rc);
  std::tie(base.train, base.heldout) = build_datasets(rc, base.world);
  base.base = resolved_train_config(rc);
  base.seeds = {1, 2, 3};
  base.eval_per_class = rc.bench.eval_per_class;
  base.sampler = rc.sampler;
  base.threads = threads;

  const auto run = [&](BenchSpec spec, std::vector<int> steps, std::string mode) {
    spec.steps = std::move(steps);
    spec.modes = {std::move(mode)};
    const auto rows = convergence_bench(spec);
    for (const auto& r : rows)
      std::cerr << "  cell T=" << r.steps << " " << r.mode << " seed " << r.seed << ": elbo " << num(r.elbo_per_token)
                << " acc " << num(r.genre_accuracy) << " tv " << num(r.coherence_tv) << " (" << num(r.wall_seconds, 3)
                << " s)\n";
    return rows;
  };
  Sweep s;
  s.vanilla8 = run(base, {8}, "vanilla");
  s.vanilla16 = run(base, {16}, "vanilla");
  s.step8 = run(base, {8}, "step-intra");
  s.sample8 = run(base, {8}, "sample-inter");
  BenchSpec high = base;
  high.base.loss.lambda = 5e-4;
  s.sample8_high = run(high, {8}, "sample-inter");
  BenchSpec rho = base;
  rho.base.contrastive_fraction = 0.6;
  s.sample8_rho = run(rho, {8}, "sample-inter");
  for (const auto* rows : {&s.vanilla16, &s.step8})
    for (const auto& r : *rows) s.seconds_c9 += r.wall_seconds;

  std::ofstream csv(out / "acceptance_sweep.csv");
  csv << "variant," << bench_csv_header() << "\n";
  const std::pair<const char*, const std::vector<BenchRow>*> groups[] = {
      {"vanilla", &s.vanilla8},   {"vanilla", &s.vanilla16},       {"lambda=5e-5", &s.step8},
      {"lambda=5e-5", &s.sample8}, {"lambda=5e-4", &s.sample8_high}, {"rho=0.6", &s.sample8_rho}};
  for (const auto& [tag, rows] : groups)
    for (const auto& r : *rows) csv << tag << "," << to_csv(r) << "\n";
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string out = ".";
  bool skip_sweep = false;
  app.add_option("--out", out, "directory for the sweep CSV");
  app.add_flag("--skip-sweep", skip_sweep, "report criteria 9-13 as not run");
  CLI11_PARSE(app, argc, argv);

  unsigned threads = 1;
  if (const char* env = std::getenv("CDCD_THREADS"); env && *env) threads = static_cast<unsigned>(std::max(1, std::atoi(env)));

  Sweep sweep;
  bool swept = false;
  const auto ensure_sweep = [&] {
    if (!swept) {
      fs::create_directories(out);
      sweep = run_sweep(out, threads);
      swept = true;
    }
  };
  const auto med = [](const std::vector<BenchRow>& rows, double BenchRow::*f) { return median(column(rows, f)); };
  const double pts = 100.0;

  const std::vector<Criterion> criteria = {
      {1, "Bayes-identity oracle", true, bayes_identity},
      {2, "chain-composition oracle", true, chain_composition},
      {3, "ELBO dominance", true, elbo_dominance},
      {4, "gradient correctness", true, gradient_check},
      {5, "MI lower bound", true, mi_bound},
      {6, "assembly identity", true, assembly_identity},
      {7, "trivial-negative cancellation", true, cancellation},
      {8, "sampler fidelity", true, sampler_fidelity},
      {9, "convergence in fewer steps", false,
       [&] {
         ensure_sweep();
         const double step = med(sweep.step8, &BenchRow::elbo_per_token);
         const double van = med(sweep.vanilla16, &BenchRow::elbo_per_token);
         const double van8 = med(sweep.vanilla8, &BenchRow::elbo_per_token);
         return Outcome{step <= van + 0.02 && sweep.seconds_c9 <= 1800.0,
                        "median ELBO step-intra T=8 " + num(step) + " vs vanilla T=16 " + num(van) + " + 0.02 (vanilla T=8 " +
                            num(van8) + "); " + num(sweep.seconds_c9, 3) + " s CPU"};
       }},
      {10, "genre accuracy", false,
       [&] {
         ensure_sweep();
         const double s = med(sweep.sample8, &BenchRow::genre_accuracy), v = med(sweep.vanilla8, &BenchRow::genre_accuracy);
         return Outcome{s >= v + 0.02 && s > 0.25 && v > 0.25,
                        "median accuracy sample-inter " + num(s * pts) + "% vs vanilla " + num(v * pts) + "% (need +2)"};
       }},
      {11, "local coherence", false,
       [&] {
         ensure_sweep();
         const double s = med(sweep.step8, &BenchRow::coherence_tv), v = med(sweep.vanilla8, &BenchRow::coherence_tv);
         return Outcome{s <= v, "median bigram TV step-intra " + num(s) + " vs vanilla " + num(v)};
       }},
      {12, "lambda robustness", false,
       [&] {
         ensure_sweep();
         const double v = med(sweep.vanilla8, &BenchRow::genre_accuracy);
         const double lo = med(sweep.sample8, &BenchRow::genre_accuracy);
         const double hi = med(sweep.sample8_high, &BenchRow::genre_accuracy);
         return Outcome{lo >= v + 0.02 && hi >= v + 0.02 && lo > 0.25 && hi > 0.25 && v > 0.25 && std::abs(hi - lo) < 0.03,
                        "accuracy lambda=5e-5 " + num(lo * pts) + "%, lambda=5e-4 " + num(hi * pts) + "%, vanilla " +
                            num(v * pts) + "%"};
       }},
      {13, "downsampled contrastive steps", false,
       [&] {
         ensure_sweep();
         const double full = med(sweep.sample8, &BenchRow::genre_accuracy);
         const double part = med(sweep.sample8_rho, &BenchRow::genre_accuracy);
         return Outcome{full - part < 0.02, "accuracy rho=1 " + num(full * pts) + "% vs rho=0.6 " + num(part * pts) + "%"};
       }},
      {14, "reproducibility and IO", true, reproducibility},
  };

  int gating_failures = 0, failures = 0, skipped = 0;
  for (const Criterion& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    if (!c.gating && skip_sweep) {
      std::cout << "SKIP " << c.id << " " << c.name << ": sweep not run\n";
      ++skipped;
      continue;
    }
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.id << " " << c.name << ": " << o.detail << " [" << num(secs, 3)
              << " s]" << std::endl;
    if (!o.pass) {
      ++failures;
      if (c.gating) ++gating_failures;
    }
  }
  std::cout << (criteria.size() - failures - skipped) << "/" << criteria.size() << " criteria pass";
  if (skipped) std::cout << ", " << skipped << " skipped";
  if (failures > gating_failures) std::cout << " (" << failures - gating_failures << " directional criteria fail)";
  std::cout << std::endl;
  return gating_failures == 0 ? 0 : 1;
}
