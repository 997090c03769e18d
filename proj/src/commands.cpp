#include "cdcd/commands.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "cdcd/error.hpp"

namespace cdcd {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string mode_name(const TrainConfig& c) {
  if (c.loss.mode == LossMode::Vanilla) return "vanilla";
  return to_string(c.loss.mode) + "-" + to_string(resolved_negative_kind(c));
}

Params load_params(const Checkpoint& ckpt, RunConfig& run) {
  run = checkpoint_run_config(ckpt);
  return params_from_checkpoint(resolved_model_config(run), ckpt);
}

}  // namespace

TrainConfig resolved_train_config(const RunConfig& config) {
  TrainConfig t = config.train;
  t.schedule.codebook = config.world.codebook;
  return t;
}

RunConfig checkpoint_run_config(const Checkpoint& ckpt) {
  RunConfig run = default_run_config();
  for (const std::string& kv : ckpt.config) apply_setting(run, kv);
  return run;
}

std::string training_log_csv(const TrainingLog& log) {
  std::string s = "epoch,l_T,l_tm1,l_0,l_aux,l_cdcd,total,heldout_elbo\n";
  for (const TrainingRecord& r : log.records)
    s += std::to_string(r.epoch) + "," + fmt(r.mean.l_T) + "," + fmt(r.mean.l_tm1) + "," + fmt(r.mean.l_0) + "," +
         fmt(r.mean.l_aux) + "," + fmt(r.mean.l_cdcd) + "," + fmt(r.mean.total) + "," +
         (std::isnan(r.heldout_elbo) ? std::string() : fmt(r.heldout_elbo)) + "\n";
  return s;
}

std::string describe_world(const World& w) {
  std::ostringstream os;
  os << "world " << w.id() << "\n";
  os << "classes " << w.classes << " codebook " << w.codebook << " length " << w.length << "\n";
  for (int g = 0; g < w.classes; ++g) {
    const auto gi = static_cast<std::size_t>(g);
    os << "class " << g << " prior " << fmt(w.class_prior[gi]) << "\ninitial";
    for (double p : w.initial[gi]) os << ' ' << fmt(p);
    os << "\n";
    for (int a = 0; a < w.codebook; ++a) {
      os << "row " << a;
      for (int b = 0; b < w.codebook; ++b) os << ' ' << fmt(w.step_probability(g, a, b));
      os << "\n";
    }
  }
  return os.str();
}

int cmd_train(const RunConfig& config, const fs::path& out) {
  const World world = build_world(config);
  const auto [train_set, heldout] = build_datasets(config, world);
  const TrainConfig tc = resolved_train_config(config);
  const TrainResult result = train(tc, train_set, heldout);

  Checkpoint ckpt{snapshot(config), result.params.names, result.params.tensors};
  std::string timing = "epoch,wall_s\n";
  for (const TrainingRecord& r : result.log.records) timing += std::to_string(r.epoch) + "," + fmt(r.wall_seconds) + "\n";
  fs::create_directories(out);
  write_file_atomic(out / "config.resolved", snapshot_text(config));
  write_file_atomic(out / "training_log.csv", training_log_csv(result.log));
  write_file_atomic(out / "timing.csv", timing);
  save_checkpoint(out / "checkpoint.ckpt", ckpt);
  return 0;
}

int cmd_sample(const RunConfig& config, const fs::path& out) {
  if (config.sample.checkpoint.empty()) throw Error("sample: set sampler.checkpoint (or --checkpoint)");
  RunConfig run;
  const Params params = load_params(load_checkpoint(config.sample.checkpoint), run);
  const int label = config.sample.label;
  if (label < 0 || label >= params.config.classes)
    throw Error("sample: class " + std::to_string(label) + " out of range [0, " +
                std::to_string(params.config.classes) + ")");
  if (config.sampler.count < 0) throw Error("sample: count must be >= 0");
  const Schedule schedule = build_schedule(resolved_train_config(run).schedule);

  Dataset d;
  d.codebook = params.config.codebook;
  d.length = params.config.length;
  d.classes = params.config.classes;
  d.items = sample_batch(params, label, schedule, config.sampler, config.sampler.count, Stream(config.sampler.seed));
  save_corpus(out / "samples.corpus", d);
  return 0;
}

int cmd_eval(const RunConfig& config, const fs::path& out) {
  if (config.eval_checkpoint.empty()) throw Error("eval: set eval.checkpoint (or --checkpoint)");
  RunConfig run;
  const Params params = load_params(load_checkpoint(config.eval_checkpoint), run);
  const World world = build_world(run);
  const Dataset heldout = build_datasets(run, world).second;
  const TrainConfig tc = resolved_train_config(run);
  const Schedule schedule = build_schedule(tc.schedule);

  EvalOptions options = config.eval;
  options.sampler = config.sampler;
  options.mode = mode_name(tc);
  const EvalReport report = evaluate_model(world, params, schedule, heldout, options);
  write_file_atomic(out / "eval.csv",
                    eval_csv_header(report.exact_nll_per_token.has_value()) + "\n" + to_csv(report) + "\n");
  return 0;
}

int cmd_bench(const RunConfig& config, const fs::path& out, unsigned threads) {
  if (config.bench.seeds < 1) throw Error("bench: need at least one seed");
  if (config.bench.steps.empty() || config.bench.modes.empty()) throw Error("bench: empty T or mode list");
  BenchSpec spec;
  spec.world = build_world(config);
  std::tie(spec.train, spec.heldout) = build_datasets(config, spec.world);
  spec.base = resolved_train_config(config);
  spec.steps = config.bench.steps;
  spec.modes = config.bench.modes;
  for (int s = 1; s <= config.bench.seeds; ++s) spec.seeds.push_back(static_cast<std::uint64_t>(s));
  spec.eval_per_class = config.bench.eval_per_class;
  spec.sampler = config.sampler;
  spec.resume_dir = out.string();
  spec.threads = threads;

  fs::create_directories(out);
  write_file_atomic(out / "config.resolved", snapshot_text(config));
  const auto rows = convergence_bench(spec);
  std::string csv = bench_csv_header() + "\n";
  for (const BenchRow& r : rows) csv += to_csv(r) + "\n";
  write_file_atomic(out / "bench.csv", csv);
  return 0;
}

int cmd_make_world(const RunConfig& config, const fs::path& out) {
  const World world = build_world(config);
  const auto [train_set, heldout] = build_datasets(config, world);
  fs::create_directories(out);
  write_file_atomic(out / "config.resolved", snapshot_text(config));
  write_file_atomic(out / "world.txt", describe_world(world));
  save_corpus(out / "train.corpus", train_set);
  save_corpus(out / "heldout.corpus", heldout);
  return 0;
}

}  // namespace cdcd
