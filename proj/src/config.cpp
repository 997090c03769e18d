#include "cdcd/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "cdcd/error.hpp"
#include "cdcd/io.hpp"

namespace cdcd {

namespace {

struct Key {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const int x = std::stoi(v, &used);
    if (used == v.size()) return x;
  } catch (const std::logic_error&) {
  }
  throw Error("config: " + key + " expects an integer, got '" + v + "'");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      const std::uint64_t x = std::stoull(v, &used);
      if (used == v.size()) return x;
    }
  } catch (const std::logic_error&) {
  }
  throw Error("config: " + key + " expects an unsigned integer, got '" + v + "'");
}

double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::logic_error&) {
  }
  throw Error("config: " + key + " expects a number, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename Get>
Key int_field(std::string name, Get field) {
  return {name, [field](const RunConfig& c) { return std::to_string(field(const_cast<RunConfig&>(c))); },
          [field, name](RunConfig& c, const std::string& v) { field(c) = to_int(name, v); }};
}

template <typename Get>
Key u64_field(std::string name, Get field) {
  return {name, [field](const RunConfig& c) { return std::to_string(field(const_cast<RunConfig&>(c))); },
          [field, name](RunConfig& c, const std::string& v) { field(c) = to_u64(name, v); }};
}

template <typename Get>
Key real_field(std::string name, Get field) {
  return {name, [field](const RunConfig& c) { return fmt_real(field(const_cast<RunConfig&>(c))); },
          [field, name](RunConfig& c, const std::string& v) { field(c) = to_real(name, v); }};
}

template <typename Get>
Key string_field(std::string name, Get field) {
  return {name, [field](const RunConfig& c) { return field(const_cast<RunConfig&>(c)); },
          [field](RunConfig& c, const std::string& v) { field(c) = v; }};
}

template <typename Get, typename Parse>
Key enum_field(std::string name, Get field, Parse parse) {
  return {name, [field](const RunConfig& c) { return to_string(field(const_cast<RunConfig&>(c))); },
          [field, parse](RunConfig& c, const std::string& v) { field(c) = parse(v); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      int_field("world.classes", [](RunConfig& c) -> int& { return c.world.classes; }),
      int_field("world.codebook", [](RunConfig& c) -> int& { return c.world.codebook; }),
      int_field("world.length", [](RunConfig& c) -> int& { return c.world.length; }),
      real_field("world.concentration", [](RunConfig& c) -> double& { return c.world.concentration; }),
      u64_field("world.seed", [](RunConfig& c) -> std::uint64_t& { return c.world.seed; }),

      int_field("data.train_per_class", [](RunConfig& c) -> int& { return c.data.train_per_class; }),
      int_field("data.heldout_per_class", [](RunConfig& c) -> int& { return c.data.heldout_per_class; }),
      u64_field("data.seed", [](RunConfig& c) -> std::uint64_t& { return c.data.seed; }),
      string_field("data.train_corpus", [](RunConfig& c) -> std::string& { return c.data.train_corpus; }),
      string_field("data.heldout_corpus", [](RunConfig& c) -> std::string& { return c.data.heldout_corpus; }),

      int_field("schedule.steps", [](RunConfig& c) -> int& { return c.train.schedule.steps; }),
      enum_field("schedule.kernel", [](RunConfig& c) -> Kernel& { return c.train.schedule.kernel; }, parse_kernel),
      enum_field("schedule.shape", [](RunConfig& c) -> ScheduleShape& { return c.train.schedule.shape; },
                 parse_schedule_shape),
      real_field("schedule.terminal", [](RunConfig& c) -> double& { return c.train.schedule.terminal; }),

      int_field("model.width", [](RunConfig& c) -> int& { return c.train.model.width; }),
      int_field("model.blocks", [](RunConfig& c) -> int& { return c.train.model.blocks; }),
      int_field("model.heads", [](RunConfig& c) -> int& { return c.train.model.heads; }),
      int_field("model.ffn_mult", [](RunConfig& c) -> int& { return c.train.model.ffn_mult; }),

      real_field("loss.lambda", [](RunConfig& c) -> double& { return c.train.loss.lambda; }),
      enum_field("loss.mode", [](RunConfig& c) -> LossMode& { return c.train.loss.mode; }, parse_loss_mode),
      int_field("loss.negatives", [](RunConfig& c) -> int& { return c.train.loss.negatives; }),
      enum_field("loss.adaptive", [](RunConfig& c) -> AdaptiveWeight& { return c.train.loss.adaptive; },
                 parse_adaptive_weight),
      enum_field("loss.vb", [](RunConfig& c) -> VbEstimator& { return c.train.loss.vb; }, parse_vb_estimator),
      real_field("loss.aux_weight", [](RunConfig& c) -> double& { return c.train.loss.aux_weight; }),
      enum_field("loss.sample_source", [](RunConfig& c) -> SampleSource& { return c.train.loss.sample_source; },
                 parse_sample_source),

      int_field("train.epochs", [](RunConfig& c) -> int& { return c.train.epochs; }),
      int_field("train.batch_size", [](RunConfig& c) -> int& { return c.train.batch_size; }),
      real_field("train.learning_rate", [](RunConfig& c) -> double& { return c.train.learning_rate; }),
      real_field("train.beta1", [](RunConfig& c) -> double& { return c.train.beta1; }),
      real_field("train.beta2", [](RunConfig& c) -> double& { return c.train.beta2; }),
      real_field("train.adam_eps", [](RunConfig& c) -> double& { return c.train.adam_eps; }),
      real_field("train.weight_decay", [](RunConfig& c) -> double& { return c.train.weight_decay; }),
      real_field("train.clip_norm", [](RunConfig& c) -> double& { return c.train.clip_norm; }),
      u64_field("train.seed", [](RunConfig& c) -> std::uint64_t& { return c.train.seed; }),
      real_field("train.contrastive_fraction", [](RunConfig& c) -> double& { return c.train.contrastive_fraction; }),
      int_field("train.eval_interval", [](RunConfig& c) -> int& { return c.train.eval_interval; }),
      {"train.negative_kind",
       [](const RunConfig& c) { return c.train.negative_kind ? to_string(*c.train.negative_kind) : std::string("auto"); },
       [](RunConfig& c, const std::string& v) {
         if (v == "auto")
           c.train.negative_kind.reset();
         else
           c.train.negative_kind = parse_negative_kind(v);
       }},
      int_field("train.chunk", [](RunConfig& c) -> int& { return c.train.chunk; }),

      real_field("sampler.truncation", [](RunConfig& c) -> double& { return c.sampler.truncation; }),
      int_field("sampler.count", [](RunConfig& c) -> int& { return c.sampler.count; }),
      u64_field("sampler.seed", [](RunConfig& c) -> std::uint64_t& { return c.sampler.seed; }),
      int_field("sampler.class", [](RunConfig& c) -> int& { return c.sample.label; }),
      string_field("sampler.checkpoint", [](RunConfig& c) -> std::string& { return c.sample.checkpoint; }),

      int_field("eval.per_class", [](RunConfig& c) -> int& { return c.eval.per_class; }),
      int_field("eval.negatives", [](RunConfig& c) -> int& { return c.eval.negatives; }),
      u64_field("eval.seed", [](RunConfig& c) -> std::uint64_t& { return c.eval.seed; }),
      string_field("eval.checkpoint", [](RunConfig& c) -> std::string& { return c.eval_checkpoint; }),

      {"bench.steps",
       [](const RunConfig& c) {
         std::string s;
         for (int t : c.bench.steps) s += (s.empty() ? "" : ",") + std::to_string(t);
         return s;
       },
       [](RunConfig& c, const std::string& v) {
         c.bench.steps.clear();
         for (const std::string& t : split_list(v)) c.bench.steps.push_back(to_int("bench.steps", t));
       }},
      {"bench.modes",
       [](const RunConfig& c) {
         std::string s;
         for (const std::string& m : c.bench.modes) s += (s.empty() ? "" : ",") + m;
         return s;
       },
       [](RunConfig& c, const std::string& v) {
         c.bench.modes = split_list(v);
         TrainConfig probe;
         for (const std::string& m : c.bench.modes) apply_mode(probe, m);
       }},
      int_field("bench.seeds", [](RunConfig& c) -> int& { return c.bench.seeds; }),
      int_field("bench.eval_per_class", [](RunConfig& c) -> int& { return c.bench.eval_per_class; }),
  };
  return table;
}

}  // namespace

RunConfig default_run_config() {
  RunConfig c;
  c.train.model.width = 32;
  c.train.learning_rate = 3e-3;
  c.train.batch_size = 16;
  c.train.epochs = 30;
  return c;
}

void apply_setting(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw Error("config: expected key=value, got '" + assignment + "'");
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  for (const Key& k : keys())
    if (k.name == key) {
      k.set(config, value);
      return;
    }
  throw Error("config: unknown key '" + key + "'");
}

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const Key& k : keys()) out.push_back(k.name);
  return out;
}

RunConfig parse_run_config(const std::string& text, RunConfig base, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_setting(base, line);
    } catch (const Error& e) {
      throw Error(source + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_run_config(os.str(), std::move(base), path.string());
}

std::vector<std::string> snapshot(const RunConfig& config) {
  std::vector<std::string> out;
  for (const Key& k : keys()) out.push_back(k.name + "=" + k.get(config));
  return out;
}

std::string snapshot_text(const RunConfig& config) {
  std::string s;
  for (const std::string& line : snapshot(config)) s += line + "\n";
  return s;
}

World build_world(const RunConfig& c) {
  return make_world(c.world.classes, c.world.codebook, c.world.length, c.world.concentration, c.world.seed);
}

std::pair<Dataset, Dataset> build_datasets(const RunConfig& c, const World& world) {
  const Stream root(c.data.seed);
  const auto pick = [&](const std::string& corpus, int per_class, std::uint64_t id) {
    if (corpus.empty()) return sample_dataset(world, per_class, root.split(id));
    Dataset d = load_corpus(corpus);
    if (d.codebook != world.codebook || d.length != world.length || d.classes != world.classes)
      throw Error("corpus " + corpus + " does not match the world's K, L or class count");
    d.world_id = world.id();
    return d;
  };
  return {pick(c.data.train_corpus, c.data.train_per_class, 0), pick(c.data.heldout_corpus, c.data.heldout_per_class, 1)};
}

DenoiserConfig resolved_model_config(const RunConfig& c) {
  TrainConfig t = c.train;
  t.schedule.codebook = c.world.codebook;
  const Schedule s = build_schedule(t.schedule);
  DenoiserConfig m = t.model;
  m.codebook = s.codebook();
  m.states = s.states();
  m.steps = s.steps();
  m.length = c.world.length;
  m.classes = c.world.classes;
  m.seed = c.train.seed;
  return m;
}

}  // namespace cdcd
