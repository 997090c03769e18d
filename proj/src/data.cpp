#include "cdcd/data.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "cdcd/error.hpp"

namespace cdcd {

namespace {

std::vector<double> dirichlet(int k, double concentration, Stream& rng) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  std::vector<double> v(static_cast<std::size_t>(k));
  double total = 0.0;
  for (double& x : v) {
    x = gamma(rng);
    total += x;
  }
  if (!(total > 0.0)) {
    // Every draw underflowed (tiny concentration): the limit is a random vertex.
    std::fill(v.begin(), v.end(), 0.0);
    v[rng.below(static_cast<std::uint64_t>(k))] = 1.0;
    return v;
  }
  for (double& x : v) x /= total;
  return v;
}

double parameter_gap(const World& w, int a, int b) {
  double gap = 0.0;
  const auto ia = static_cast<std::size_t>(a), ib = static_cast<std::size_t>(b);
  for (std::size_t i = 0; i < w.initial[ia].size(); ++i) gap = std::max(gap, std::abs(w.initial[ia][i] - w.initial[ib][i]));
  for (std::size_t i = 0; i < w.transition[ia].size(); ++i)
    gap = std::max(gap, std::abs(w.transition[ia][i] - w.transition[ib][i]));
  return gap;
}

}  // namespace

std::string World::id() const {
  std::ostringstream os;
  os << "G" << classes << "-K" << codebook << "-L" << length << "-a" << concentration << "-s" << seed;
  return os.str();
}

void validate(const Dataset& data) {
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    const TokenSequence& x = data.items[i];
    if (!x.label || *x.label < 0 || *x.label >= data.classes)
      throw Error("dataset: item " + std::to_string(i) + " has a missing or out-of-range class");
    if (static_cast<int>(x.size()) != data.length)
      throw Error("dataset: item " + std::to_string(i) + " has length " + std::to_string(x.size()));
    for (int t : x.tokens)
      if (t < 0 || t >= data.codebook)
        throw Error("dataset: item " + std::to_string(i) + " holds token " + std::to_string(t) + " outside [0, " +
                    std::to_string(data.codebook) + ")");
  }
}

World make_world(int classes, int codebook, int length, double concentration, std::uint64_t seed) {
  if (classes < 2 || codebook < 2 || length < 2)
    throw Error("make_world: need G >= 2, K >= 2, L >= 2 (got G=" + std::to_string(classes) + " K=" +
                std::to_string(codebook) + " L=" + std::to_string(length) + ")");
  if (!(concentration > 0.0)) throw Error("make_world: concentration must be > 0");

  World w;
  w.classes = classes;
  w.codebook = codebook;
  w.length = length;
  w.concentration = concentration;
  w.seed = seed;
  w.class_prior.assign(static_cast<std::size_t>(classes), 1.0 / classes);

  Stream root(seed);
  for (std::uint64_t attempt = 0;; ++attempt) {
    Stream rng = root.split(attempt);
    w.initial.clear();
    w.transition.clear();
    for (int g = 0; g < classes; ++g) {
      w.initial.push_back(dirichlet(codebook, concentration, rng));
      std::vector<double> m;
      m.reserve(static_cast<std::size_t>(codebook * codebook));
      for (int a = 0; a < codebook; ++a) {
        const auto row = dirichlet(codebook, concentration, rng);
        m.insert(m.end(), row.begin(), row.end());
      }
      w.transition.push_back(std::move(m));
    }
    bool distinct = true;
    for (int a = 0; a < classes && distinct; ++a)
      for (int b = a + 1; b < classes && distinct; ++b) distinct = parameter_gap(w, a, b) > 1e-9;
    if (distinct) return w;
    if (attempt > 1000) throw Error("make_world: could not draw distinguishable classes");
  }
}

Dataset sample_dataset(const World& world, int per_class, Stream rng) {
  if (per_class < 0) throw Error("sample_dataset: negative sample count");
  Dataset d;
  d.codebook = world.codebook;
  d.length = world.length;
  d.classes = world.classes;
  d.world_id = world.id();
  const auto K = static_cast<std::size_t>(world.codebook);
  for (int g = 0; g < world.classes; ++g) {
    for (int n = 0; n < per_class; ++n) {
      TokenSequence x{std::vector<int>(static_cast<std::size_t>(world.length)), g};
      x.tokens[0] = static_cast<int>(rng.categorical(world.initial[static_cast<std::size_t>(g)]));
      for (std::size_t l = 1; l < x.size(); ++l) {
        const auto& m = world.transition[static_cast<std::size_t>(g)];
        x.tokens[l] = static_cast<int>(
            rng.categorical(std::span(m.data() + static_cast<std::size_t>(x.tokens[l - 1]) * K, K)));
      }
      d.items.push_back(std::move(x));
    }
  }
  return d;
}

double true_sequence_probability(const World& world, std::span<const int> x0, int label) {
  if (label < 0 || label >= world.classes) throw Error("true_sequence_probability: class out of range");
  for (int t : x0)
    if (t < 0 || t >= world.codebook) throw Error("true_sequence_probability: token out of range");
  if (x0.empty()) return 1.0;
  const auto g = static_cast<std::size_t>(label);
  double p = world.initial[g][static_cast<std::size_t>(x0[0])];
  for (std::size_t l = 1; l < x0.size(); ++l) p *= world.step_probability(label, x0[l - 1], x0[l]);
  return p;
}

double log_sequence_probability(const World& world, std::span<const int> x0, int label) {
  if (label < 0 || label >= world.classes) throw Error("log_sequence_probability: class out of range");
  for (int t : x0)
    if (t < 0 || t >= world.codebook) throw Error("log_sequence_probability: token out of range");
  if (x0.empty()) return 0.0;
  const auto g = static_cast<std::size_t>(label);
  double lp = std::log(world.initial[g][static_cast<std::size_t>(x0[0])]);
  for (std::size_t l = 1; l < x0.size(); ++l) lp += std::log(world.step_probability(label, x0[l - 1], x0[l]));
  return lp;
}

double true_mutual_information(const World& world) {
  const double states = std::pow(static_cast<double>(world.codebook), world.length);
  if (states > 65536.0)
    throw Error("true_mutual_information: K^L = " + std::to_string(static_cast<long long>(states)) +
                " exceeds the enumeration guard of 65536");
  double mi = 0.0;
  std::vector<double> cond(static_cast<std::size_t>(world.classes));
  for_each_sequence(world.codebook, world.length, [&](std::span<const int> z) {
    double marginal = 0.0;
    for (int g = 0; g < world.classes; ++g) {
      cond[static_cast<std::size_t>(g)] = true_sequence_probability(world, z, g);
      marginal += world.class_prior[static_cast<std::size_t>(g)] * cond[static_cast<std::size_t>(g)];
    }
    for (int g = 0; g < world.classes; ++g) {
      const double p = cond[static_cast<std::size_t>(g)];
      if (p > 0.0) mi += world.class_prior[static_cast<std::size_t>(g)] * p * std::log(p / marginal);
    }
  });
  return std::max(mi, 0.0);
}

int bayes_classify(const World& world, std::span<const int> x0) {
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int g = 0; g < world.classes; ++g) {
    const double s = std::log(world.class_prior[static_cast<std::size_t>(g)]) + log_sequence_probability(world, x0, g);
    if (s > best_score) {
      best_score = s;
      best = g;
    }
  }
  return best;
}

std::vector<double> true_bigram_distribution(const World& world, int label) {
  if (label < 0 || label >= world.classes) throw Error("true_bigram_distribution: class out of range");
  const auto K = static_cast<std::size_t>(world.codebook);
  const auto g = static_cast<std::size_t>(label);
  std::vector<double> marginal = world.initial[g];
  std::vector<double> bigram(K * K, 0.0);
  const double pairs = static_cast<double>(world.length - 1);
  for (int l = 1; l < world.length; ++l) {
    std::vector<double> next(K, 0.0);
    for (std::size_t a = 0; a < K; ++a)
      for (std::size_t b = 0; b < K; ++b) {
        const double p = marginal[a] * world.transition[g][a * K + b];
        bigram[a * K + b] += p / pairs;
        next[b] += p;
      }
    marginal = std::move(next);
  }
  return bigram;
}

}  // namespace cdcd
