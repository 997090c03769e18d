#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdcd/diffusion.hpp"
#include "cdcd/rng.hpp"

namespace cdcd {

/// Synthetic class-conditional world: each class is a first-order Markov
/// chain over K tokens with its own initial distribution.
struct World {
  int classes = 0;
  int codebook = 0;
  int length = 0;
  double concentration = 1.0;
  std::uint64_t seed = 0;
  std::vector<double> class_prior;             // [G]
  std::vector<std::vector<double>> initial;    // [G][K]
  std::vector<std::vector<double>> transition; // [G][K*K], row-major

  std::string id() const;
  double step_probability(int g, int from, int to) const {
    return transition[static_cast<std::size_t>(g)][static_cast<std::size_t>(from * codebook + to)];
  }
};

/// Labelled sequences over the K data tokens (never the mask token).
struct Dataset {
  int codebook = 0;
  int length = 0;
  int classes = 0;
  std::string world_id;
  std::vector<TokenSequence> items;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
};

/// Throws if any item is unlabelled, has the wrong length, or holds a token outside [0, K).
void validate(const Dataset& data);

/// Chains drawn from a symmetric Dirichlet(concentration) prior, uniform class prior.
World make_world(int classes, int codebook, int length, double concentration, std::uint64_t seed);

Dataset sample_dataset(const World& world, int per_class, Stream rng);

double true_sequence_probability(const World& world, std::span<const int> x0, int label);
double log_sequence_probability(const World& world, std::span<const int> x0, int label);

/// Exact I(z_0; c) in nats by enumerating all K^L sequences (K^L <= 65536).
double true_mutual_information(const World& world);

/// argmax_g p(g) p(x0 | g); ties go to the lowest class index.
int bayes_classify(const World& world, std::span<const int> x0);

/// Class-conditional bigram distribution averaged over the L - 1 adjacent
/// position pairs, as a K*K row-major vector.
std::vector<double> true_bigram_distribution(const World& world, int label);

/// Calls `visit(tokens)` for each of the K^L sequences in lexicographic order.
template <typename Visit>
void for_each_sequence(int codebook, int length, Visit&& visit) {
  std::vector<int> z(static_cast<std::size_t>(length), 0);
  for (;;) {
    visit(std::span<const int>(z));
    int pos = length - 1;
    while (pos >= 0 && ++z[static_cast<std::size_t>(pos)] == codebook) z[static_cast<std::size_t>(pos--)] = 0;
    if (pos < 0) return;
  }
}

}  // namespace cdcd
