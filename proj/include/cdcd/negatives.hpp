#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cdcd/data.hpp"
#include "cdcd/diffusion.hpp"
#include "cdcd/rng.hpp"

namespace cdcd {

enum class NegativeKind { Intra, Inter };

std::string to_string(NegativeKind k);
NegativeKind parse_negative_kind(const std::string& s);

struct NegativeSet {
  std::vector<TokenSequence> samples;
  NegativeKind kind = NegativeKind::Intra;
  std::size_t source = 0;  // index of the positive in its dataset
};

/// L / 4 rounded down, at least 1.
int default_chunk_size(int length);

/// Splits x0 into ceil(L / chunk) chunks (the last may be shorter) and applies
/// a uniformly drawn non-identity chunk permutation, redrawn while the output
/// equals x0. Sequences whose chunk permutations all reproduce x0 (for example
/// a constant sequence) come back unchanged. Requires L >= 2 * chunk.
TokenSequence intra_shuffle(const TokenSequence& x0, int chunk, Stream& rng);

/// A dataset item drawn uniformly among those whose class differs from `label`.
TokenSequence inter_sample(const Dataset& data, int label, Stream& rng);

NegativeSet build_negative_set(const TokenSequence& x0, int label, const Dataset& data, NegativeKind kind,
                               int count, int chunk, Stream& rng, std::size_t source = 0);

}  // namespace cdcd
