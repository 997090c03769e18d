#include "cdcd/negatives.hpp"

#include <algorithm>
#include <numeric>

#include "cdcd/error.hpp"

namespace cdcd {

std::string to_string(NegativeKind k) { return k == NegativeKind::Intra ? "intra" : "inter"; }

NegativeKind parse_negative_kind(const std::string& s) {
  if (s == "intra") return NegativeKind::Intra;
  if (s == "inter") return NegativeKind::Inter;
  throw Error("unknown negative kind '" + s + "' (expected intra or inter)");
}

int default_chunk_size(int length) { return std::max(1, length / 4); }

TokenSequence intra_shuffle(const TokenSequence& x0, int chunk, Stream& rng) {
  const int L = static_cast<int>(x0.size());
  if (chunk < 1 || chunk > L) throw Error("intra_shuffle: chunk size " + std::to_string(chunk) + " outside [1, L]");
  if (L < 2 * chunk)
    throw Error("intra_shuffle: L = " + std::to_string(L) + " < 2 * chunk size; no non-identity shuffle exists");

  const std::size_t chunks = static_cast<std::size_t>((L + chunk - 1) / chunk);
  if (std::all_of(x0.tokens.begin(), x0.tokens.end(), [&](int t) { return t == x0.tokens.front(); })) return x0;
  std::vector<std::size_t> order(chunks);
  TokenSequence out{std::vector<int>(x0.size()), x0.label};

  // Rejection: redraw on the identity permutation, or on a permutation that
  // happens to reproduce x0 because some chunks are equal.
  constexpr int kMaxTries = 64;
  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = chunks - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    bool identity = true;
    for (std::size_t i = 0; i < chunks && identity; ++i) identity = order[i] == i;
    if (identity) continue;

    std::size_t w = 0;
    for (std::size_t c : order) {
      const std::size_t begin = c * static_cast<std::size_t>(chunk);
      const std::size_t end = std::min(begin + static_cast<std::size_t>(chunk), x0.size());
      for (std::size_t i = begin; i < end; ++i) out.tokens[w++] = x0.tokens[i];
    }
    if (out.tokens != x0.tokens) return out;
  }
  return out;
}

TokenSequence inter_sample(const Dataset& data, int label, Stream& rng) {
  std::size_t others = 0;
  for (const TokenSequence& x : data.items)
    if (x.label != label) ++others;
  if (others == 0) throw Error("inter_sample: dataset has no sample outside class " + std::to_string(label));
  std::size_t pick = rng.below(others);
  for (const TokenSequence& x : data.items) {
    if (x.label == label) continue;
    if (pick-- == 0) return x;
  }
  throw Error("inter_sample: unreachable");
}

NegativeSet build_negative_set(const TokenSequence& x0, int label, const Dataset& data, NegativeKind kind, int count,
                               int chunk, Stream& rng, std::size_t source) {
  if (count < 1) throw Error("build_negative_set: negative count must be >= 1");
  NegativeSet set;
  set.kind = kind;
  set.source = source;
  set.samples.reserve(static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j)
    set.samples.push_back(kind == NegativeKind::Intra ? intra_shuffle(x0, chunk, rng) : inter_sample(data, label, rng));
  return set;
}

}  // namespace cdcd
