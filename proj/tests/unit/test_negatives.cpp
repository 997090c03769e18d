#include <algorithm>
#include <cmath>

#include "cdcd/error.hpp"
#include "cdcd/negatives.hpp"
#include "doctest.h"

using namespace cdcd;

namespace {

Dataset labelled(std::vector<TokenSequence> items, int classes) {
  Dataset d;
  d.codebook = 4;
  d.length = static_cast<int>(items.front().size());
  d.classes = classes;
  d.items = std::move(items);
  return d;
}

std::vector<int> sorted(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST_CASE("default chunk size is a quarter of the length") {
  CHECK(default_chunk_size(16) == 4);
  CHECK(default_chunk_size(7) == 1);
  CHECK(default_chunk_size(2) == 1);
}

TEST_CASE("two chunks can only be swapped") {
  const TokenSequence x{{0, 1, 2, 3}, 0};
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Stream rng(seed);
    CHECK(intra_shuffle(x, 2, rng).tokens == std::vector<int>{2, 3, 0, 1});
  }
}

TEST_CASE("intra shuffle permutes chunks and never returns the input") {
  const TokenSequence x{{0, 1, 1, 2, 3, 3, 0, 2, 1}, 2};
  Stream rng(5);
  for (int i = 0; i < 200; ++i) {
    const TokenSequence y = intra_shuffle(x, 2, rng);
    CHECK(y.label == x.label);
    CHECK(y.tokens != x.tokens);
    CHECK(sorted(y.tokens) == sorted(x.tokens));
  }
}

TEST_CASE("intra shuffle rejects impossible requests") {
  Stream rng(1);
  CHECK_THROWS_AS(intra_shuffle({{0, 1, 2}, 0}, 2, rng), Error);
  CHECK_THROWS_AS(intra_shuffle({{0, 1, 2}, 0}, 0, rng), Error);
  CHECK(intra_shuffle({{1, 1, 1, 1}, 0}, 2, rng).tokens == std::vector<int>{1, 1, 1, 1});
}

TEST_CASE("inter sample draws from the other classes") {
  const Dataset two = labelled({{{0, 0}, 0}, {{1, 1}, 1}, {{2, 2}, 1}}, 2);
  Stream rng(3);
  for (int i = 0; i < 50; ++i) CHECK(inter_sample(two, 0, rng).label == 1);
  const Dataset one = labelled({{{0, 0}, 0}, {{1, 1}, 0}}, 1);
  CHECK_THROWS_AS(inter_sample(one, 0, rng), Error);
}

TEST_CASE("inter sample is uniform over the other classes' items") {
  const Dataset d = labelled({{{0, 0}, 0}, {{1, 0}, 1}, {{2, 0}, 2}, {{3, 0}, 2}}, 3);
  Stream rng(9);
  const int n = 60000;
  std::vector<int> counts(4, 0);
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(inter_sample(d, 0, rng).tokens[0])];
  CHECK(counts[0] == 0);
  const double p = 1.0 / 3.0, sigma = std::sqrt(n * p * (1 - p));
  for (int k = 1; k < 4; ++k) CHECK(std::abs(counts[static_cast<std::size_t>(k)] - n * p) < 3.0 * sigma);
}

TEST_CASE("negative sets have the requested size and kind") {
  const Dataset d = labelled({{{0, 1, 2, 3}, 0}, {{3, 2, 1, 0}, 1}, {{1, 1, 2, 2}, 1}, {{0, 0, 3, 3}, 2}}, 3);
  const TokenSequence& x0 = d.items[0];
  Stream rng(4);
  const NegativeSet intra = build_negative_set(x0, 0, d, NegativeKind::Intra, 10, 1, rng, 0);
  CHECK(intra.samples.size() == 10);
  for (const auto& y : intra.samples) CHECK(sorted(y.tokens) == sorted(x0.tokens));
  const NegativeSet inter = build_negative_set(x0, 0, d, NegativeKind::Inter, 10, 1, rng, 0);
  CHECK(inter.samples.size() == 10);
  CHECK(inter.kind == NegativeKind::Inter);
  for (const auto& y : inter.samples) CHECK(y.label != 0);
  CHECK_THROWS_AS(build_negative_set(x0, 0, d, NegativeKind::Intra, 0, 1, rng), Error);
  CHECK(parse_negative_kind(to_string(NegativeKind::Inter)) == NegativeKind::Inter);
  CHECK_THROWS_AS(parse_negative_kind("outer"), Error);
}

TEST_CASE("negative sets are deterministic in the stream") {
  const Dataset d = labelled({{{0, 1, 2, 3, 1, 0}, 0}, {{3, 2, 1, 0, 0, 0}, 1}}, 2);
  Stream a(8), b(8);
  CHECK(build_negative_set(d.items[0], 0, d, NegativeKind::Intra, 5, 2, a).samples ==
        build_negative_set(d.items[0], 0, d, NegativeKind::Intra, 5, 2, b).samples);
}
