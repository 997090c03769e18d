#pragma once

#include <cstdint>
#include <limits>
#include <span>

#include "cdcd/error.hpp"

namespace cdcd {

/// Counter-based random stream. The n-th output is a pure function of
/// (key, n), so streams can be split into independent children by id and
/// copied freely; two copies of the same stream produce the same draws.
class Stream {
 public:
  using result_type = std::uint64_t;

  Stream() = default;
  explicit Stream(std::uint64_t seed) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + kGamma * ++counter_); }

  /// Child stream with its own key; does not advance this stream.
  Stream split(std::uint64_t id) const {
    Stream child;
    child.key_ = mix(key_ ^ mix(id * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL));
    return child;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw Error("Stream::below: empty range");
    const std::uint64_t limit = max() - max() % n;
    for (;;) {
      const std::uint64_t x = (*this)();
      if (x < limit) return x % n;
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Inverse-CDF draw from an (unnormalized, nonnegative) weight vector.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw Error("Stream::categorical: weights sum to zero");
    const double u = uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      acc += weights[i];
      last_positive = i;
      if (u < acc) return i;
    }
    return last_positive;
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace cdcd
