#include <cmath>

#include "cdcd/denoiser.hpp"
#include "cdcd/error.hpp"
#include "doctest.h"

using namespace cdcd;

namespace {

DenoiserConfig small_config(std::uint64_t seed = 1) {
  DenoiserConfig c;
  c.codebook = 3;
  c.states = 4;
  c.length = 4;
  c.steps = 3;
  c.classes = 3;
  c.width = 8;
  c.seed = seed;
  return c;
}

Params perturbed(const DenoiserConfig& c, std::uint64_t seed) {
  Params p = init_params(c);
  Stream rng(seed);
  for (Tensor& t : p.tensors)
    for (double& v : t.data) v += 0.5 * (rng.uniform() - 0.5);
  return p;
}

}  // namespace

TEST_CASE("initialization is deterministic in the seed") {
  CHECK(init_params(small_config(4)) == init_params(small_config(4)));
  CHECK_FALSE(init_params(small_config(4)) == init_params(small_config(5)));
}

TEST_CASE("layout covers every tensor with the documented shapes") {
  const DenoiserConfig c = small_config();
  const Params p = init_params(c);
  CHECK(p.get("token_embedding").shape == std::vector<std::size_t>{4, 8});
  CHECK(p.get("position_embedding").shape == std::vector<std::size_t>{4, 8});
  CHECK(p.get("time_embedding").shape == std::vector<std::size_t>{3, 8});
  CHECK(p.get("class_embedding").shape == std::vector<std::size_t>{3, 8});
  CHECK(p.get("head.weight").shape == std::vector<std::size_t>{8, 3});
  CHECK(p.count() == param_layout(c).size());
  CHECK_THROWS_AS(p.get("missing"), Error);
}

TEST_CASE("width must divide into heads") {
  DenoiserConfig c = small_config();
  c.width = 9;
  CHECK_THROWS_AS(init_params(c), Error);
}

TEST_CASE("zero head predicts uniform rows") {
  const Params p = init_params(small_config());
  const auto d = predict_x0(p, {{0, 3, 2, 1}, 0}, 2, 1);
  for (std::size_t l = 0; l < 4; ++l)
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(d.at(l, k) - 1.0 / 3.0) < 1e-9);
}

TEST_CASE("predictions are normalized and reject unknown classes") {
  const Params p = perturbed(small_config(), 2);
  Stream rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    TokenSequence x{{0, 0, 0, 0}, std::nullopt};
    for (int& t : x.tokens) t = static_cast<int>(rng.below(4));
    const auto d = predict_x0(p, x, 1 + static_cast<int>(rng.below(3)), static_cast<int>(rng.below(3)));
    for (std::size_t l = 0; l < 4; ++l) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += d.at(l, k);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
  CHECK_THROWS_AS(predict_x0(p, {{0, 0, 0, 0}, 0}, 1, 3), Error);
  CHECK_THROWS_AS(predict_x0(p, {{0, 0, 0, 0}, 0}, 4, 0), Error);
  CHECK_THROWS_AS(predict_x0(p, {{0, 0, 4, 0}, 0}, 1, 0), Error);
}

TEST_CASE("unused class embeddings do not affect predictions") {
  Params p = perturbed(small_config(), 3);
  const TokenSequence x{{1, 3, 0, 2}, 0};
  const auto before = predict_x0(p, x, 2, 0);
  Tensor& table = p.get("class_embedding");
  for (std::size_t j = 0; j < 8; ++j) std::swap(table.data[1 * 8 + j], table.data[2 * 8 + j]);
  CHECK(predict_x0(p, x, 2, 0).data() == before.data());
}

TEST_CASE("batched predictions equal single predictions") {
  const Params p = perturbed(small_config(), 4);
  const std::vector<int> a{0, 1, 2, 3}, b{3, 3, 1, 0};
  const DenoiseInput batch[] = {{a, 1, 0}, {b, 3, 2}};
  const auto both = predict_x0_batch(p, batch);
  const auto pa = predict_x0(p, {a, 0}, 1, 0);
  const auto pb = predict_x0(p, {b, 2}, 3, 2);
  for (std::size_t i = 0; i < pa.data().size(); ++i) {
    CHECK(std::abs(both[0].data()[i] - pa.data()[i]) < 1e-14);
    CHECK(std::abs(both[1].data()[i] - pb.data()[i]) < 1e-14);
  }
}

TEST_CASE("reverse step from a one-hot prediction equals the posterior") {
  const Schedule s = build_schedule({3, 3, Kernel::Uniform, ScheduleShape::Linear, 0.9});
  const TokenSequence x0{{0, 2}, std::nullopt}, xt{{1, 2}, std::nullopt};
  PositionDistributions onehot(2, 3);
  onehot.at(0, 0) = 1.0;
  onehot.at(1, 2) = 1.0;
  const auto rev = compose_reverse(onehot, xt, 2, s);
  const auto post = posterior(x0, xt, 2, s);
  for (std::size_t i = 0; i < rev.data().size(); ++i) CHECK(std::abs(rev.data()[i] - post.data()[i]) < 1e-15);
}

TEST_CASE("uniform prediction mixes posteriors with equal weight") {
  const Schedule s = build_schedule({3, 3, Kernel::Uniform, ScheduleShape::Cosine, 0.8});
  const TokenSequence xt{{1}, std::nullopt};
  const auto rev = compose_reverse(PositionDistributions(1, 3, 1.0 / 3.0), xt, 3, s);
  for (int j = 0; j < 3; ++j) {
    double v = 0.0;
    for (int k = 0; k < 3; ++k) v += posterior({{k}, std::nullopt}, xt, 3, s).at(0, j) / 3.0;
    CHECK(std::abs(v - rev.at(0, j)) < 1e-15);
  }
}

TEST_CASE("reverse step drops candidates that cannot reach x_t") {
  const Schedule s = build_schedule({3, 3, Kernel::MaskUniform, ScheduleShape::Linear, 1.0});
  // x_t = 1 (unmasked) is reachable only from x0 = 1.
  const auto rev = compose_reverse(PositionDistributions(1, 3, 1.0 / 3.0), {{1}, std::nullopt}, 2, s);
  CHECK(rev.at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  PositionDistributions none(1, 3);
  none.at(0, 0) = 1.0;
  CHECK_THROWS_AS(compose_reverse(none, {{1}, std::nullopt}, 2, s), Error);
}

TEST_CASE("reverse rows are normalized for a trained-looking model") {
  const DenoiserConfig c = small_config();
  const Params p = perturbed(c, 6);
  const Schedule s = build_schedule({3, 3, Kernel::MaskUniform, ScheduleShape::Linear, 1.0});
  const auto rev = reverse_step_distribution(p, {{3, 3, 0, 3}, 1}, 2, 1, s);
  for (std::size_t l = 0; l < 4; ++l) {
    double sum = 0.0;
    for (std::size_t k = 0; k < 4; ++k) sum += rev.at(l, k);
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(reverse_step_distribution(p, {{3, 3, 0, 3}, 1}, 1, 1, s), Error);
}
