#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "esmhc/errors.hpp"
#include "esmhc/mhc/hyper.hpp"
#include "esmhc/nn/grad_check.hpp"
#include "esmhc/nn/ops.hpp"
#include "oracles.hpp"

using namespace esmhc;
using namespace esmhc::nn;
using namespace esmhc::mhc;

namespace {

using oracle::max_abs_diff;
using oracle::random_tensor;

std::vector<double> sinkhorn_oracle(std::span<const float> logits, std::size_t n) {
  return oracle::sinkhorn_fixed_point(logits, n);
}

Tensor identity_logits(std::size_t length, std::size_t n, float gamma) {
  std::vector<float> v(length * n * n, 0.0f);
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t i = 0; i < n; ++i) v[t * n * n + i * n + i] = gamma;
  return Tensor::from_values({length, n, n}, std::move(v));
}

}  // namespace

TEST_CASE("sinkhorn: zero logits give the uniform matrix") {
  for (std::size_t n : {2u, 3u, 5u}) {
    auto m = sinkhorn_knopp(Tensor::zeros({4, n, n}), {});
    for (float v : m.values()) CHECK(v == doctest::Approx(1.0 / n).epsilon(1e-7));
  }
}

TEST_CASE("sinkhorn: a single stream always maps to 1") {
  Rng rng(3);
  auto m = sinkhorn_knopp(random_tensor({6, 1, 1}, rng, 5.0), {});
  for (float v : m.values()) CHECK(v == 1.0f);
}

TEST_CASE("sinkhorn: random 3x3 logits match the double-precision fixed point") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits = random_tensor({4, 3, 3}, rng);
    auto m = sinkhorn_knopp(logits, {50, 0.0f});
    auto ref = sinkhorn_oracle(logits.values(), 3);
    CHECK(max_abs_diff(m.values(), ref) < 1e-6);
  }
}

TEST_CASE("sinkhorn: gamma 6 identity bias keeps the diagonal above 0.97") {
  for (std::size_t n : {2u, 3u, 4u, 5u}) {
    Tensor logits = identity_logits(2, n, 6.0f);
    auto m = sinkhorn_knopp(logits, {});
    auto ref = sinkhorn_oracle(logits.values(), n);
    CHECK(max_abs_diff(m.values(), ref) < 1e-5);
    for (std::size_t i = 0; i < n; ++i) CHECK(m.values()[i * n + i] > 0.97f);
  }
}

TEST_CASE("sinkhorn: 1000 random tensors end up doubly stochastic") {
  Rng rng(2024);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(5);
    Tensor logits = random_tensor({3, n, n}, rng);
    auto m = sinkhorn_knopp(logits, {50, 1e-6f});
    for (float v : m.values()) REQUIRE(v >= 0.0f);
    worst = std::max(worst, stochastic_deviation(m.values(), n));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("sinkhorn: deviation never increases between iterations") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(5);
    Tensor logits = random_tensor({2, n, n}, rng, 2.0);
    std::vector<double> trace;
    sinkhorn_knopp(logits, {30, 0.0f}, &trace);
    REQUIRE(trace.size() == 31);
    for (std::size_t k = 0; k + 1 < trace.size(); ++k) {
      // Once converged to float resolution the measure only jitters.
      CHECK(trace[k + 1] <= std::max(trace[k], 1e-6));
    }
  }
}

TEST_CASE("sinkhorn: stops early once within tolerance") {
  std::vector<double> trace;
  sinkhorn_knopp(Tensor::zeros({1, 4, 4}), {20, 1e-6f}, &trace);
  CHECK(trace.size() == 1);
  CHECK_THROWS_AS(sinkhorn_knopp(Tensor::zeros({1, 2, 2}), {0, 1e-6f}), ConfigError);
  CHECK_THROWS_AS(sinkhorn_knopp(Tensor::zeros({1, 2, 3}), {}), DimensionError);
}

TEST_CASE("sinkhorn: gradient through five unrolled iterations") {
  Rng rng(9);
  for (int seed = 0; seed < 5; ++seed) {
    Tensor logits = random_tensor({2, 3, 3}, rng, 1.0, true);
    Tensor probe = random_tensor({2, 3, 3}, rng);
    auto f = [&](const Tensor& x) { return sum(mul(sinkhorn_knopp(x, {5, 0.0f}), probe)); };
    CHECK(grad_check(f, logits, 1e-2) < 1e-3);
  }
}

TEST_CASE("normalize ops: gradients") {
  Rng rng(4);
  Tensor m = random_tensor({3, 4, 4}, rng, 1.0);
  std::vector<float> pos(m.values().begin(), m.values().end());
  for (auto& v : pos) v = 0.5f + std::abs(v);
  Tensor x = Tensor::from_values({3, 4, 4}, pos, true);
  Tensor probe = random_tensor({3, 4, 4}, rng);
  CHECK(grad_check([&](const Tensor& a) { return sum(mul(normalize_rows(a), probe)); }, x, 1e-3) < 1e-3);
  CHECK(grad_check([&](const Tensor& a) { return sum(mul(normalize_cols(a), probe)); }, x, 1e-3) < 1e-3);
}

TEST_CASE("pre_contract: selection, zero and loop oracle") {
  Rng rng(21);
  Tensor r = random_tensor({5, 3, 4}, rng);
  std::vector<float> one_hot(15, 0.0f);
  for (std::size_t t = 0; t < 5; ++t) one_hot[t * 3] = 1.0f;
  auto y = pre_contract(Tensor::from_values({5, 3}, one_hot), r);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t k = 0; k < 4; ++k) CHECK(y.values()[t * 4 + k] == r.values()[t * 12 + k]);

  auto zero = pre_contract(Tensor::zeros({5, 3}), r);
  for (float v : zero.values()) CHECK(v == 0.0f);

  Tensor h = random_tensor({5, 3}, rng);
  auto out = pre_contract(h, r);
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t k = 0; k < 4; ++k) {
      double acc = 0;
      for (std::size_t i = 0; i < 3; ++i) acc += double(h.values()[t * 3 + i]) * r.values()[(t * 3 + i) * 4 + k];
      CHECK(out.values()[t * 4 + k] == doctest::Approx(acc).epsilon(1e-5));
    }
  }
  CHECK_THROWS_AS(pre_contract(Tensor::zeros({5, 2}), r), DimensionError);
  CHECK_THROWS_AS(pre_contract(Tensor::zeros({4, 3}), r), DimensionError);
}

TEST_CASE("post_expand: copies, zeros and loop oracle") {
  Rng rng(22);
  Tensor y = random_tensor({5, 4}, rng);
  auto copies = post_expand(Tensor::full({5, 3}, 1.0f), y);
  CHECK(copies.shape() == Shape{5, 3, 4});
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 4; ++k) CHECK(copies.values()[(t * 3 + i) * 4 + k] == y.values()[t * 4 + k]);
  auto zero = post_expand(Tensor::zeros({5, 3}), y);
  for (float v : zero.values()) CHECK(v == 0.0f);

  Tensor h = random_tensor({5, 3}, rng);
  auto out = post_expand(h, y);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 4; ++k)
        CHECK(out.values()[(t * 3 + i) * 4 + k] == doctest::Approx(double(h.values()[t * 3 + i]) * y.values()[t * 4 + k]));
  CHECK_THROWS_AS(post_expand(Tensor::zeros({4, 3}), y), DimensionError);
}

TEST_CASE("res_mix: identity, permutation and conservation") {
  Rng rng(23);
  Tensor r = random_tensor({6, 4, 5}, rng);
  auto same = res_mix(identity_logits(6, 4, 1.0f), r);
  for (std::size_t i = 0; i < r.numel(); ++i) CHECK(same.values()[i] == r.values()[i]);

  // Destination i takes source perm[i].
  const std::size_t perm[4] = {2, 0, 3, 1};
  std::vector<float> p(6 * 16, 0.0f);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t i = 0; i < 4; ++i) p[t * 16 + i * 4 + perm[i]] = 1.0f;
  auto permuted = res_mix(Tensor::from_values({6, 4, 4}, p), r);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t k = 0; k < 5; ++k)
        CHECK(permuted.values()[(t * 4 + i) * 5 + k] == r.values()[(t * 4 + perm[i]) * 5 + k]);

  for (int trial = 0; trial < 50; ++trial) {
    auto h = sinkhorn_knopp(random_tensor({6, 4, 4}, rng), {50, 0.0f});
    auto out = res_mix(h, r);
    for (std::size_t t = 0; t < 6; ++t) {
      for (std::size_t k = 0; k < 5; ++k) {
        double before = 0, after = 0;
        for (std::size_t i = 0; i < 4; ++i) {
          before += r.values()[(t * 4 + i) * 5 + k];
          after += out.values()[(t * 4 + i) * 5 + k];
        }
        CHECK(std::abs(before - after) < 1e-4);
      }
    }
  }
  CHECK_THROWS_AS(res_mix(Tensor::zeros({6, 3, 3}), r), DimensionError);
}

TEST_CASE("contractions: gradients") {
  Rng rng(31);
  for (int seed = 0; seed < 5; ++seed) {
    Tensor h = random_tensor({3, 2}, rng, 1.0, true);
    Tensor r = random_tensor({3, 2, 4}, rng, 1.0, true);
    Tensor y = random_tensor({3, 4}, rng, 1.0, true);
    Tensor hr = random_tensor({3, 2, 2}, rng, 1.0, true);
    Tensor p1 = random_tensor({3, 4}, rng);
    Tensor p2 = random_tensor({3, 2, 4}, rng);
    CHECK(grad_check([&](const Tensor& a) { return sum(mul(pre_contract(a, r), p1)); }, h, 1e-2) < 1e-3);
    CHECK(grad_check([&](const Tensor& a) { return sum(mul(pre_contract(h, a), p1)); }, r, 1e-2) < 1e-3);
    CHECK(grad_check([&](const Tensor& a) { return sum(mul(post_expand(a, y), p2)); }, h, 1e-2) < 1e-3);
    CHECK(grad_check([&](const Tensor& a) { return sum(mul(post_expand(h, a), p2)); }, y, 1e-2) < 1e-3);
    CHECK(grad_check([&](const Tensor& a) { return sum(mul(res_mix(a, r), p2)); }, hr, 1e-2) < 1e-3);
    CHECK(grad_check([&](const Tensor& a) { return sum(mul(res_mix(hr, a), p2)); }, r, 1e-2) < 1e-3);
  }
}

TEST_CASE("hyper heads: identity initialisation") {
  ParameterSet params;
  Rng rng(1);
  auto heads = register_hyper_heads(params, "layer0.ssm", 5, 8, 6.0, rng);
  CHECK(params.size() == 9);
  Tensor normed = random_tensor({7, 5, 8}, rng);
  auto h = gen_hyper_matrices(normed, heads, {});
  CHECK(h.pre.shape() == Shape{7, 5});
  CHECK(h.res.shape() == Shape{7, 5, 5});
  for (float v : h.pre.values()) CHECK(v == 0.5f);
  for (float v : h.post.values()) CHECK(v == 1.0f);
  auto ref = sinkhorn_oracle(identity_logits(1, 5, 6.0f).values(), 5);
  for (std::size_t t = 0; t < 7; ++t) {
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(h.res.values()[t * 25 + i * 5 + i] > 0.97f);
      CHECK(h.res.values()[t * 25 + i * 5 + i] == doctest::Approx(ref[i * 5 + i]).epsilon(1e-5));
    }
  }
  CHECK_THROWS_AS(init_identity(heads, 0.0), ConfigError);
  CHECK_THROWS_AS(init_identity(heads, -1.0), ConfigError);
}

TEST_CASE("hyper heads: single stream gives an exact identity") {
  ParameterSet params;
  Rng rng(2);
  auto heads = register_hyper_heads(params, "x", 1, 4, 6.0, rng);
  heads.res.gate.mutable_values()[0] = 0.7f;
  auto h = gen_hyper_matrices(random_tensor({3, 1, 4}, rng), heads, {});
  for (float v : h.res.values()) CHECK(v == 1.0f);
}

TEST_CASE("hyper heads: dynamic path follows the closed form and is differentiable") {
  ParameterSet params;
  Rng rng(3);
  auto heads = register_hyper_heads(params, "x", 3, 4, 1.0, rng);
  for (HyperHead* hh : {&heads.pre, &heads.post, &heads.res}) {
    hh->gate.mutable_values()[0] = 0.8f;
    for (auto& b : hh->bias.mutable_values()) b += static_cast<float>(rng.normal() * 0.3);
  }
  Tensor normed = random_tensor({2, 3, 4}, rng, 1.0, true);
  auto h = gen_hyper_matrices(normed, heads, {50, 0.0f});
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t i = 0; i < 3; ++i) {
      double z = 0;
      for (std::size_t k = 0; k < 12; ++k) z += double(heads.pre.proj.values()[i * 12 + k]) * normed.values()[t * 12 + k];
      double expect = 1.0 / (1.0 + std::exp(-(0.8 * std::tanh(z) + heads.pre.bias.values()[i])));
      CHECK(h.pre.values()[t * 3 + i] == doctest::Approx(expect).epsilon(1e-5));
    }
  }
  for (float v : h.post.values()) CHECK((v > 0.0f && v < 2.0f));
  CHECK(stochastic_deviation(h.res.values(), 3) < 1e-4);

  Tensor p1 = random_tensor({2, 3}, rng), p2 = random_tensor({2, 3}, rng), p3 = random_tensor({2, 3, 3}, rng);
  auto loss = [&] {
    auto m = gen_hyper_matrices(normed, heads, {5, 0.0f});
    return add(add(sum(mul(m.pre, p1)), sum(mul(m.post, p2))), sum(mul(m.res, p3)));
  };
  std::vector<Tensor> wrt{normed, heads.pre.gate, heads.pre.proj, heads.post.bias,
                          heads.res.gate, heads.res.proj, heads.res.bias};
  CHECK(grad_check(loss, wrt, {}) < 1e-3);
}

TEST_CASE("hyper heads: shape checks") {
  ParameterSet params;
  Rng rng(4);
  auto heads = register_hyper_heads(params, "x", 3, 4, 6.0, rng);
  CHECK_THROWS_AS(gen_hyper_matrices(Tensor::zeros({2, 2, 4}), heads, {}), DimensionError);
  CHECK_THROWS_AS(gen_hyper_matrices(Tensor::zeros({2, 3, 5}), heads, {}), DimensionError);
}
