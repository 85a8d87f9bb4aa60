#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "esmhc/errors.hpp"
#include "esmhc/nn/adam.hpp"
#include "esmhc/nn/grad_check.hpp"
#include "esmhc/nn/ops.hpp"
#include "esmhc/nn/params.hpp"
#include "esmhc/nn/rng.hpp"

using namespace esmhc;
using namespace esmhc::nn;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<float>(rng.normal() * scale);
  return Tensor::from_values(std::move(shape), std::move(v));
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "esmhc_test_nn";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("linear: hand cases") {
  auto x = Tensor::from_values({2}, {1, 2});
  auto w = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  auto b = Tensor::from_values({2}, {0, 0});
  auto y = linear(x, w, b);
  CHECK(y.values()[0] == 1.0f);
  CHECK(y.values()[1] == 2.0f);

  auto y2 = linear(Tensor::from_values({2}, {1, 1}), Tensor::from_values({1, 2}, {2, 3}),
                   Tensor::from_values({1}, {1}));
  CHECK(y2.shape() == Shape{1});
  CHECK(y2.values()[0] == 6.0f);
}

TEST_CASE("linear: shape mismatch is a dimension error") {
  auto x = Tensor::zeros({3, 4});
  CHECK_THROWS_AS(linear(x, Tensor::zeros({2, 5}), Tensor()), DimensionError);
  CHECK_THROWS_AS(linear(x, Tensor::zeros({2, 4}), Tensor::zeros({3})), DimensionError);
}

TEST_CASE("linear: gradient matches central differences on a 3x4 input") {
  Rng rng(7);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor w = random_tensor({5, 4}, rng);
  Tensor b = random_tensor({5}, rng);
  Tensor probe = random_tensor({3, 5}, rng);
  auto loss = [&] { return sum(mul(linear(x, w, b), probe)); };
  x = Tensor::from_values(x.shape(), {x.values().begin(), x.values().end()}, true);
  w = Tensor::from_values(w.shape(), {w.values().begin(), w.values().end()}, true);
  b = Tensor::from_values(b.shape(), {b.values().begin(), b.values().end()}, true);
  Tensor wrt[] = {x, w, b};
  CHECK(grad_check(loss, wrt, {.step = 1e-2}) < 1e-3);
}

TEST_CASE("activations: closed forms") {
  auto z = Tensor::from_values({1}, {0.0f});
  CHECK(activation(z, Activation::sigmoid).item() == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(activation(z, Activation::tanh).item() == 0.0f);
  CHECK(activation(z, Activation::silu).item() == 0.0f);
  auto l3 = Tensor::from_values({1}, {static_cast<float>(std::log(3.0))});
  CHECK(activation(l3, Activation::sigmoid).item() == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("rms_norm: hand cases") {
  auto ones = Tensor::full({4}, 1.0f);
  auto y = rms_norm(Tensor::full({4}, 1.0f), ones, 0.0f);
  for (float v : y.values()) CHECK(v == doctest::Approx(1.0));

  auto z = rms_norm(Tensor::zeros({2}), Tensor::full({2}, 1.0f), 1e-6f);
  CHECK(z.values()[0] == 0.0f);
  CHECK(z.values()[1] == 0.0f);

  auto y34 = rms_norm(Tensor::from_values({2}, {3, 4}), Tensor::full({2}, 1.0f), 0.0f);
  CHECK(y34.values()[0] == doctest::Approx(3.0 / std::sqrt(12.5)).epsilon(1e-6));
  CHECK(y34.values()[1] == doctest::Approx(4.0 / std::sqrt(12.5)).epsilon(1e-6));
  CHECK(y34.values()[0] == doctest::Approx(0.8485).epsilon(1e-4));
  CHECK(y34.values()[1] == doctest::Approx(1.1314).epsilon(1e-4));
}

TEST_CASE("rms_norm: unit RMS output with unit gain") {
  Rng rng(3);
  auto x = random_tensor({16, 32}, rng, 4.0);
  auto y = rms_norm(x, Tensor::full({32}, 1.0f), 1e-8f);
  auto v = y.values();
  for (std::size_t r = 0; r < 16; ++r) {
    double ms = 0.0;
    for (std::size_t i = 0; i < 32; ++i) ms += v[r * 32 + i] * v[r * 32 + i];
    CHECK(std::sqrt(ms / 32.0) == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("grad_check: exact on a quadratic") {
  auto f = [](const Tensor& x) { return sum(mul(x, x)); };
  CHECK(grad_check(f, Tensor::from_values({2}, {1, 2}), 1e-2) < 1e-6);
}

TEST_CASE("grad_check: rms_norm composed with sum") {
  Rng rng(11);
  auto w = random_tensor({5}, rng);
  auto gain = random_tensor({5}, rng);
  auto f = [&](const Tensor& x) {
    return sum(mul(rms_norm(x, gain, 1e-6f), Tensor::from_values({3, 5}, [&] {
      std::vector<float> v;
      for (int r = 0; r < 3; ++r) v.insert(v.end(), w.values().begin(), w.values().end());
      return v;
    }())));
  };
  CHECK(grad_check(f, random_tensor({3, 5}, rng), 1e-2) < 1e-3);
}

TEST_CASE("grad_check: non-finite function is a numeric error") {
  auto f = [](const Tensor& x) { return sum(exp(scale(x, 100.0f))); };
  CHECK_THROWS_AS(grad_check(f, Tensor::from_values({1}, {1.0f}), 1e-2), NumericError);
}

TEST_CASE("every differentiable op passes grad_check at 10 random points") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    auto probe = random_tensor({2, 3, 4}, rng);
    auto other = random_tensor({2, 3, 4}, rng);
    auto bias = random_tensor({4}, rng);
    auto gate = random_tensor({1}, rng);
    auto gain = random_tensor({4}, rng);
    auto w = random_tensor({4, 4}, rng, 0.5);
    std::vector<std::size_t> rows = {0, 2, 5};
    auto proj = [&](const Tensor& y) { return sum(mul(y, probe)); };
    auto proj2 = [&](const Tensor& y) {
      return sum(mul(reshape(y, {2, 3, 4}), probe));
    };
    auto x0 = random_tensor({2, 3, 4}, rng);
    const double h = 1e-2;
    CAPTURE(seed);
    CHECK(grad_check([&](const Tensor& x) { return proj(add(x, other)); }, x0, h) < 1e-3);
    CHECK(grad_check([&](const Tensor& x) { return proj(add(x, bias)); }, x0, h) < 1e-3);
    CHECK(grad_check([&](const Tensor& x) { return proj(mul(x, other)); }, x0, h) < 1e-3);
    CHECK(grad_check([&](const Tensor& x) { return proj(scale(x, -1.5f)); }, x0, h) < 1e-3);
    CHECK(grad_check([&](const Tensor& x) { return proj(scale_by(x, gate)); }, x0, h) < 1e-3);
    CHECK(grad_check([&](const Tensor& g) { return proj(scale_by(other, g)); }, gate, h) < 1e-3);
    for (auto kind : {Activation::sigmoid, Activation::tanh, Activation::silu}) {
      CHECK(grad_check([&](const Tensor& x) { return proj(activation(x, kind)); }, x0, h) < 1e-3);
    }
    CHECK(grad_check([&](const Tensor& x) { return proj(softplus(x)); }, x0, h) < 1e-3);
    CHECK(grad_check([&](const Tensor& x) { return proj(exp(scale(x, 0.5f))); }, x0, h) < 1e-3);
    CHECK(grad_check([&](const Tensor& x) { return proj(linear(x, w, bias)); }, x0, h) < 1e-3);
    CHECK(grad_check([&](const Tensor& x) { return proj(rms_norm(x, gain, 1e-6f)); }, x0, h) < 1e-3);
    CHECK(grad_check([&](const Tensor& g) { return proj(rms_norm(other, g, 1e-6f)); }, gain, h) < 1e-3);
    CHECK(grad_check([&](const Tensor& x) { return proj2(reshape(x, {6, 4})); }, x0, h) < 1e-3);
    CHECK(grad_check([&](const Tensor& x) { return sum(mul(mean_axis(x, 1), mean_axis(probe, 1))); }, x0, h) < 1e-3);
    CHECK(grad_check([&](const Tensor& x) {
            return sum(mul(stack({x, scale(x, 2.0f)}, 1), stack({probe, other}, 1)));
          }, x0, h) < 1e-3);
    auto flat = random_tensor({6, 4}, rng);
    auto probe_k = random_tensor({3, 4}, rng);
    auto probe_l = random_tensor({6, 4}, rng);
    CHECK(grad_check([&](const Tensor& x) { return sum(mul(gather_rows(x, rows), probe_k)); }, flat, h) < 1e-3);
    CHECK(grad_check([&](const Tensor& y) { return sum(mul(scatter_rows(y, rows, 6), probe_l)); }, probe_k, h) < 1e-3);
    std::vector<int> targets = {0, -1, 3, 1, 2, -1};
    CHECK(grad_check([&](const Tensor& x) { return cross_entropy(x, targets); }, flat, h) < 1e-3);
  }
}

TEST_CASE("forward determinism: identical inputs give bit-identical outputs") {
  Rng rng(5);
  auto x = random_tensor({8, 6}, rng);
  auto w = random_tensor({6, 6}, rng);
  auto g = random_tensor({6}, rng);
  auto run = [&] { return activation(rms_norm(linear(x, w, Tensor()), g, 1e-6f), Activation::silu); };
  auto a = run();
  auto b = run();
  REQUIRE(a.numel() == b.numel());
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.values()[i] == b.values()[i]);
}

TEST_CASE("non-finite forward values are rejected") {
  auto x = Tensor::from_values({1}, {1000.0f});
  CHECK_THROWS_AS(exp(x), NumericError);
}

TEST_CASE("gather/scatter round trip restores selected rows") {
  Rng rng(9);
  auto x = random_tensor({6, 3}, rng);
  std::vector<std::size_t> rows = {1, 4};
  auto back = scatter_rows(gather_rows(x, rows), rows, 6);
  for (std::size_t r = 0; r < 6; ++r) {
    bool selected = r == 1 || r == 4;
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(back.values()[r * 3 + i] == (selected ? x.values()[r * 3 + i] : 0.0f));
    }
  }
  CHECK_THROWS_AS(scatter_rows(gather_rows(x, rows), std::vector<std::size_t>{1, 9}, 6), DimensionError);
}

TEST_CASE("adam: zero gradient leaves the parameter unchanged") {
  ParameterSet params;
  auto p = params.add("p", Tensor::from_values({2}, {1.5f, -2.0f}));
  auto state = make_adam_state(params);
  sum(scale(p, 0.0f)).backward();
  adam_step(params, state);
  CHECK(p.values()[0] == 1.5f);
  CHECK(p.values()[1] == -2.0f);
}

TEST_CASE("adam: first step moves by about the learning rate") {
  ParameterSet params;
  auto p = params.add("p", Tensor::from_values({1}, {0.0f}));
  auto state = make_adam_state(params, {.learning_rate = 0.1f});
  sum(p).backward();  // grad = 1
  adam_step(params, state);
  // mhat = 1, vhat = 1 after bias correction, so the step is lr / (1 + eps).
  CHECK(p.item() == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam: 100 steps on x^2 from 5 converge") {
  ParameterSet params;
  auto p = params.add("x", Tensor::from_values({1}, {5.0f}));
  auto state = make_adam_state(params, {.learning_rate = 0.1f});
  for (int i = 0; i < 100; ++i) {
    params.zero_grad();
    sum(mul(p, p)).backward();
    adam_step(params, state);
  }
  CHECK(std::abs(p.item()) < 0.5f);
}

TEST_CASE("checkpoint: round trip and format errors") {
  Rng rng(1);
  ParameterSet params;
  params.add("layer0.w", random_tensor({3, 2}, rng));
  params.add("gain", random_tensor({4}, rng));
  auto path = temp_path("ckpt.bin");
  save_checkpoint(params, path);

  {
    std::ifstream in(path, std::ios::binary);
    char magic[8];
    in.read(magic, 8);
    CHECK(std::string(magic, 8) == "ESMHC001");
  }

  ParameterSet other;
  auto w = other.add("layer0.w", Tensor::zeros({3, 2}));
  other.add("gain", Tensor::zeros({4}));
  load_checkpoint(other, path);
  for (std::size_t i = 0; i < 6; ++i) CHECK(w.values()[i] == params.find("layer0.w")->values()[i]);

  ParameterSet wrong;
  wrong.add("layer0.w", Tensor::zeros({2, 3}));
  wrong.add("gain", Tensor::zeros({4}));
  CHECK_THROWS_AS(load_checkpoint(wrong, path), DataError);

  auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 3);
  CHECK_THROWS_AS(read_checkpoint(path), DataError);

  std::ofstream(temp_path("bad.bin"), std::ios::binary) << "NOTMAGIC";
  CHECK_THROWS_AS(read_checkpoint(temp_path("bad.bin")), DataError);
}
