#include "esmhc/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "esmhc/errors.hpp"
#include "esmhc/nn/rng.hpp"

namespace esmhc::nn {

namespace {

double eval_scalar(const std::function<Tensor()>& loss) {
  NoGradGuard guard;
  Tensor y = loss();
  double v = y.item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
  return v;
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step) {
  auto xv = x.values();
  Tensor leaf = Tensor::from_values(x.shape(), std::vector<float>(xv.begin(), xv.end()), true);
  Tensor wrt[] = {leaf};
  GradCheckOptions opts;
  opts.step = step;
  return grad_check([&] { return f(leaf); }, wrt, opts);
}

double grad_check(const std::function<Tensor()>& loss, std::span<Tensor> wrt,
                  const GradCheckOptions& options) {
  for (auto& t : wrt) t.zero_grad();
  {
    Tensor y = loss();
    if (!std::isfinite(y.item())) throw NumericError("grad_check: non-finite function value");
    y.backward();
  }
  Rng rng(options.seed);
  double worst = 0.0;
  for (auto& t : wrt) {
    std::vector<float> analytic(t.numel(), 0.0f);
    if (!t.grad().empty()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_tensor && coords.size() > options.max_coords_per_tensor) {
      for (std::size_t i = 0; i < options.max_coords_per_tensor; ++i) {
        std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
      }
      coords.resize(options.max_coords_per_tensor);
    }

    auto values = t.mutable_values();
    for (auto i : coords) {
      const float original = values[i];
      auto probe = [&](double offset) {
        const float moved = static_cast<float>(original + offset);
        values[i] = moved;
        const double f = eval_scalar(loss);
        return std::pair{f, static_cast<double>(moved) - original};
      };
      // Fourth-order stencil; offsets are the float-rounded ones actually applied.
      const auto [f1, h1] = probe(options.step);
      const auto [m1, k1] = probe(-options.step);
      const auto [f2, h2] = probe(2.0 * options.step);
      const auto [m2, k2] = probe(-2.0 * options.step);
      values[i] = original;
      const double d1 = (f1 - m1) / (h1 - k1);
      const double d2 = (f2 - m2) / (h2 - k2);
      const double central = (4.0 * d1 - d2) / 3.0;
      const double err = std::abs(analytic[i] - central) / std::max(1.0, std::abs(central));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace esmhc::nn
