#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "esmhc/nn/tensor.hpp"

namespace esmhc::nn {

/// Max over coordinates of |analytic - central difference| / max(1, |central difference|),
/// with the fourth-order stencil (8[f(x+h) - f(x-h)] - [f(x+2h) - f(x-2h)]) / 12h.
/// The forward runs in float32; differences and the ratio are taken in double.
/// Throws NumericError when f is non-finite at a probe point.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step);

struct GradCheckOptions {
  double step = 1e-2;
  /// 0 checks every coordinate; otherwise a seeded random subset per tensor.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

/// Same measure for a scalar loss of several leaves (model parameters). The
/// leaves are perturbed in place and restored.
double grad_check(const std::function<Tensor()>& loss, std::span<Tensor> wrt,
                  const GradCheckOptions& options);

}  // namespace esmhc::nn
