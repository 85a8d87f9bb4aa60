#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "esmhc/nn/tensor.hpp"

namespace esmhc::nn {

enum class Activation { sigmoid, tanh, silu };

/// Elementwise sum. `b` either matches `a` or matches its trailing dims
/// (bias broadcast); nothing else broadcasts.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float factor);
/// x times a one-element tensor (a learnable gate).
Tensor scale_by(const Tensor& x, const Tensor& gate);

Tensor activation(const Tensor& x, Activation kind);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);

/// y[..., o] = sum_i w[o, i] * x[..., i] + b[o]. `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// y = x / sqrt(mean(x^2 over the last axis) + eps) * gain.
Tensor rms_norm(const Tensor& x, const Tensor& gain, float eps);

Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x);
Tensor mean_axis(const Tensor& x, std::size_t axis);
/// Stacks equally shaped tensors along a new axis.
Tensor stack(const std::vector<Tensor>& parts, std::size_t axis);

/// Rows of a [L, D] tensor at the given indices.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
/// Inverse placement: out[rows[m], :] = y[m, :], zero elsewhere. Out has `length` rows.
Tensor scatter_rows(const Tensor& y, std::span<const std::size_t> rows, std::size_t length);

/// Mean softmax cross-entropy over rows of [L, K] logits whose target is
/// >= 0; rows with target -1 are ignored.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

}  // namespace esmhc::nn
