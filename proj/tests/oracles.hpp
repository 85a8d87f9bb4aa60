#pragma once

// Reference implementations in double precision shared by the unit and
// acceptance tests. Deliberately written as plain loops.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "esmhc/nn/rng.hpp"
#include "esmhc/nn/tensor.hpp"
#include "esmhc/ssm/selective_scan.hpp"

namespace oracle {

inline esmhc::nn::Tensor random_tensor(esmhc::nn::Shape shape, esmhc::nn::Rng& rng, double scale = 1.0,
                                       bool requires_grad = false) {
  std::vector<float> v(esmhc::nn::shape_numel(shape));
  for (auto& x : v) x = static_cast<float>(rng.normal() * scale);
  return esmhc::nn::Tensor::from_values(std::move(shape), std::move(v), requires_grad);
}

inline double max_abs_diff(std::span<const float> a, std::span<const double> b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline double at(const esmhc::nn::Tensor& t, std::size_t i) { return t.values()[i]; }

/// exp, one row pass, then (column, row) pairs: `iters` of them, or until
/// column sums are within `tol` when iters is 0. One n x n matrix in place.
inline void sinkhorn(std::span<double> a, std::size_t n, std::size_t iters, double tol = 1e-12) {
  for (auto& x : a) x = std::exp(x);
  auto rows = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < n; ++j) s += a[i * n + j];
      for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= s;
    }
  };
  auto cols = [&] {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += a[i * n + j];
      for (std::size_t i = 0; i < n; ++i) a[i * n + j] /= s;
    }
  };
  rows();
  const std::size_t limit = iters ? iters : 100000;
  for (std::size_t it = 0; it < limit; ++it) {
    if (!iters) {
      double dev = 0;
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) s += a[i * n + j];
        dev = std::max(dev, std::abs(s - 1));
      }
      if (dev < tol) break;
    }
    cols();
    rows();
  }
}

/// Batch of logit matrices converged to `tol`.
inline std::vector<double> sinkhorn_fixed_point(std::span<const float> logits, std::size_t n, double tol = 1e-12) {
  std::vector<double> m(logits.begin(), logits.end());
  for (std::size_t t = 0; t < m.size() / (n * n); ++t) sinkhorn(std::span(m).subspan(t * n * n, n * n), n, 0, tol);
  return m;
}

/// Selective scan of one [T, d] sequence, step by step, including the output projection.
inline std::vector<double> scan(std::span<const double> x, std::size_t steps, const esmhc::ssm::SsmParams& p) {
  const std::size_t d = p.width(), n = p.state();
  auto W = [](const esmhc::nn::Tensor& t, std::size_t r, std::size_t c) { return at(t, r * t.dim(1) + c); };
  std::vector<double> h(d * n, 0.0), y(steps * d), out(steps * d);
  for (std::size_t t = 0; t < steps; ++t) {
    const double* xt = x.data() + t * d;
    std::vector<double> delta(d), b(n), c(n);
    for (std::size_t o = 0; o < d; ++o) {
      double z = at(p.delta_bias, o);
      for (std::size_t i = 0; i < d; ++i) z += W(p.delta_proj, o, i) * xt[i];
      delta[o] = std::log1p(std::exp(z));
    }
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t i = 0; i < d; ++i) {
        b[s] += W(p.b_proj, s, i) * xt[i];
        c[s] += W(p.c_proj, s, i) * xt[i];
      }
    }
    for (std::size_t ch = 0; ch < d; ++ch) {
      double acc = 0;
      for (std::size_t s = 0; s < n; ++s) {
        const double a = -std::exp(W(p.a_log, ch, s));
        h[ch * n + s] = std::exp(delta[ch] * a) * h[ch * n + s] + delta[ch] * b[s] * xt[ch];
        acc += c[s] * h[ch * n + s];
      }
      y[t * d + ch] = acc + at(p.skip, ch) * xt[ch];
    }
    for (std::size_t o = 0; o < d; ++o) {
      double acc = 0;
      for (std::size_t i = 0; i < d; ++i) acc += W(p.out_proj, o, i) * y[t * d + i];
      out[t * d + o] = acc;
    }
  }
  return out;
}

inline std::vector<double> scan(std::span<const float> x, std::size_t steps, const esmhc::ssm::SsmParams& p) {
  std::vector<double> xd(x.begin(), x.end());
  return scan(xd, steps, p);
}

/// Top-k by stable descending sort, returned in ascending index order.
template <class T>
std::vector<std::size_t> topk(std::span<const T> s, std::size_t k) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace oracle
