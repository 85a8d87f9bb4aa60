#include "esmhc/ssm/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "esmhc/errors.hpp"
#include "esmhc/nn/ops.hpp"

namespace esmhc::ssm {

TokenSelection topk_select(std::span<const float> scores, std::size_t k) {
  if (k < 1 || k > scores.size()) {
    throw DimensionError("topk_select: k=" + std::to_string(k) + " outside [1, " +
                         std::to_string(scores.size()) + "]");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto before = [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  std::nth_element(order.begin(), order.begin() + (k - 1), order.end(), before);
  order.resize(k);
  std::sort(order.begin(), order.end());
  TokenSelection sel;
  sel.k = k;
  sel.scores.reserve(k);
  for (std::size_t i : order) sel.scores.push_back(scores[i]);
  sel.indices = std::move(order);
  return sel;
}

Tensor scatter_restore(const Tensor& y_sel, const TokenSelection& sel, std::size_t length) {
  if (y_sel.rank() != 2 || y_sel.dim(0) != sel.indices.size()) {
    throw DimensionError("scatter_restore: " + nn::shape_str(y_sel.shape()) + " for " +
                         std::to_string(sel.indices.size()) + " indices");
  }
  return nn::scatter_rows(y_sel, sel.indices, length);
}

std::size_t topk_count(std::size_t length, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("top-k fraction must be in (0, 1]");
  const auto k = static_cast<std::size_t>(std::ceil(static_cast<double>(length) * fraction - 1e-9));
  return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(length, 1));
}

Tensor cluster_wise_spatial_mamba(const Tensor& y, const Tensor& res, std::size_t k,
                                  std::span<const SsmParams> params,
                                  std::vector<TokenSelection>* selections) {
  if (y.rank() != 2 || res.rank() != 3 || res.dim(0) != y.dim(0) || res.dim(1) != res.dim(2)) {
    throw DimensionError("cluster_wise_spatial_mamba: y " + nn::shape_str(y.shape()) + ", res " +
                         nn::shape_str(res.shape()));
  }
  const std::size_t length = y.dim(0);
  const std::size_t n = res.dim(1);
  if (params.size() != n * n) {
    throw DimensionError("cluster_wise_spatial_mamba: need " + std::to_string(n * n) + " scan blocks, got " +
                         std::to_string(params.size()));
  }
  if (selections) selections->clear();
  auto rv = res.values();
  std::vector<float> scores(length);
  Tensor out = y;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t t = 0; t < length; ++t) scores[t] = rv[(t * n + i) * n + j];
      TokenSelection sel = topk_select(scores, k);
      Tensor scanned = selective_scan(nn::gather_rows(y, sel.indices), params[i * n + j]);
      out = nn::add(out, scatter_restore(scanned, sel, length));
      if (selections) selections->push_back(std::move(sel));
    }
  }
  return out;
}

Tensor spectral_mamba(const Tensor& y, std::size_t groups, const SsmParams& params) {
  if (y.rank() != 2 || groups < 1 || y.dim(1) % groups != 0) {
    throw DimensionError("spectral_mamba: " + std::to_string(groups) + " groups do not divide " +
                         nn::shape_str(y.shape()));
  }
  const std::size_t length = y.dim(0), width = y.dim(1) / groups;
  Tensor seq = nn::reshape(y, {length, groups, width});
  return nn::add(y, nn::reshape(selective_scan(seq, params), {length, y.dim(1)}));
}

}  // namespace esmhc::ssm
