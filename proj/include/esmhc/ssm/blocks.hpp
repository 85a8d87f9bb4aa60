#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "esmhc/ssm/selective_scan.hpp"

namespace esmhc::ssm {

struct TokenSelection {
  std::vector<std::size_t> indices;  // ascending raster order
  std::vector<float> scores;         // scores of the selected tokens, same order
  std::size_t k = 0;
};

/// The k largest scores, ties to the lower index, returned in ascending index
/// order. Throws DimensionError unless 1 <= k <= scores.size().
TokenSelection topk_select(std::span<const float> scores, std::size_t k);

/// Zero [L, D] tensor with row sel.indices[m] set to y_sel[m].
Tensor scatter_restore(const Tensor& y_sel, const TokenSelection& sel, std::size_t length);

/// ceil(L * fraction), clamped to [1, L].
std::size_t topk_count(std::size_t length, double fraction);

/// y [L, D]; res [L, n, n] only supplies selection scores (no gradient flows
/// into it). For every (i, j) the top-k tokens of res[:, i, j] are scanned by
/// params[i * n + j] in raster order and scattered back; the n^2 results are
/// summed in (i, j) order onto y. The selections are written to `selections`
/// when given.
Tensor cluster_wise_spatial_mamba(const Tensor& y, const Tensor& res, std::size_t k,
                                  std::span<const SsmParams> params,
                                  std::vector<TokenSelection>* selections = nullptr);

/// y [L, D]: each pixel's channels become a sequence of `groups` tokens of
/// width D / groups, scanned and reshaped back, plus the residual.
Tensor spectral_mamba(const Tensor& y, std::size_t groups, const SsmParams& params);

}  // namespace esmhc::ssm
