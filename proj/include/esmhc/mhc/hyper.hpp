#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "esmhc/nn/params.hpp"
#include "esmhc/nn/rng.hpp"
#include "esmhc/nn/tensor.hpp"

namespace esmhc::mhc {

using nn::Tensor;

struct SinkhornOptions {
  std::size_t iterations = 20;
  float tolerance = 1e-6f;
};

/// Row sums to one over the last axis of [..., n, n].
Tensor normalize_rows(const Tensor& m);
/// Column sums to one over the second-to-last axis of [..., n, n].
Tensor normalize_cols(const Tensor& m);

/// Largest |row sum - 1| or |column sum - 1| over a batch of n x n matrices.
double stochastic_deviation(std::span<const float> matrices, std::size_t n);

/// Projects logits [..., n, n] toward the doubly stochastic set: exp, one row
/// normalisation, then up to `iterations` (column, row) passes, stopping early
/// once the deviation falls below the tolerance. Every pass is an op on the
/// tape, so gradients flow through the unrolled iteration. The final pass is
/// always a row normalisation. When `trace` is given it receives the
/// deviation after the first row pass and after every iteration.
Tensor sinkhorn_knopp(const Tensor& logits, const SinkhornOptions& options,
                      std::vector<double>* trace = nullptr);

/// One dynamic head: H~ = gate * tanh(proj * x) + bias.
struct HyperHead {
  Tensor gate;  // [1]
  Tensor proj;  // [rows, n*D]
  Tensor bias;  // [n] for pre/post, [n, n] for res
};

struct HyperHeadParams {
  std::size_t streams = 0;
  std::size_t hidden = 0;
  HyperHead pre;
  HyperHead post;
  HyperHead res;
};

/// Per-token mixing matrices: pre [L, n] in (0,1), post [L, n] in (0,2),
/// res [L, n, n] doubly stochastic. res[t, i, j] is the flow from source
/// stream j into destination stream i.
struct HyperMatrices {
  Tensor pre;
  Tensor post;
  Tensor res;
};

/// Registers the three heads under `prefix` with random projections and the
/// identity initialisation.
HyperHeadParams register_hyper_heads(nn::ParameterSet& params, const std::string& prefix,
                                     std::size_t streams, std::size_t hidden, double gamma,
                                     nn::Rng& rng);

/// Gates to 0, pre/post biases to 0, res bias to gamma * I. Needs gamma > 0.
void init_identity(HyperHeadParams& heads, double gamma);

/// Each token's n normalised streams are flattened to one n*D vector that
/// drives all three heads; pre gets a sigmoid, post 2 * sigmoid and res the
/// Sinkhorn projection.
HyperMatrices gen_hyper_matrices(const Tensor& normed, const HyperHeadParams& heads,
                                 const SinkhornOptions& sinkhorn);

/// y[t, :] = sum_i pre[t, i] * r[t, i, :]
Tensor pre_contract(const Tensor& pre, const Tensor& streams);
/// out[t, i, :] = post[t, i] * y[t, :]
Tensor post_expand(const Tensor& post, const Tensor& y);
/// out[t, i, :] = sum_j res[t, i, j] * r[t, j, :]
Tensor res_mix(const Tensor& res, const Tensor& streams);

}  // namespace esmhc::mhc
