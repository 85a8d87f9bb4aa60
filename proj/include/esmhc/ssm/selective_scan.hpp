#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "esmhc/nn/params.hpp"
#include "esmhc/nn/rng.hpp"
#include "esmhc/nn/tensor.hpp"

namespace esmhc::ssm {

using nn::Tensor;

/// Selective state-space parameters for a channel width d and state size N.
struct SsmParams {
  Tensor a_log;       // [d, N]; A = -exp(a_log)
  Tensor delta_proj;  // [d, d]
  Tensor delta_bias;  // [d]
  Tensor b_proj;      // [N, d]
  Tensor c_proj;      // [N, d]
  Tensor skip;        // [d]
  Tensor out_proj;    // [d, d]

  std::size_t width() const { return skip.dim(0); }
  std::size_t state() const { return a_log.dim(1); }
};

/// Registers one block under `prefix`. A_log rows are log(1..N), the delta
/// bias is the inverse softplus of a log-uniform step in [1e-3, 1e-1], skip
/// is 1 and the output projection is drawn with standard deviation
/// out_scale / sqrt(d) (zero when out_scale is 0).
SsmParams register_ssm(nn::ParameterSet& params, const std::string& prefix, std::size_t width,
                       std::size_t state, float out_scale, nn::Rng& rng);

/// x is [T, d] or [B, T, d]; each of the B sequences is scanned independently
/// over T. Per channel: h_t = exp(delta_t A) h_{t-1} + delta_t B_t x_t,
/// y_t = <C_t, h_t> + skip x_t, followed by the output projection.
Tensor selective_scan(const Tensor& x, const SsmParams& params);

/// The recurrence alone, on precomputed delta [.., T, d], B and C [.., T, N].
Tensor ssm_recurrence(const Tensor& x, const Tensor& delta, const Tensor& b, const Tensor& c,
                      const Tensor& a_log, const Tensor& skip);

/// Recurrence steps taken by forward passes since the last reset (one per
/// token per sequence). Process-wide.
std::uint64_t scan_step_count();
void reset_scan_step_count();

}  // namespace esmhc::ssm
