#pragma once

#include <cstdint>
#include <vector>

#include "esmhc/nn/params.hpp"

namespace esmhc::nn {

struct AdamOptions {
  float learning_rate = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

/// Moment buffers are indexed like the ParameterSet they were made for.
struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::vector<std::vector<float>> first_moment;
  std::vector<std::vector<float>> second_moment;
};

AdamState make_adam_state(const ParameterSet& params, AdamOptions options = {});

/// One bias-corrected Adam update using the gradients currently held by
/// `params`. A parameter that received no gradient is treated as grad = 0.
void adam_step(ParameterSet& params, AdamState& state);

}  // namespace esmhc::nn
