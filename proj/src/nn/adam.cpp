#include "esmhc/nn/adam.hpp"

#include <cmath>

#include "esmhc/errors.hpp"

namespace esmhc::nn {

AdamState make_adam_state(const ParameterSet& params, AdamOptions options) {
  AdamState state;
  state.options = options;
  for (const auto& [name, t] : params) {
    state.first_moment.emplace_back(t.numel(), 0.0f);
    state.second_moment.emplace_back(t.numel(), 0.0f);
  }
  return state;
}

void adam_step(ParameterSet& params, AdamState& state) {
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: state built for a different parameter set");
  }
  const auto& o = state.options;
  ++state.step;
  const double c1 = 1.0 - std::pow(static_cast<double>(o.beta1), static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(static_cast<double>(o.beta2), static_cast<double>(state.step));
  std::size_t k = 0;
  for (auto& [name, t] : params) {
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    ++k;
    if (m.size() != t.numel()) throw DimensionError("adam_step: moment shape mismatch for " + name);
    auto g = t.grad();
    auto p = t.mutable_values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const float gi = g.empty() ? 0.0f : g[i];
      m[i] = o.beta1 * m[i] + (1.0f - o.beta1) * gi;
      v[i] = o.beta2 * v[i] + (1.0f - o.beta2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= static_cast<float>(o.learning_rate * mhat / (std::sqrt(vhat) + o.epsilon));
    }
  }
}

}  // namespace esmhc::nn
