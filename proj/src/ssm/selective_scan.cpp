#include "esmhc/ssm/selective_scan.hpp"

#include <atomic>
#include <cmath>

#include "esmhc/errors.hpp"
#include "esmhc/nn/ops.hpp"
#include "esmhc/nn/parallel.hpp"

namespace esmhc::ssm {

namespace {

std::atomic<std::uint64_t> g_steps{0};

// Hidden states are kept only at chunk starts; backward recomputes each chunk.
constexpr std::size_t kChunk = 64;

struct ScanDims {
  std::size_t batch, steps, width, state;
};

ScanDims check_dims(const Tensor& x, const Tensor& delta, const Tensor& b, const Tensor& c,
                    const Tensor& a_log, const Tensor& skip) {
  if (x.rank() < 2 || x.rank() > 3) {
    throw DimensionError("selective_scan: need [T, d] or [B, T, d], got " + nn::shape_str(x.shape()));
  }
  const std::size_t steps = x.dim(x.rank() - 2);
  const std::size_t width = x.shape().back();
  const std::size_t batch = x.rank() == 3 ? x.dim(0) : 1;
  if (steps < 1) throw DimensionError("selective_scan: empty sequence");
  if (a_log.rank() != 2 || a_log.dim(0) != width || skip.rank() != 1 || skip.dim(0) != width) {
    throw DimensionError("selective_scan: parameters do not match width " + std::to_string(width));
  }
  const std::size_t state = a_log.dim(1);
  nn::Shape bc = x.shape();
  bc.back() = state;
  if (delta.shape() != x.shape() || b.shape() != bc || c.shape() != bc) {
    throw DimensionError("selective_scan: delta/B/C shapes do not match x " + nn::shape_str(x.shape()));
  }
  return {batch, steps, width, state};
}

}  // namespace

std::uint64_t scan_step_count() { return g_steps.load(); }
void reset_scan_step_count() { g_steps.store(0); }

SsmParams register_ssm(nn::ParameterSet& params, const std::string& prefix, std::size_t width,
                       std::size_t state, float out_scale, nn::Rng& rng) {
  if (width < 1 || state < 1) throw ConfigError("register_ssm: width and state must be >= 1");
  const double fan = 1.0 / std::sqrt(static_cast<double>(width));
  auto random = [&](nn::Shape shape, double sd) {
    std::vector<float> v(nn::shape_numel(shape));
    for (auto& x : v) x = static_cast<float>(rng.normal() * sd);
    return Tensor::from_values(std::move(shape), std::move(v));
  };
  std::vector<float> a(width * state);
  for (std::size_t d = 0; d < width; ++d)
    for (std::size_t s = 0; s < state; ++s) a[d * state + s] = static_cast<float>(std::log(double(s + 1)));
  std::vector<float> bias(width);
  for (auto& v : bias) {
    const double step = std::exp(std::log(1e-3) + rng.uniform() * (std::log(1e-1) - std::log(1e-3)));
    v = static_cast<float>(step + std::log(-std::expm1(-step)));
  }
  SsmParams p;
  p.a_log = params.add(prefix + ".a_log", Tensor::from_values({width, state}, std::move(a)));
  p.delta_proj = params.add(prefix + ".delta_proj", random({width, width}, fan));
  p.delta_bias = params.add(prefix + ".delta_bias", Tensor::from_values({width}, std::move(bias)));
  p.b_proj = params.add(prefix + ".b_proj", random({state, width}, fan));
  p.c_proj = params.add(prefix + ".c_proj", random({state, width}, fan));
  p.skip = params.add(prefix + ".skip", Tensor::full({width}, 1.0f));
  p.out_proj = params.add(prefix + ".out_proj", out_scale == 0.0f ? Tensor::zeros({width, width})
                                                                  : random({width, width}, out_scale * fan));
  return p;
}

Tensor ssm_recurrence(const Tensor& x, const Tensor& delta, const Tensor& b, const Tensor& c,
                      const Tensor& a_log, const Tensor& skip) {
  const ScanDims dims = check_dims(x, delta, b, c, a_log, skip);
  const auto [batch, steps, width, state] = dims;
  const std::size_t chunks = (steps + kChunk - 1) / kChunk;
  auto xv = x.values(), dv = delta.values(), bv = b.values(), cv = c.values();
  auto av = a_log.values(), sv = skip.values();
  std::vector<float> a(width * state);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(av[i]);

  std::vector<float> out(batch * steps * width);
  std::vector<float> saved(batch * chunks * width * state);
  nn::parallel_for(batch, [&](std::size_t b0, std::size_t b1) {
    std::vector<float> h(width * state);
    for (std::size_t bi = b0; bi < b1; ++bi) {
      std::fill(h.begin(), h.end(), 0.0f);
      for (std::size_t t = 0; t < steps; ++t) {
        if (t % kChunk == 0) {
          std::copy(h.begin(), h.end(), saved.begin() + ((bi * chunks) + t / kChunk) * width * state);
        }
        const std::size_t row = bi * steps + t;
        const float* bt = bv.data() + row * state;
        const float* ct = cv.data() + row * state;
        for (std::size_t d = 0; d < width; ++d) {
          const float dt = dv[row * width + d];
          const float xt = xv[row * width + d];
          float* hd = h.data() + d * state;
          float acc = 0.0f;
          for (std::size_t s = 0; s < state; ++s) {
            hd[s] = std::exp(dt * a[d * state + s]) * hd[s] + dt * bt[s] * xt;
            acc += ct[s] * hd[s];
          }
          out[row * width + d] = acc + sv[d] * xt;
        }
      }
    }
  });
  g_steps.fetch_add(batch * steps);

  return nn::record(
      "ssm_recurrence", x.shape(), std::move(out), {x, delta, b, c, a_log, skip},
      [dims, chunks, a = std::move(a), saved = std::move(saved)](nn::BackwardContext& ctx) {
        const auto [batch, steps, width, state] = dims;
        auto g = ctx.out_grad();
        auto xv = ctx.input(0), dv = ctx.input(1), bv = ctx.input(2), cv = ctx.input(3);
        auto sv = ctx.input(5);
        auto gx = ctx.input_grad(0);
        auto gd = ctx.input_grad(1);
        auto gb = ctx.input_grad(2);
        auto gc = ctx.input_grad(3);
        auto ga_log = ctx.input_grad(4);
        auto gskip = ctx.input_grad(5);

        // Shared parameters get one partial sum per sequence, reduced in order,
        // so the result does not depend on the worker count.
        const std::size_t parts = batch;
        const std::size_t per = 1;
        std::vector<std::vector<float>> part_a(parts, std::vector<float>(width * state, 0.0f));
        std::vector<std::vector<float>> part_skip(parts, std::vector<float>(width, 0.0f));
        nn::parallel_for(parts, [&](std::size_t p0, std::size_t p1) {
          std::vector<float> hs((kChunk + 1) * width * state);
          std::vector<float> carry(width * state);
          for (std::size_t p = p0; p < p1; ++p) {
            auto& acc_a = part_a[p];
            auto& acc_skip = part_skip[p];
            for (std::size_t bi = p * per; bi < std::min(batch, (p + 1) * per); ++bi) {
              std::fill(carry.begin(), carry.end(), 0.0f);
              for (std::size_t ch = chunks; ch-- > 0;) {
                const std::size_t t0 = ch * kChunk;
                const std::size_t t1 = std::min(steps, t0 + kChunk);
                // hs[0] = state before t0, hs[i + 1] = state after step t0 + i.
                const float* start = saved.data() + (bi * chunks + ch) * width * state;
                std::copy(start, start + width * state, hs.begin());
                for (std::size_t t = t0; t < t1; ++t) {
                  const std::size_t row = bi * steps + t;
                  const float* prev = hs.data() + (t - t0) * width * state;
                  float* next = hs.data() + (t - t0 + 1) * width * state;
                  const float* bt = bv.data() + row * state;
                  for (std::size_t d = 0; d < width; ++d) {
                    const float dt = dv[row * width + d];
                    const float xt = xv[row * width + d];
                    for (std::size_t s = 0; s < state; ++s) {
                      const std::size_t i = d * state + s;
                      next[i] = std::exp(dt * a[i]) * prev[i] + dt * bt[s] * xt;
                    }
                  }
                }
                for (std::size_t t = t1; t-- > t0;) {
                  const std::size_t row = bi * steps + t;
                  const float* prev = hs.data() + (t - t0) * width * state;
                  const float* cur = hs.data() + (t - t0 + 1) * width * state;
                  const float* bt = bv.data() + row * state;
                  const float* ct = cv.data() + row * state;
                  float* gbt = gb.data() + row * state;
                  float* gct = gc.data() + row * state;
                  for (std::size_t d = 0; d < width; ++d) {
                    const float gy = g[row * width + d];
                    const float dt = dv[row * width + d];
                    const float xt = xv[row * width + d];
                    acc_skip[d] += gy * xt;
                    float gxd = gy * sv[d];
                    float gdd = 0.0f;
                    for (std::size_t s = 0; s < state; ++s) {
                      const std::size_t i = d * state + s;
                      gct[s] += gy * cur[i];
                      const float gh = carry[i] + gy * ct[s];
                      const float decay = std::exp(dt * a[i]);
                      const float gdecay = gh * prev[i] * decay;
                      gdd += gdecay * a[i] + gh * bt[s] * xt;
                      acc_a[i] += gdecay * dt * a[i];
                      gbt[s] += gh * dt * xt;
                      gxd += gh * dt * bt[s];
                      carry[i] = gh * decay;
                    }
                    gx[row * width + d] += gxd;
                    gd[row * width + d] += gdd;
                  }
                }
              }
            }
          }
        });
        for (std::size_t p = 0; p < parts; ++p) {
          for (std::size_t i = 0; i < width * state; ++i) ga_log[i] += part_a[p][i];
          for (std::size_t d = 0; d < width; ++d) gskip[d] += part_skip[p][d];
        }
      });
}

Tensor selective_scan(const Tensor& x, const SsmParams& params) {
  Tensor delta = nn::softplus(nn::linear(x, params.delta_proj, params.delta_bias));
  Tensor b = nn::linear(x, params.b_proj, Tensor());
  Tensor c = nn::linear(x, params.c_proj, Tensor());
  Tensor y = ssm_recurrence(x, delta, b, c, params.a_log, params.skip);
  return nn::linear(y, params.out_proj, Tensor());
}

}  // namespace esmhc::ssm
