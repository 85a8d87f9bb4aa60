#include "esmhc/mhc/hyper.hpp"

#include <algorithm>
#include <cmath>

#include "esmhc/errors.hpp"
#include "esmhc/nn/ops.hpp"

namespace esmhc::mhc {

namespace {

std::size_t square_side(const Tensor& m, const char* op) {
  if (m.rank() < 2 || m.shape()[m.rank() - 1] != m.shape()[m.rank() - 2]) {
    throw DimensionError(std::string(op) + ": need [..., n, n], got " + nn::shape_str(m.shape()));
  }
  return m.shape().back();
}

void require_streams(const Tensor& h, const Tensor& r, const char* op) {
  if (h.rank() != 2 || r.rank() != 3 || h.dim(0) != r.dim(0) || h.dim(1) != r.dim(1)) {
    throw DimensionError(std::string(op) + ": " + nn::shape_str(h.shape()) + " vs " +
                         nn::shape_str(r.shape()));
  }
}

void fill(Tensor& t, float v) {
  auto s = t.mutable_values();
  std::fill(s.begin(), s.end(), v);
}

}  // namespace

Tensor normalize_rows(const Tensor& m) {
  const std::size_t n = square_side(m, "normalize_rows");
  const std::size_t rows = m.numel() / n;
  auto mv = m.values();
  std::vector<float> out(mv.size());
  std::vector<float> sums(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    float s = 0.0f;
    for (std::size_t j = 0; j < n; ++j) s += mv[r * n + j];
    sums[r] = s;
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = mv[r * n + j] / s;
  }
  return nn::record("normalize_rows", m.shape(), std::move(out), {m},
                    [n, rows, sums = std::move(sums)](nn::BackwardContext& ctx) {
                      auto g = ctx.out_grad();
                      auto y = ctx.output();
                      auto gx = ctx.input_grad(0);
                      for (std::size_t r = 0; r < rows; ++r) {
                        float dot = 0.0f;
                        for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
                        for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += (g[r * n + j] - dot) / sums[r];
                      }
                    });
}

Tensor normalize_cols(const Tensor& m) {
  const std::size_t n = square_side(m, "normalize_cols");
  const std::size_t mats = m.numel() / (n * n);
  auto mv = m.values();
  std::vector<float> out(mv.size());
  std::vector<float> sums(mats * n);
  for (std::size_t t = 0; t < mats; ++t) {
    const float* a = mv.data() + t * n * n;
    for (std::size_t j = 0; j < n; ++j) {
      float s = 0.0f;
      for (std::size_t i = 0; i < n; ++i) s += a[i * n + j];
      sums[t * n + j] = s;
      for (std::size_t i = 0; i < n; ++i) out[t * n * n + i * n + j] = a[i * n + j] / s;
    }
  }
  return nn::record("normalize_cols", m.shape(), std::move(out), {m},
                    [n, mats, sums = std::move(sums)](nn::BackwardContext& ctx) {
                      auto g = ctx.out_grad();
                      auto y = ctx.output();
                      auto gx = ctx.input_grad(0);
                      for (std::size_t t = 0; t < mats; ++t) {
                        const std::size_t base = t * n * n;
                        for (std::size_t j = 0; j < n; ++j) {
                          float dot = 0.0f;
                          for (std::size_t i = 0; i < n; ++i) dot += g[base + i * n + j] * y[base + i * n + j];
                          for (std::size_t i = 0; i < n; ++i) {
                            gx[base + i * n + j] += (g[base + i * n + j] - dot) / sums[t * n + j];
                          }
                        }
                      }
                    });
}

double stochastic_deviation(std::span<const float> matrices, std::size_t n) {
  double worst = 0.0;
  const std::size_t mats = matrices.size() / (n * n);
  for (std::size_t t = 0; t < mats; ++t) {
    const float* a = matrices.data() + t * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      double rs = 0.0, cs = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        rs += a[i * n + j];
        cs += a[j * n + i];
      }
      worst = std::max({worst, std::abs(rs - 1.0), std::abs(cs - 1.0)});
    }
  }
  return worst;
}

Tensor sinkhorn_knopp(const Tensor& logits, const SinkhornOptions& options, std::vector<double>* trace) {
  const std::size_t n = square_side(logits, "sinkhorn_knopp");
  if (options.iterations < 1) throw ConfigError("sinkhorn_knopp: iterations must be >= 1");
  Tensor m = normalize_rows(nn::exp(logits));
  double dev = stochastic_deviation(m.values(), n);
  if (trace) trace->assign(1, dev);
  for (std::size_t it = 0; it < options.iterations && !(dev < options.tolerance); ++it) {
    m = normalize_rows(normalize_cols(m));
    dev = stochastic_deviation(m.values(), n);
    if (trace) trace->push_back(dev);
  }
  return m;
}

HyperHeadParams register_hyper_heads(nn::ParameterSet& params, const std::string& prefix,
                                     std::size_t streams, std::size_t hidden, double gamma,
                                     nn::Rng& rng) {
  const std::size_t in = streams * hidden;
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  auto random = [&](std::size_t rows) {
    std::vector<float> v(rows * in);
    for (auto& x : v) x = static_cast<float>(rng.normal() * scale);
    return Tensor::from_values({rows, in}, std::move(v));
  };
  HyperHeadParams h;
  h.streams = streams;
  h.hidden = hidden;
  auto make = [&](const char* name, std::size_t rows, nn::Shape bias_shape) {
    HyperHead head;
    head.gate = params.add(prefix + "." + name + ".gate", Tensor::zeros({1}));
    head.proj = params.add(prefix + "." + name + ".proj", random(rows));
    head.bias = params.add(prefix + "." + name + ".bias", Tensor::zeros(std::move(bias_shape)));
    return head;
  };
  h.pre = make("pre", streams, {streams});
  h.post = make("post", streams, {streams});
  h.res = make("res", streams * streams, {streams, streams});
  init_identity(h, gamma);
  return h;
}

void init_identity(HyperHeadParams& heads, double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("init_identity: gamma must be positive");
  for (HyperHead* h : {&heads.pre, &heads.post, &heads.res}) {
    fill(h->gate, 0.0f);
    fill(h->bias, 0.0f);
  }
  auto b = heads.res.bias.mutable_values();
  const std::size_t n = heads.streams;
  for (std::size_t i = 0; i < n; ++i) b[i * n + i] = static_cast<float>(gamma);
}

HyperMatrices gen_hyper_matrices(const Tensor& normed, const HyperHeadParams& heads,
                                 const SinkhornOptions& sinkhorn) {
  const std::size_t n = heads.streams;
  if (normed.rank() != 3 || normed.dim(1) != n || normed.dim(2) != heads.hidden) {
    throw DimensionError("gen_hyper_matrices: streams " + nn::shape_str(normed.shape()) +
                         " do not match n=" + std::to_string(n) + ", D=" + std::to_string(heads.hidden));
  }
  const std::size_t length = normed.dim(0);
  Tensor flat = nn::reshape(normed, {length, n * heads.hidden});
  auto dynamic = [&](const HyperHead& h) {
    return nn::scale_by(nn::activation(nn::linear(flat, h.proj, Tensor()), nn::Activation::tanh), h.gate);
  };
  HyperMatrices out;
  out.pre = nn::activation(nn::add(dynamic(heads.pre), heads.pre.bias), nn::Activation::sigmoid);
  out.post = nn::scale(nn::activation(nn::add(dynamic(heads.post), heads.post.bias), nn::Activation::sigmoid), 2.0f);
  Tensor res_logits = nn::add(nn::reshape(dynamic(heads.res), {length, n, n}), heads.res.bias);
  out.res = sinkhorn_knopp(res_logits, sinkhorn);
  return out;
}

Tensor pre_contract(const Tensor& pre, const Tensor& streams) {
  require_streams(pre, streams, "pre_contract");
  const std::size_t length = streams.dim(0), n = streams.dim(1), d = streams.dim(2);
  auto hv = pre.values();
  auto rv = streams.values();
  std::vector<float> out(length * d, 0.0f);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const float h = hv[t * n + i];
      const float* src = rv.data() + (t * n + i) * d;
      for (std::size_t k = 0; k < d; ++k) out[t * d + k] += h * src[k];
    }
  }
  return nn::record("pre_contract", {length, d}, std::move(out), {pre, streams},
                    [length, n, d](nn::BackwardContext& ctx) {
                      auto g = ctx.out_grad();
                      auto hv = ctx.input(0);
                      auto rv = ctx.input(1);
                      if (ctx.needs_grad(0)) {
                        auto gh = ctx.input_grad(0);
                        for (std::size_t t = 0; t < length; ++t) {
                          for (std::size_t i = 0; i < n; ++i) {
                            float acc = 0.0f;
                            const float* src = rv.data() + (t * n + i) * d;
                            for (std::size_t k = 0; k < d; ++k) acc += g[t * d + k] * src[k];
                            gh[t * n + i] += acc;
                          }
                        }
                      }
                      if (ctx.needs_grad(1)) {
                        auto gr = ctx.input_grad(1);
                        for (std::size_t t = 0; t < length; ++t) {
                          for (std::size_t i = 0; i < n; ++i) {
                            const float h = hv[t * n + i];
                            float* dst = gr.data() + (t * n + i) * d;
                            for (std::size_t k = 0; k < d; ++k) dst[k] += h * g[t * d + k];
                          }
                        }
                      }
                    });
}

Tensor post_expand(const Tensor& post, const Tensor& y) {
  if (post.rank() != 2 || y.rank() != 2 || post.dim(0) != y.dim(0)) {
    throw DimensionError("post_expand: " + nn::shape_str(post.shape()) + " vs " + nn::shape_str(y.shape()));
  }
  const std::size_t length = y.dim(0), n = post.dim(1), d = y.dim(1);
  auto hv = post.values();
  auto yv = y.values();
  std::vector<float> out(length * n * d);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const float h = hv[t * n + i];
      for (std::size_t k = 0; k < d; ++k) out[(t * n + i) * d + k] = h * yv[t * d + k];
    }
  }
  return nn::record("post_expand", {length, n, d}, std::move(out), {post, y},
                    [length, n, d](nn::BackwardContext& ctx) {
                      auto g = ctx.out_grad();
                      auto hv = ctx.input(0);
                      auto yv = ctx.input(1);
                      if (ctx.needs_grad(0)) {
                        auto gh = ctx.input_grad(0);
                        for (std::size_t t = 0; t < length; ++t) {
                          for (std::size_t i = 0; i < n; ++i) {
                            float acc = 0.0f;
                            for (std::size_t k = 0; k < d; ++k) acc += g[(t * n + i) * d + k] * yv[t * d + k];
                            gh[t * n + i] += acc;
                          }
                        }
                      }
                      if (ctx.needs_grad(1)) {
                        auto gy = ctx.input_grad(1);
                        for (std::size_t t = 0; t < length; ++t) {
                          for (std::size_t i = 0; i < n; ++i) {
                            const float h = hv[t * n + i];
                            for (std::size_t k = 0; k < d; ++k) gy[t * d + k] += h * g[(t * n + i) * d + k];
                          }
                        }
                      }
                    });
}

Tensor res_mix(const Tensor& res, const Tensor& streams) {
  if (res.rank() != 3 || streams.rank() != 3 || res.dim(0) != streams.dim(0) ||
      res.dim(1) != streams.dim(1) || res.dim(2) != streams.dim(1)) {
    throw DimensionError("res_mix: " + nn::shape_str(res.shape()) + " vs " + nn::shape_str(streams.shape()));
  }
  const std::size_t length = streams.dim(0), n = streams.dim(1), d = streams.dim(2);
  auto hv = res.values();
  auto rv = streams.values();
  std::vector<float> out(length * n * d, 0.0f);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      float* dst = out.data() + (t * n + i) * d;
      for (std::size_t j = 0; j < n; ++j) {
        const float h = hv[(t * n + i) * n + j];
        const float* src = rv.data() + (t * n + j) * d;
        for (std::size_t k = 0; k < d; ++k) dst[k] += h * src[k];
      }
    }
  }
  return nn::record("res_mix", {length, n, d}, std::move(out), {res, streams},
                    [length, n, d](nn::BackwardContext& ctx) {
                      auto g = ctx.out_grad();
                      auto hv = ctx.input(0);
                      auto rv = ctx.input(1);
                      if (ctx.needs_grad(0)) {
                        auto gh = ctx.input_grad(0);
                        for (std::size_t t = 0; t < length; ++t) {
                          for (std::size_t i = 0; i < n; ++i) {
                            for (std::size_t j = 0; j < n; ++j) {
                              float acc = 0.0f;
                              const float* gi = g.data() + (t * n + i) * d;
                              const float* rj = rv.data() + (t * n + j) * d;
                              for (std::size_t k = 0; k < d; ++k) acc += gi[k] * rj[k];
                              gh[(t * n + i) * n + j] += acc;
                            }
                          }
                        }
                      }
                      if (ctx.needs_grad(1)) {
                        auto gr = ctx.input_grad(1);
                        for (std::size_t t = 0; t < length; ++t) {
                          for (std::size_t i = 0; i < n; ++i) {
                            const float* gi = g.data() + (t * n + i) * d;
                            for (std::size_t j = 0; j < n; ++j) {
                              const float h = hv[(t * n + i) * n + j];
                              float* dst = gr.data() + (t * n + j) * d;
                              for (std::size_t k = 0; k < d; ++k) dst[k] += h * gi[k];
                            }
                          }
                        }
                      }
                    });
}

}  // namespace esmhc::mhc
