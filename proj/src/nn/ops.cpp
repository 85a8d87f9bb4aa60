#include "esmhc/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "esmhc/errors.hpp"
#include "esmhc/nn/parallel.hpp"

namespace esmhc::nn {

namespace {

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

bool trailing_match(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (!trailing_match(a.shape(), b.shape())) {
    throw DimensionError("add: cannot broadcast " + shape_str(b.shape()) + " onto " +
                         shape_str(a.shape()));
  }
  auto av = a.values();
  auto bv = b.values();
  const std::size_t inner = bv.size();
  std::vector<float> out(av.begin(), av.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % inner];
  return record("add", a.shape(), std::move(out), {a, b}, [inner](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    if (ctx.needs_grad(0)) {
      auto ga = ctx.input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (ctx.needs_grad(1)) {
      auto gb = ctx.input_grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % inner] += g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  auto av = a.values();
  auto bv = b.values();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return record("mul", a.shape(), std::move(out), {a, b}, [](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    auto av = ctx.input(0);
    auto bv = ctx.input(1);
    if (ctx.needs_grad(0)) {
      auto ga = ctx.input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (ctx.needs_grad(1)) {
      auto gb = ctx.input_grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& x, float factor) {
  auto xv = x.values();
  std::vector<float> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
  return record("scale", x.shape(), std::move(out), {x}, [factor](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
  });
}

Tensor scale_by(const Tensor& x, const Tensor& gate) {
  if (gate.numel() != 1) {
    throw DimensionError("scale_by: gate must have one element, got " + shape_str(gate.shape()));
  }
  const float a = gate.values()[0];
  auto xv = x.values();
  std::vector<float> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * a;
  return record("scale_by", x.shape(), std::move(out), {x, gate}, [](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    auto xv = ctx.input(0);
    const float a = ctx.input(1)[0];
    if (ctx.needs_grad(0)) {
      auto gx = ctx.input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * a;
    }
    if (ctx.needs_grad(1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += static_cast<double>(g[i]) * xv[i];
      ctx.input_grad(1)[0] += static_cast<float>(acc);
    }
  });
}

Tensor activation(const Tensor& x, Activation kind) {
  auto xv = x.values();
  std::vector<float> out(xv.size());
  switch (kind) {
    case Activation::sigmoid:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(xv[i]);
      return record("sigmoid", x.shape(), std::move(out), {x}, [](BackwardContext& ctx) {
        auto g = ctx.out_grad();
        auto y = ctx.output();
        auto gx = ctx.input_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0f - y[i]);
      });
    case Activation::tanh:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
      return record("tanh", x.shape(), std::move(out), {x}, [](BackwardContext& ctx) {
        auto g = ctx.out_grad();
        auto y = ctx.output();
        auto gx = ctx.input_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0f - y[i] * y[i]);
      });
    case Activation::silu:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * sigmoid(xv[i]);
      return record("silu", x.shape(), std::move(out), {x}, [](BackwardContext& ctx) {
        auto g = ctx.out_grad();
        auto xv = ctx.input(0);
        auto gx = ctx.input_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          float s = sigmoid(xv[i]);
          gx[i] += g[i] * s * (1.0f + xv[i] * (1.0f - s));
        }
      });
  }
  throw std::logic_error("unknown activation");
}

Tensor softplus(const Tensor& x) {
  auto xv = x.values();
  std::vector<float> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    float v = xv[i];
    out[i] = v > 20.0f ? v : std::log1p(std::exp(v));
  }
  return record("softplus", x.shape(), std::move(out), {x}, [](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    auto xv = ctx.input(0);
    auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sigmoid(xv[i]);
  });
}

Tensor exp(const Tensor& x) {
  auto xv = x.values();
  std::vector<float> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(xv[i]);
  return record("exp", x.shape(), std::move(out), {x}, [](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    auto y = ctx.output();
    auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() == 0 || w.rank() != 2) throw DimensionError("linear: need x[..., Din] and w[Dout, Din]");
  const std::size_t din = x.shape().back();
  const std::size_t dout = w.dim(0);
  if (w.dim(1) != din) {
    throw DimensionError("linear: x " + shape_str(x.shape()) + " vs w " + shape_str(w.shape()));
  }
  if (b.defined() && (b.rank() != 1 || b.dim(0) != dout)) {
    throw DimensionError("linear: bias " + shape_str(b.shape()) + " vs w " + shape_str(w.shape()));
  }
  const std::size_t rows = x.numel() / din;
  auto xv = x.values();
  auto wv = w.values();
  std::vector<float> out(rows * dout);
  parallel_for(rows, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      const float* xr = xv.data() + r * din;
      for (std::size_t o = 0; o < dout; ++o) {
        const float* wo = wv.data() + o * din;
        float acc = b.defined() ? b.values()[o] : 0.0f;
        for (std::size_t i = 0; i < din; ++i) acc += wo[i] * xr[i];
        out[r * dout + o] = acc;
      }
    }
  });
  Shape shape = x.shape();
  shape.back() = dout;
  std::vector<Tensor> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  const bool has_bias = b.defined();
  return record("linear", std::move(shape), std::move(out), std::move(inputs),
                [rows, din, dout, has_bias](BackwardContext& ctx) {
                  auto g = ctx.out_grad();
                  auto xv = ctx.input(0);
                  auto wv = ctx.input(1);
                  if (ctx.needs_grad(0)) {
                    auto gx = ctx.input_grad(0);
                    parallel_for(rows, [&](std::size_t r0, std::size_t r1) {
                      for (std::size_t r = r0; r < r1; ++r) {
                        float* gxr = gx.data() + r * din;
                        for (std::size_t o = 0; o < dout; ++o) {
                          const float go = g[r * dout + o];
                          if (go == 0.0f) continue;
                          const float* wo = wv.data() + o * din;
                          for (std::size_t i = 0; i < din; ++i) gxr[i] += go * wo[i];
                        }
                      }
                    });
                  }
                  if (ctx.needs_grad(1)) {
                    auto gw = ctx.input_grad(1);
                    parallel_for(dout, [&](std::size_t o0, std::size_t o1) {
                      for (std::size_t r = 0; r < rows; ++r) {
                        const float* xr = xv.data() + r * din;
                        for (std::size_t o = o0; o < o1; ++o) {
                          const float go = g[r * dout + o];
                          if (go == 0.0f) continue;
                          float* gwo = gw.data() + o * din;
                          for (std::size_t i = 0; i < din; ++i) gwo[i] += go * xr[i];
                        }
                      }
                    });
                  }
                  if (has_bias && ctx.needs_grad(2)) {
                    auto gb = ctx.input_grad(2);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t o = 0; o < dout; ++o) gb[o] += g[r * dout + o];
                    }
                  }
                });
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, float eps) {
  if (x.rank() == 0) throw DimensionError("rms_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (d == 0) throw DimensionError("rms_norm: empty last axis");
  if (gain.rank() != 1 || gain.dim(0) != d) {
    throw DimensionError("rms_norm: gain " + shape_str(gain.shape()) + " vs x " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  auto xv = x.values();
  auto gv = gain.values();
  std::vector<float> out(xv.size());
  std::vector<float> inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = xv.data() + r * d;
    double ms = 0.0;
    for (std::size_t i = 0; i < d; ++i) ms += static_cast<double>(xr[i]) * xr[i];
    ms /= static_cast<double>(d);
    float s = static_cast<float>(1.0 / std::sqrt(ms + eps));
    inv[r] = s;
    for (std::size_t i = 0; i < d; ++i) out[r * d + i] = xr[i] * s * gv[i];
  }
  return record("rms_norm", x.shape(), std::move(out), {x, gain},
                [rows, d, inv = std::move(inv)](BackwardContext& ctx) {
                  auto g = ctx.out_grad();
                  auto xv = ctx.input(0);
                  auto gv = ctx.input(1);
                  std::span<float> gx;
                  std::span<float> ggain;
                  if (ctx.needs_grad(0)) gx = ctx.input_grad(0);
                  if (ctx.needs_grad(1)) ggain = ctx.input_grad(1);
                  for (std::size_t r = 0; r < rows; ++r) {
                    const float* xr = xv.data() + r * d;
                    const float* gr = g.data() + r * d;
                    const float s = inv[r];
                    if (!ggain.empty()) {
                      for (std::size_t i = 0; i < d; ++i) ggain[i] += gr[i] * xr[i] * s;
                    }
                    if (!gx.empty()) {
                      double dot = 0.0;
                      for (std::size_t i = 0; i < d; ++i) dot += static_cast<double>(gr[i]) * gv[i] * xr[i];
                      const float k = static_cast<float>(dot) * s * s * s / static_cast<float>(d);
                      for (std::size_t i = 0; i < d; ++i) gx[r * d + i] += s * gv[i] * gr[i] - k * xr[i];
                    }
                  }
                });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  auto xv = x.values();
  return record("reshape", std::move(shape), std::vector<float>(xv.begin(), xv.end()), {x},
                [](BackwardContext& ctx) {
                  auto g = ctx.out_grad();
                  auto gx = ctx.input_grad(0);
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.values()) acc += v;
  return record("sum", {1}, {static_cast<float>(acc)}, {x}, [](BackwardContext& ctx) {
    const float g = ctx.out_grad()[0];
    for (float& v : ctx.input_grad(0)) v += g;
  });
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("mean_axis: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  if (n == 0) throw DimensionError("mean_axis: empty axis");
  auto xv = x.values();
  std::vector<float> out(outer * inner, 0.0f);
  const float w = 1.0f / static_cast<float>(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < n; ++k) {
      const float* src = xv.data() + (o * n + k) * inner;
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += src[i];
    }
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] *= w;
  }
  Shape shape = s;
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  return record("mean_axis", std::move(shape), std::move(out), {x},
                [outer, inner, n, w](BackwardContext& ctx) {
                  auto g = ctx.out_grad();
                  auto gx = ctx.input_grad(0);
                  for (std::size_t o = 0; o < outer; ++o) {
                    for (std::size_t k = 0; k < n; ++k) {
                      float* dst = gx.data() + (o * n + k) * inner;
                      for (std::size_t i = 0; i < inner; ++i) dst[i] += g[o * inner + i] * w;
                    }
                  }
                });
}

Tensor stack(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("stack: no parts");
  const Shape& s = parts.front().shape();
  if (axis > s.size()) throw DimensionError("stack: axis out of range");
  for (const auto& p : parts) {
    if (p.shape() != s) throw DimensionError("stack: mismatched part " + shape_str(p.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = parts.size();
  std::vector<float> out(outer * n * inner);
  for (std::size_t k = 0; k < n; ++k) {
    auto pv = parts[k].values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.data() + o * inner, inner, out.data() + (o * n + k) * inner);
    }
  }
  Shape shape = s;
  shape.insert(shape.begin() + static_cast<std::ptrdiff_t>(axis), n);
  return record("stack", std::move(shape), std::move(out), parts,
                [outer, inner, n](BackwardContext& ctx) {
                  auto g = ctx.out_grad();
                  for (std::size_t k = 0; k < n; ++k) {
                    if (!ctx.needs_grad(k)) continue;
                    auto gp = ctx.input_grad(k);
                    for (std::size_t o = 0; o < outer; ++o) {
                      const float* src = g.data() + (o * n + k) * inner;
                      for (std::size_t i = 0; i < inner; ++i) gp[o * inner + i] += src[i];
                    }
                  }
                });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  if (x.rank() != 2) throw DimensionError("gather_rows: need [L, D], got " + shape_str(x.shape()));
  const std::size_t length = x.dim(0);
  const std::size_t d = x.dim(1);
  for (auto r : rows) {
    if (r >= length) throw DimensionError("gather_rows: index " + std::to_string(r) + " >= " + std::to_string(length));
  }
  auto xv = x.values();
  std::vector<float> out(rows.size() * d);
  for (std::size_t m = 0; m < rows.size(); ++m) {
    std::copy_n(xv.data() + rows[m] * d, d, out.data() + m * d);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return record("gather_rows", {rows.size(), d}, std::move(out), {x},
                [d, idx = std::move(idx)](BackwardContext& ctx) {
                  auto g = ctx.out_grad();
                  auto gx = ctx.input_grad(0);
                  for (std::size_t m = 0; m < idx.size(); ++m) {
                    for (std::size_t i = 0; i < d; ++i) gx[idx[m] * d + i] += g[m * d + i];
                  }
                });
}

Tensor scatter_rows(const Tensor& y, std::span<const std::size_t> rows, std::size_t length) {
  if (y.rank() != 2 || y.dim(0) != rows.size()) {
    throw DimensionError("scatter_rows: " + shape_str(y.shape()) + " vs " +
                         std::to_string(rows.size()) + " indices");
  }
  const std::size_t d = y.dim(1);
  for (auto r : rows) {
    if (r >= length) throw DimensionError("scatter_rows: index " + std::to_string(r) + " >= " + std::to_string(length));
  }
  auto yv = y.values();
  std::vector<float> out(length * d, 0.0f);
  for (std::size_t m = 0; m < rows.size(); ++m) {
    std::copy_n(yv.data() + m * d, d, out.data() + rows[m] * d);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return record("scatter_rows", {length, d}, std::move(out), {y},
                [d, idx = std::move(idx)](BackwardContext& ctx) {
                  auto g = ctx.out_grad();
                  auto gy = ctx.input_grad(0);
                  for (std::size_t m = 0; m < idx.size(); ++m) {
                    for (std::size_t i = 0; i < d; ++i) gy[m * d + i] += g[idx[m] * d + i];
                  }
                });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    throw DimensionError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(targets.size()) + " targets");
  }
  const std::size_t rows = logits.dim(0);
  const std::size_t k = logits.dim(1);
  auto lv = logits.values();
  std::vector<float> probs(rows * k, 0.0f);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int t = targets[r];
    if (t < 0) continue;
    if (static_cast<std::size_t>(t) >= k) throw DimensionError("cross_entropy: target out of range");
    const float* row = lv.data() + r * k;
    const float mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(static_cast<double>(row[c] - mx));
    total += std::log(z) + mx - row[t];
    for (std::size_t c = 0; c < k; ++c) {
      probs[r * k + c] = static_cast<float>(std::exp(static_cast<double>(row[c] - mx)) / z);
    }
    ++count;
  }
  if (count == 0) throw DimensionError("cross_entropy: no target rows");
  std::vector<int> tgt(targets.begin(), targets.end());
  const float inv = 1.0f / static_cast<float>(count);
  return record("cross_entropy", {1}, {static_cast<float>(total / static_cast<double>(count))},
                {logits},
                [rows, k, inv, probs = std::move(probs), tgt = std::move(tgt)](BackwardContext& ctx) {
                  const float g = ctx.out_grad()[0] * inv;
                  auto gl = ctx.input_grad(0);
                  for (std::size_t r = 0; r < rows; ++r) {
                    if (tgt[r] < 0) continue;
                    for (std::size_t c = 0; c < k; ++c) {
                      float p = probs[r * k + c] - (static_cast<int>(c) == tgt[r] ? 1.0f : 0.0f);
                      gl[r * k + c] += g * p;
                    }
                  }
                });
}

}  // namespace esmhc::nn
