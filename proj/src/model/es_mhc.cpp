#include "esmhc/model/es_mhc.hpp"

#include <cmath>

#include "esmhc/errors.hpp"
#include "esmhc/nn/ops.hpp"
#include "esmhc/nn/rng.hpp"

namespace esmhc::model {

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("model config: " + what);
  };
  require(hidden >= 4 && hidden % 2 == 0, "hidden must be even and >= 4");
  require(expansion >= 1, "expansion must be >= 1");
  require(layers >= 1, "layers must be >= 1");
  require(sinkhorn_iters >= 1, "sinkhorn_iters must be >= 1");
  require(sinkhorn_tol >= 0.0f, "sinkhorn_tol must be >= 0");
  require(topk_fraction > 0.0 && topk_fraction <= 1.0, "topk_frac must be in (0, 1]");
  require(spectral_groups >= 1 && hidden % spectral_groups == 0, "spectral_groups must divide hidden");
  require(ssm_state >= 1, "ssm_state must be >= 1");
  require(ffn_multiplier >= 1, "ffn_multiplier must be >= 1");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be positive");
  require(gamma > 0.0 && std::isfinite(gamma), "gamma must be positive");
  require(rms_eps > 0.0f, "rms_eps must be positive");
}

std::vector<float> positional_encoding(std::size_t height, std::size_t width, std::size_t hidden) {
  const std::size_t half = hidden / 2;
  std::vector<float> pe(height * width * hidden, 0.0f);
  auto ladder = [half](double pos, std::size_t j) {
    const double freq = std::pow(10000.0, static_cast<double>(j - j % 2) / static_cast<double>(half));
    return static_cast<float>(j % 2 == 0 ? std::sin(pos / freq) : std::cos(pos / freq));
  };
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      float* out = pe.data() + (r * width + c) * hidden;
      for (std::size_t j = 0; j < half; ++j) {
        out[j] = ladder(static_cast<double>(r), j);
        out[half + j] = ladder(static_cast<double>(c), j);
      }
    }
  }
  return pe;
}

EsMhcModel::EsMhcModel(ModelConfig config, std::vector<hsi::SpectrumGroup> groups, std::size_t height,
                       std::size_t width, std::size_t classes)
    : config_(config), groups_(std::move(groups)), height_(height), width_(width), classes_(classes) {
  config_.validate();
  if (groups_.size() != config_.expansion) {
    throw ConfigError("expansion " + std::to_string(config_.expansion) + " does not match " +
                      std::to_string(groups_.size()) + " spectrum streams");
  }
  if (height_ == 0 || width_ == 0) throw ConfigError("model needs a non-empty image");
  if (classes_ == 0) throw ConfigError("model needs at least one class");
  for (const auto& g : groups_) {
    if (g.bands.empty()) throw ConfigError("spectrum group " + g.name + " has no bands");
  }

  const std::size_t d = config_.hidden, n = groups_.size();
  nn::Rng rng(config_.seed);
  auto random = [&](nn::Shape shape, double sd) {
    std::vector<float> v(nn::shape_numel(shape));
    for (auto& x : v) x = static_cast<float>(rng.normal() * sd);
    return Tensor::from_values(std::move(shape), std::move(v));
  };
  auto fan = [](std::size_t in) { return 1.0 / std::sqrt(static_cast<double>(in)); };

  for (std::size_t e = 0; e < n; ++e) {
    const std::string p = "embed." + groups_[e].name;
    const std::size_t bands = groups_[e].bands.size();
    StreamEmbedding emb;
    emb.weight = params_.add(p + ".weight", random({d, bands}, fan(bands)));
    emb.bias = params_.add(p + ".bias", Tensor::zeros({d}));
    emb.gain = params_.add(p + ".gain", Tensor::full({d}, 1.0f));
    embed_.push_back(emb);
  }
  pos_ = positional_encoding(height_, width_, d);

  const std::size_t group_width = d / config_.spectral_groups;
  const std::size_t ffn_hidden = config_.ffn_multiplier * d;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l);
    LayerParams layer;
    layer.ssm.norm_gain = params_.add(p + ".ssm.norm", Tensor::full({d}, 1.0f));
    layer.ssm.heads = mhc::register_hyper_heads(params_, p + ".ssm.h", n, d, config_.gamma, rng);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        layer.ssm.clusters.push_back(ssm::register_ssm(
            params_, p + ".ssm.cwm" + std::to_string(i) + std::to_string(j), d, config_.ssm_state, 0.1f, rng));
      }
    }
    layer.ssm.spectral = ssm::register_ssm(params_, p + ".ssm.spectral", group_width, config_.ssm_state, 0.1f, rng);
    layer.ssm.out_proj = params_.add(p + ".ssm.out", Tensor::zeros({d, d}));

    layer.ffn.norm_gain = params_.add(p + ".ffn.norm", Tensor::full({d}, 1.0f));
    layer.ffn.heads = mhc::register_hyper_heads(params_, p + ".ffn.h", n, d, config_.gamma, rng);
    layer.ffn.w1 = params_.add(p + ".ffn.w1", random({ffn_hidden, d}, fan(d)));
    layer.ffn.b1 = params_.add(p + ".ffn.b1", Tensor::zeros({ffn_hidden}));
    layer.ffn.w2 = params_.add(p + ".ffn.w2", Tensor::zeros({d, ffn_hidden}));
    layer.ffn.b2 = params_.add(p + ".ffn.b2", Tensor::zeros({d}));
    layers_.push_back(std::move(layer));
  }
  head_w_ = params_.add("head.weight", random({classes_, d}, 0.01 * fan(d)));
  head_b_ = params_.add("head.bias", Tensor::zeros({classes_}));
}

std::size_t EsMhcModel::topk() const { return ssm::topk_count(height_ * width_, config_.topk_fraction); }

void EsMhcModel::check_cube(const hsi::HsiCube& cube) const {
  if (cube.height != height_ || cube.width != width_) {
    throw DimensionError("model built for " + std::to_string(height_) + "x" + std::to_string(width_) +
                         ", cube is " + std::to_string(cube.height) + "x" + std::to_string(cube.width));
  }
  for (const auto& g : groups_) {
    if (!g.bands.empty() && g.bands.back() >= cube.bands) {
      throw DimensionError("spectrum group " + g.name + " refers to band " + std::to_string(g.bands.back()) +
                           " of a " + std::to_string(cube.bands) + "-band cube");
    }
  }
}

Tensor EsMhcModel::embed(const hsi::HsiCube& cube) const {
  check_cube(cube);
  const std::size_t length = cube.pixels(), d = config_.hidden;
  std::vector<Tensor> streams;
  for (std::size_t e = 0; e < groups_.size(); ++e) {
    const auto& bands = groups_[e].bands;
    std::vector<float> x(length * bands.size());
    for (std::size_t t = 0; t < length; ++t)
      for (std::size_t b = 0; b < bands.size(); ++b) x[t * bands.size() + b] = cube.values[t * cube.bands + bands[b]];
    Tensor f = nn::linear(Tensor::from_values({length, bands.size()}, std::move(x)), embed_[e].weight, embed_[e].bias);
    f = nn::rms_norm(f, embed_[e].gain, config_.rms_eps);
    if (groups_[e].name == hsi::kFullGroup) f = nn::add(f, Tensor::from_values({length, d}, pos_));
    streams.push_back(f);
  }
  return nn::stack(streams, 1);
}

Tensor EsMhcModel::layer_forward(std::size_t index, const Tensor& r, LayerTrace* trace) const {
  const LayerParams& layer = layers_.at(index);
  const float eps = config_.rms_eps;

  Tensor normed = nn::rms_norm(r, layer.ssm.norm_gain, eps);
  mhc::HyperMatrices h = mhc::gen_hyper_matrices(normed, layer.ssm.heads, sinkhorn());
  Tensor u = mhc::pre_contract(h.pre, normed);
  Tensor y = ssm::cluster_wise_spatial_mamba(u, h.res, topk(), layer.ssm.clusters,
                                             trace ? &trace->selections : nullptr);
  y = ssm::spectral_mamba(y, config_.spectral_groups, layer.ssm.spectral);
  y = nn::linear(y, layer.ssm.out_proj, Tensor());
  Tensor mid = nn::add(mhc::res_mix(h.res, r), mhc::post_expand(h.post, y));
  if (trace) trace->ssm = {h.pre.detach(), h.post.detach(), h.res.detach()};

  normed = nn::rms_norm(mid, layer.ffn.norm_gain, eps);
  h = mhc::gen_hyper_matrices(normed, layer.ffn.heads, sinkhorn());
  u = mhc::pre_contract(h.pre, normed);
  y = nn::linear(nn::activation(nn::linear(u, layer.ffn.w1, layer.ffn.b1), nn::Activation::silu), layer.ffn.w2,
                 layer.ffn.b2);
  Tensor out = nn::add(mhc::res_mix(h.res, mid), mhc::post_expand(h.post, y));
  if (trace) trace->ffn = {h.pre.detach(), h.post.detach(), h.res.detach()};
  return out;
}

Tensor EsMhcModel::run_layers(const Tensor& streams, ForwardTrace* trace) const {
  if (trace) trace->layers.assign(layers_.size(), {});
  Tensor r = streams;
  for (std::size_t l = 0; l < layers_.size(); ++l) r = layer_forward(l, r, trace ? &trace->layers[l] : nullptr);
  return r;
}

Tensor EsMhcModel::forward(const hsi::HsiCube& cube, ForwardTrace* trace) const {
  Tensor r = run_layers(embed(cube), trace);
  return nn::linear(nn::mean_axis(r, 1), head_w_, head_b_);
}

hsi::LabelMap predict_labels(const Tensor& logits, std::size_t height, std::size_t width) {
  if (logits.rank() != 2 || logits.dim(0) != height * width) {
    throw DimensionError("predict: logits " + nn::shape_str(logits.shape()) + " for " + std::to_string(height) +
                         "x" + std::to_string(width));
  }
  const std::size_t k = logits.dim(1);
  hsi::LabelMap out;
  out.height = height;
  out.width = width;
  out.classes = k;
  out.labels.resize(height * width);
  auto v = logits.values();
  for (std::size_t t = 0; t < height * width; ++t) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (v[t * k + c] > v[t * k + best]) best = c;
    out.labels[t] = static_cast<std::uint16_t>(best + 1);
  }
  return out;
}

hsi::LabelMap predict(const EsMhcModel& model, const hsi::HsiCube& cube) {
  nn::NoGradGuard guard;
  return predict_labels(model.forward(cube), cube.height, cube.width);
}

}  // namespace esmhc::model
