#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "esmhc/hsi/cube.hpp"
#include "esmhc/hsi/spectrum.hpp"
#include "esmhc/hsi/split.hpp"
#include "esmhc/mhc/hyper.hpp"
#include "esmhc/nn/params.hpp"
#include "esmhc/ssm/blocks.hpp"

namespace esmhc::model {

using nn::Tensor;

struct ModelConfig {
  std::size_t hidden = 64;
  std::size_t expansion = 5;
  std::size_t layers = 2;
  std::size_t sinkhorn_iters = 20;
  float sinkhorn_tol = 1e-6f;
  double topk_fraction = 0.25;
  std::size_t spectral_groups = 8;
  std::size_t ssm_state = 16;
  std::size_t ffn_multiplier = 2;
  std::uint64_t seed = 42;
  double learning_rate = 1e-3;
  std::size_t epochs = 300;
  double gamma = 6.0;
  float rms_eps = 1e-6f;

  /// ConfigError on any broken invariant.
  void validate() const;
};

/// 2-D sinusoidal encoding, [H*W, D] row-major: the first D/2 channels encode
/// the row, the rest the column; within each half, channel 2i is
/// sin(pos / 10000^(2i / (D/2))) and 2i+1 the matching cosine.
std::vector<float> positional_encoding(std::size_t height, std::size_t width, std::size_t hidden);

struct StreamEmbedding {
  Tensor weight;  // [D, bands in group]
  Tensor bias;    // [D]
  Tensor gain;    // [D]
};

struct SsmSublayer {
  Tensor norm_gain;
  mhc::HyperHeadParams heads;
  std::vector<ssm::SsmParams> clusters;  // n*n, index i*n + j
  ssm::SsmParams spectral;
  Tensor out_proj;  // [D, D], zero at init
};

struct FfnSublayer {
  Tensor norm_gain;
  mhc::HyperHeadParams heads;
  Tensor w1, b1;  // [m*D, D], [m*D]
  Tensor w2, b2;  // [D, m*D], [D], zero at init
};

struct LayerParams {
  SsmSublayer ssm;
  FfnSublayer ffn;
};

/// Detached per-token matrices of one sublayer.
struct SublayerTrace {
  Tensor pre;
  Tensor post;
  Tensor res;
};

struct LayerTrace {
  SublayerTrace ssm;
  SublayerTrace ffn;
  std::vector<ssm::TokenSelection> selections;  // n*n, SSM sublayer only
};

struct ForwardTrace {
  std::vector<LayerTrace> layers;
};

class EsMhcModel {
 public:
  /// Streams follow `groups` in order (FULL first); n must equal groups.size().
  EsMhcModel(ModelConfig config, std::vector<hsi::SpectrumGroup> groups, std::size_t height,
             std::size_t width, std::size_t classes);

  const ModelConfig& config() const { return config_; }
  const std::vector<hsi::SpectrumGroup>& groups() const { return groups_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t classes() const { return classes_; }
  std::size_t streams() const { return groups_.size(); }
  std::size_t topk() const;

  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  std::vector<StreamEmbedding>& embeddings() { return embed_; }
  std::vector<LayerParams>& layers() { return layers_; }
  Tensor& head_weight() { return head_w_; }
  Tensor& head_bias() { return head_b_; }

  /// [L, n, D] initial residual streams.
  Tensor embed(const hsi::HsiCube& cube) const;
  /// One mHC layer (SSM sublayer then FFN sublayer) on [L, n, D].
  Tensor layer_forward(std::size_t layer, const Tensor& streams, LayerTrace* trace = nullptr) const;
  /// Stack of layers on already-embedded streams.
  Tensor run_layers(const Tensor& streams, ForwardTrace* trace = nullptr) const;
  /// Logits [L, K].
  Tensor forward(const hsi::HsiCube& cube, ForwardTrace* trace = nullptr) const;

 private:
  void check_cube(const hsi::HsiCube& cube) const;
  mhc::SinkhornOptions sinkhorn() const { return {config_.sinkhorn_iters, config_.sinkhorn_tol}; }

  ModelConfig config_;
  std::vector<hsi::SpectrumGroup> groups_;
  std::size_t height_, width_, classes_;
  nn::ParameterSet params_;
  std::vector<StreamEmbedding> embed_;
  std::vector<float> pos_;
  std::vector<LayerParams> layers_;
  Tensor head_w_, head_b_;
};

/// Argmax + 1 per pixel, ties to the lower class.
hsi::LabelMap predict_labels(const Tensor& logits, std::size_t height, std::size_t width);
hsi::LabelMap predict(const EsMhcModel& model, const hsi::HsiCube& cube);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // at the start of the epoch, before the update
  double train_oa = 0.0;
  double seconds = 0.0;
};

using EpochCallback = std::function<void(const EsMhcModel&, const EpochStats&)>;

/// Full-image Adam training on the train mask, config().epochs epochs.
/// ConfigError when the mask holds no pixels.
std::vector<EpochStats> train(EsMhcModel& model, const hsi::HsiCube& cube, const hsi::LabelMap& labels,
                              const hsi::SplitMasks& masks, const EpochCallback& on_epoch = {});

/// Per-pixel targets for cross_entropy: label - 1 on masked labeled pixels, else -1.
std::vector<int> masked_targets(const hsi::LabelMap& labels, const std::vector<std::uint8_t>& mask);

/// CSV with header epoch,loss,train_oa,seconds.
void write_train_log(const std::vector<EpochStats>& log, const std::filesystem::path& path);

}  // namespace esmhc::model
