#include <chrono>
#include <fstream>

#include "esmhc/errors.hpp"
#include "esmhc/model/es_mhc.hpp"
#include "esmhc/nn/adam.hpp"
#include "esmhc/nn/ops.hpp"

namespace esmhc::model {

std::vector<int> masked_targets(const hsi::LabelMap& labels, const std::vector<std::uint8_t>& mask) {
  if (mask.size() != labels.pixels()) throw DimensionError("mask size does not match the label map");
  std::vector<int> targets(labels.pixels(), -1);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (mask[t] && labels.labels[t] > 0) targets[t] = static_cast<int>(labels.labels[t]) - 1;
  }
  return targets;
}

std::vector<EpochStats> train(EsMhcModel& model, const hsi::HsiCube& cube, const hsi::LabelMap& labels,
                              const hsi::SplitMasks& masks, const EpochCallback& on_epoch) {
  if (labels.height != cube.height || labels.width != cube.width || masks.train.size() != cube.pixels()) {
    throw DimensionError("train: cube, labels and masks disagree on geometry");
  }
  if (labels.classes != model.classes()) {
    throw ConfigError("train: labels have " + std::to_string(labels.classes) + " classes, model " +
                      std::to_string(model.classes()));
  }
  const std::vector<int> targets = masked_targets(labels, masks.train);
  std::size_t count = 0;
  for (int t : targets) count += t >= 0;
  if (count == 0) throw ConfigError("train: no training pixels");

  nn::AdamOptions options;
  options.learning_rate = model.config().learning_rate;
  nn::AdamState adam = nn::make_adam_state(model.params(), options);
  std::vector<EpochStats> log;
  const std::size_t k = model.classes();
  for (std::size_t epoch = 1; epoch <= model.config().epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    model.params().zero_grad();
    Tensor logits = model.forward(cube);
    Tensor loss = nn::cross_entropy(logits, targets);
    loss.backward();
    nn::adam_step(model.params(), adam);

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = loss.item();
    auto v = logits.values();
    std::size_t correct = 0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (targets[t] < 0) continue;
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c)
        if (v[t * k + c] > v[t * k + best]) best = c;
      correct += static_cast<int>(best) == targets[t];
    }
    stats.train_oa = static_cast<double>(correct) / static_cast<double>(count);
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.push_back(stats);
    if (on_epoch) on_epoch(model, stats);
  }
  return log;
}

void write_train_log(const std::vector<EpochStats>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,loss,train_oa,seconds\n";
  char line[128];
  for (const auto& s : log) {
    std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.6f\n", s.epoch, s.loss, s.train_oa, s.seconds);
    out << line;
  }
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace esmhc::model
