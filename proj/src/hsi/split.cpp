#include "esmhc/hsi/split.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "esmhc/errors.hpp"
#include "esmhc/nn/rng.hpp"

namespace esmhc::hsi {

std::size_t SplitMasks::train_count() const {
  return static_cast<std::size_t>(std::count(train.begin(), train.end(), 1));
}

std::size_t SplitMasks::test_count() const {
  return static_cast<std::size_t>(std::count(test.begin(), test.end(), 1));
}

std::size_t train_quota(std::size_t class_count, double fraction) {
  auto rounded = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(class_count) + 0.5));
  return std::min(class_count, std::max<std::size_t>(1, rounded));
}

SplitMasks stratified_split(const LabelMap& labels, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("split fraction must lie in (0, 1), got " + std::to_string(fraction));
  }
  labels.validate();
  SplitMasks masks;
  masks.height = labels.height;
  masks.width = labels.width;
  masks.seed = seed;
  masks.train.assign(labels.pixels(), 0);
  masks.test.assign(labels.pixels(), 0);

  std::vector<std::vector<std::size_t>> members(labels.classes + 1);
  for (std::size_t p = 0; p < labels.pixels(); ++p) {
    if (labels.labels[p] > 0) members[labels.labels[p]].push_back(p);
  }

  nn::Rng rng(seed);
  for (std::size_t c = 1; c <= labels.classes; ++c) {
    auto& pix = members[c];
    if (pix.empty()) {
      std::cerr << "warning: class " << c << " has no labeled pixels; skipped in split\n";
      continue;
    }
    for (std::size_t i = pix.size() - 1; i > 0; --i) std::swap(pix[i], pix[rng.below(i + 1)]);
    const std::size_t quota = train_quota(pix.size(), fraction);
    for (std::size_t i = 0; i < pix.size(); ++i) (i < quota ? masks.train : masks.test)[pix[i]] = 1;
  }
  return masks;
}

}  // namespace esmhc::hsi
