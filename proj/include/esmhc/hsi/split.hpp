#pragma once

#include <cstdint>
#include <vector>

#include "esmhc/hsi/cube.hpp"

namespace esmhc::hsi {

/// Disjoint train/test masks (row-major, H*W) covering exactly the labeled pixels.
struct SplitMasks {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> train;
  std::vector<std::uint8_t> test;
  std::uint64_t seed = 0;

  std::size_t train_count() const;
  std::size_t test_count() const;
};

/// Training pixels per class: max(1, floor(fraction * count + 0.5)).
std::size_t train_quota(std::size_t class_count, double fraction);

/// Per class, a seeded uniform choice of train_quota() pixels goes to train,
/// the rest to test. Classes without pixels are skipped with a warning on
/// stderr. 0 < fraction < 1, otherwise ConfigError.
SplitMasks stratified_split(const LabelMap& labels, double fraction, std::uint64_t seed);

}  // namespace esmhc::hsi
