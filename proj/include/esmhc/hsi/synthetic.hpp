#pragma once

#include <cstdint>
#include <utility>

#include "esmhc/hsi/cube.hpp"

namespace esmhc::hsi {

struct SyntheticOptions {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t bands = 40;
  std::size_t classes = 4;
  std::uint64_t seed = 42;
  /// Noise std as a fraction of the signature value range.
  double noise_fraction = 0.05;
};

/// Desk-scale scene: one Voronoi blob per class around seeded centres, each
/// class a smooth signature (sum of Gaussian bumps over wavelength) plus
/// Gaussian noise. Band centres are uniform over [400, 2500) nm. Every pixel
/// is labeled. Needs classes >= 2 and at least `classes` pixels.
std::pair<HsiCube, LabelMap> gen_synthetic_cube(const SyntheticOptions& options);

/// Noise-free signature of class c (1-based) sampled at the cube's band centres.
std::vector<double> synthetic_signature(const SyntheticOptions& options, std::size_t cls);

}  // namespace esmhc::hsi
