#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace esmhc::hsi {

/// Hyperspectral cube, band-interleaved-by-pixel: value(r, c, b) lives at
/// (r * width + c) * bands + b.
struct HsiCube {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t bands = 0;
  std::vector<float> values;
  std::vector<double> wavelengths;  // band centres in nm, strictly increasing

  std::size_t pixels() const { return height * width; }
  float at(std::size_t row, std::size_t col, std::size_t band) const {
    return values[(row * width + col) * bands + band];
  }
  /// Throws DataError on any broken invariant.
  void validate() const;
};

/// 0 = unlabeled, 1..classes otherwise.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t classes = 0;
  std::vector<std::uint16_t> labels;
  std::vector<std::string> class_names;  // optional, echoed into the sidecar

  std::size_t pixels() const { return height * width; }
  void validate() const;
};

/// "HSICUBE1", u32 H, W, C, C x f64 wavelengths, H*W*C x f32 (BIP), little-endian.
/// Also writes `<path>.json` with the dimensions for humans.
void save_cube(const HsiCube& cube, const std::filesystem::path& path);
HsiCube load_cube(const std::filesystem::path& path);

/// "HSILBL01", u32 H, W, K, H*W x u16, little-endian, plus `<path>.json`.
void save_labels(const LabelMap& labels, const std::filesystem::path& path);
LabelMap load_labels(const std::filesystem::path& path);

/// Per-band z-score with population std. Zero-variance bands become all 0.
HsiCube zscore_normalize(const HsiCube& cube);

}  // namespace esmhc::hsi
