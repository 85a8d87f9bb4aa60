#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "esmhc/hsi/cube.hpp"

namespace esmhc::hsi {

/// Half-open wavelength interval [min_nm, max_nm) naming one stream.
struct BandRange {
  std::string name;
  double min_nm = 0.0;
  double max_nm = 0.0;
};

struct SpectrumGroup {
  std::string name;
  double min_nm = 0.0;
  double max_nm = 0.0;
  std::vector<std::size_t> bands;  // ascending band indices
};

inline constexpr const char* kFullGroup = "FULL";

/// VIS 400-700, NIR 700-1000, SWIR1 1000-1800, SWIR2 1800-2500 nm.
std::vector<BandRange> default_band_ranges();

/// FULL (every band) first, then one group per range in the given order.
/// Ranges must be ascending and disjoint (ConfigError otherwise). Every band
/// has to fall inside some range; an uncovered band is a partition error,
/// reported as ConfigError. No ranges at all yields FULL alone.
std::vector<SpectrumGroup> split_spectrum(std::span<const double> wavelengths,
                                          std::span<const BandRange> ranges);
std::vector<SpectrumGroup> split_spectrum(const HsiCube& cube, std::span<const BandRange> ranges);

/// FULL followed by `streams - 1` copies of it (COPY1, COPY2, ...): the
/// input-duplication layout used for the expansion-rate ablation.
std::vector<SpectrumGroup> duplicate_streams(std::size_t band_count, std::size_t streams);

}  // namespace esmhc::hsi
