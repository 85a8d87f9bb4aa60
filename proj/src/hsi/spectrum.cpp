#include "esmhc/hsi/spectrum.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "esmhc/errors.hpp"

namespace esmhc::hsi {

std::vector<BandRange> default_band_ranges() {
  return {{"VIS", 400.0, 700.0}, {"NIR", 700.0, 1000.0}, {"SWIR1", 1000.0, 1800.0}, {"SWIR2", 1800.0, 2500.0}};
}

std::vector<SpectrumGroup> split_spectrum(std::span<const double> wavelengths,
                                          std::span<const BandRange> ranges) {
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    const auto& r = ranges[i];
    if (r.name.empty() || r.name == kFullGroup) {
      throw ConfigError("spectrum range name must be non-empty and not FULL");
    }
    if (!(r.min_nm < r.max_nm)) throw ConfigError("spectrum range " + r.name + " is empty or inverted");
    if (i && ranges[i - 1].max_nm > r.min_nm) {
      throw ConfigError("spectrum ranges must be ascending and disjoint (" + ranges[i - 1].name + ", " + r.name + ")");
    }
  }

  std::vector<SpectrumGroup> groups;
  SpectrumGroup full{kFullGroup, 0.0, std::numeric_limits<double>::infinity(), {}};
  full.bands.resize(wavelengths.size());
  std::iota(full.bands.begin(), full.bands.end(), std::size_t{0});
  groups.push_back(std::move(full));
  for (const auto& r : ranges) groups.push_back({r.name, r.min_nm, r.max_nm, {}});
  if (ranges.empty()) return groups;

  for (std::size_t b = 0; b < wavelengths.size(); ++b) {
    const double wl = wavelengths[b];
    bool placed = false;
    for (std::size_t g = 0; g < ranges.size(); ++g) {
      if (wl >= ranges[g].min_nm && wl < ranges[g].max_nm) {
        groups[g + 1].bands.push_back(b);
        placed = true;
        break;
      }
    }
    if (!placed) {
      std::ostringstream os;
      os << "partition error: band " << b << " at " << wl << " nm lies outside every spectrum range";
      throw ConfigError(os.str());
    }
  }
  return groups;
}

std::vector<SpectrumGroup> split_spectrum(const HsiCube& cube, std::span<const BandRange> ranges) {
  return split_spectrum(std::span<const double>(cube.wavelengths), ranges);
}

std::vector<SpectrumGroup> duplicate_streams(std::size_t band_count, std::size_t streams) {
  if (streams == 0) throw ConfigError("expansion rate must be at least 1");
  std::vector<SpectrumGroup> groups;
  std::vector<std::size_t> all(band_count);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const double inf = std::numeric_limits<double>::infinity();
  groups.push_back({kFullGroup, 0.0, inf, all});
  for (std::size_t s = 1; s < streams; ++s) groups.push_back({"COPY" + std::to_string(s), 0.0, inf, all});
  return groups;
}

}  // namespace esmhc::hsi
