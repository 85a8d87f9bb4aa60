#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "esmhc/hsi/cube.hpp"
#include "esmhc/hsi/spectrum.hpp"
#include "esmhc/model/es_mhc.hpp"

namespace esmhc::cli {

/// Everything a run needs. Loaded from JSON (unknown keys rejected), then
/// command-line flags override individual fields.
struct RunConfig {
  model::ModelConfig model;
  std::string cube;
  std::string labels;
  std::string out = "run";
  double train_fraction = 0.1;
  /// "spectrum": FULL plus wavelength groups; "duplicate": FULL copied n times.
  std::string stream_mode = "spectrum";
  /// Wavelength groups after FULL. Empty means the preset for `expansion`.
  std::vector<hsi::BandRange> bands;
  std::vector<std::size_t> export_epochs{1, 10, 50};
  bool zscore = true;

  /// True when expansion came from the file or a flag rather than the default.
  bool expansion_given = false;
};

/// Ranges used when the config names none: n = 1..5 streams.
std::vector<hsi::BandRange> preset_band_ranges(std::size_t expansion);

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& json_text);

/// Fills bands / expansion consistently and validates everything.
/// ConfigError on contradictions or out-of-range values.
void resolve(RunConfig& config);

/// Fully resolved config as pretty JSON; load_run_config reads it back.
std::string to_json(const RunConfig& config);

/// Stream groups for a cube under this config.
std::vector<hsi::SpectrumGroup> stream_groups(const RunConfig& config, const hsi::HsiCube& cube);

}  // namespace esmhc::cli
