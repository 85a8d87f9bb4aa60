#include "esmhc/hsi/cube.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "esmhc/errors.hpp"
#include "esmhc/io/binary.hpp"

namespace esmhc::hsi {

namespace {

constexpr char kCubeMagic[] = "HSICUBE1";
constexpr char kLabelMagic[] = "HSILBL01";

void write_sidecar(const std::filesystem::path& path, const nlohmann::json& meta) {
  std::ofstream out(path.string() + ".json");
  if (!out) throw DataError("cannot write sidecar for " + path.string());
  out << meta.dump(2) << '\n';
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw DataError(std::string(what) + " does not fit the container's u32 field");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

void HsiCube::validate() const {
  if (wavelengths.size() != bands) {
    throw DataError("cube has " + std::to_string(bands) + " bands but " +
                    std::to_string(wavelengths.size()) + " wavelengths");
  }
  if (values.size() != height * width * bands) throw DataError("cube value count does not match H*W*C");
  for (std::size_t b = 0; b < bands; ++b) {
    if (!std::isfinite(wavelengths[b])) throw DataError("non-finite wavelength");
    if (b && !(wavelengths[b] > wavelengths[b - 1])) {
      throw DataError("wavelengths must be strictly increasing (band " + std::to_string(b) + ")");
    }
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw DataError("cube contains non-finite values");
  }
}

void LabelMap::validate() const {
  if (labels.size() != height * width) throw DataError("label count does not match H*W");
  for (auto l : labels) {
    if (l > classes) {
      throw DataError("label " + std::to_string(l) + " exceeds class count " + std::to_string(classes));
    }
  }
  if (!class_names.empty() && class_names.size() != classes) {
    throw DataError("class name count does not match class count");
  }
}

void save_cube(const HsiCube& cube, const std::filesystem::path& path) {
  cube.validate();
  io::ByteWriter w;
  w.magic(kCubeMagic);
  w.u32(checked_u32(cube.height, "height"));
  w.u32(checked_u32(cube.width, "width"));
  w.u32(checked_u32(cube.bands, "bands"));
  for (double wl : cube.wavelengths) w.f64(wl);
  for (float v : cube.values) w.f32(v);
  w.write_file(path);
  write_sidecar(path, {{"kind", "hsi_cube"},
                       {"height", cube.height},
                       {"width", cube.width},
                       {"bands", cube.bands},
                       {"wavelength_first_nm", cube.wavelengths.empty() ? 0.0 : cube.wavelengths.front()},
                       {"wavelength_last_nm", cube.wavelengths.empty() ? 0.0 : cube.wavelengths.back()}});
}

HsiCube load_cube(const std::filesystem::path& path) {
  auto r = io::ByteReader::from_file(path);
  r.expect_magic(kCubeMagic);
  HsiCube cube;
  cube.height = r.u32();
  cube.width = r.u32();
  cube.bands = r.u32();
  // 64-bit products of three u32 cannot overflow size_t except via the *4.
  const unsigned __int128 cells = static_cast<unsigned __int128>(cube.height) * cube.width * cube.bands;
  const unsigned __int128 need = cells * 4 + static_cast<unsigned __int128>(cube.bands) * 8;
  if (need > r.remaining()) {
    if (cube.bands * 8 > r.remaining()) r.fail("truncated file (wavelength list)");
    r.fail("dimension overflow: header claims " + std::to_string(cube.height) + "x" +
           std::to_string(cube.width) + "x" + std::to_string(cube.bands) +
           " but the payload is shorter (truncated file)");
  }
  if (need < r.remaining()) {
    r.fail("wavelength count mismatch: " + std::to_string(r.remaining() - static_cast<std::size_t>(need)) +
           " unexpected trailing bytes");
  }
  cube.wavelengths.resize(cube.bands);
  for (auto& wl : cube.wavelengths) wl = r.f64();
  cube.values.resize(static_cast<std::size_t>(cells));
  for (auto& v : cube.values) v = r.f32();
  try {
    cube.validate();
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return cube;
}

void save_labels(const LabelMap& labels, const std::filesystem::path& path) {
  labels.validate();
  io::ByteWriter w;
  w.magic(kLabelMagic);
  w.u32(checked_u32(labels.height, "height"));
  w.u32(checked_u32(labels.width, "width"));
  w.u32(checked_u32(labels.classes, "classes"));
  for (auto l : labels.labels) w.u16(l);
  w.write_file(path);
  write_sidecar(path, {{"kind", "hsi_labels"},
                       {"height", labels.height},
                       {"width", labels.width},
                       {"classes", labels.classes},
                       {"class_names", labels.class_names}});
}

LabelMap load_labels(const std::filesystem::path& path) {
  auto r = io::ByteReader::from_file(path);
  r.expect_magic(kLabelMagic);
  LabelMap labels;
  labels.height = r.u32();
  labels.width = r.u32();
  labels.classes = r.u32();
  const unsigned __int128 need = static_cast<unsigned __int128>(labels.height) * labels.width * 2;
  if (need > r.remaining()) r.fail("truncated file (dimension overflow or short payload)");
  if (need < r.remaining()) r.fail("unexpected trailing bytes");
  labels.labels.resize(labels.height * labels.width);
  for (auto& l : labels.labels) l = r.u16();
  // Class names live only in the human-facing sidecar.
  std::ifstream side(path.string() + ".json");
  if (side) {
    try {
      auto meta = nlohmann::json::parse(side);
      if (meta.contains("class_names")) labels.class_names = meta["class_names"].get<std::vector<std::string>>();
    } catch (const std::exception&) {
      labels.class_names.clear();
    }
    if (labels.class_names.size() != labels.classes) labels.class_names.clear();
  }
  try {
    labels.validate();
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return labels;
}

HsiCube zscore_normalize(const HsiCube& cube) {
  HsiCube out = cube;
  const std::size_t n = cube.pixels();
  if (n == 0) return out;
  for (std::size_t b = 0; b < cube.bands; ++b) {
    double mean = 0.0;
    for (std::size_t p = 0; p < n; ++p) mean += cube.values[p * cube.bands + b];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      double d = cube.values[p * cube.bands + b] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    for (std::size_t p = 0; p < n; ++p) {
      float& v = out.values[p * cube.bands + b];
      v = sd > 0.0 ? static_cast<float>((cube.values[p * cube.bands + b] - mean) / sd) : 0.0f;
    }
  }
  return out;
}

}  // namespace esmhc::hsi
