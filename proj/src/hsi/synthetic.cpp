#include "esmhc/hsi/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "esmhc/errors.hpp"
#include "esmhc/nn/rng.hpp"

namespace esmhc::hsi {

namespace {

constexpr double kLowNm = 400.0;
constexpr double kHighNm = 2500.0;
constexpr int kBumps = 3;

struct Bump {
  double amplitude;
  double centre;
  double width;
};

std::vector<double> band_centres(std::size_t bands) {
  std::vector<double> wl(bands);
  const double step = (kHighNm - kLowNm) / static_cast<double>(bands);
  for (std::size_t b = 0; b < bands; ++b) wl[b] = kLowNm + (static_cast<double>(b) + 0.5) * step;
  return wl;
}

// Signature shapes come from their own stream so that the noise level does
// not change the scene layout or the spectra.
std::vector<std::vector<Bump>> class_bumps(const SyntheticOptions& o) {
  nn::Rng rng(o.seed ^ 0x5eed5eed5eedULL);
  std::vector<std::vector<Bump>> bumps(o.classes);
  for (auto& cls : bumps) {
    for (int m = 0; m < kBumps; ++m) {
      cls.push_back({rng.uniform(-0.35, 0.35), rng.uniform(kLowNm, kHighNm), rng.uniform(150.0, 500.0)});
    }
  }
  return bumps;
}

std::vector<double> evaluate(const std::vector<Bump>& bumps, const std::vector<double>& wl) {
  std::vector<double> sig(wl.size(), 0.5);
  for (std::size_t b = 0; b < wl.size(); ++b) {
    for (const auto& k : bumps) {
      const double z = (wl[b] - k.centre) / k.width;
      sig[b] += k.amplitude * std::exp(-0.5 * z * z);
    }
  }
  return sig;
}

void check(const SyntheticOptions& o) {
  if (o.classes < 2) throw ConfigError("synthetic cube needs at least 2 classes");
  if (o.bands == 0) throw ConfigError("synthetic cube needs at least 1 band");
  if (o.height * o.width < o.classes) throw ConfigError("synthetic cube has fewer pixels than classes");
  if (o.classes > 65535) throw ConfigError("too many classes for the label container");
  if (!(o.noise_fraction >= 0.0)) throw ConfigError("noise fraction must be non-negative");
}

}  // namespace

std::vector<double> synthetic_signature(const SyntheticOptions& options, std::size_t cls) {
  check(options);
  if (cls < 1 || cls > options.classes) throw ConfigError("class index out of range");
  return evaluate(class_bumps(options)[cls - 1], band_centres(options.bands));
}

std::pair<HsiCube, LabelMap> gen_synthetic_cube(const SyntheticOptions& o) {
  check(o);
  const auto wl = band_centres(o.bands);
  const auto bumps = class_bumps(o);
  std::vector<std::vector<double>> signatures;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& b : bumps) {
    signatures.push_back(evaluate(b, wl));
    for (double v : signatures.back()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const double sigma = o.noise_fraction * (hi - lo);

  nn::Rng rng(o.seed);
  const std::size_t n = o.height * o.width;
  std::vector<std::size_t> centres;
  while (centres.size() < o.classes) {
    std::size_t p = rng.below(n);
    if (std::find(centres.begin(), centres.end(), p) == centres.end()) centres.push_back(p);
  }

  LabelMap labels;
  labels.height = o.height;
  labels.width = o.width;
  labels.classes = o.classes;
  labels.labels.resize(n);
  for (std::size_t c = 1; c <= o.classes; ++c) labels.class_names.push_back("class" + std::to_string(c));

  HsiCube cube;
  cube.height = o.height;
  cube.width = o.width;
  cube.bands = o.bands;
  cube.wavelengths = wl;
  cube.values.resize(n * o.bands);
  for (std::size_t p = 0; p < n; ++p) {
    const double r = static_cast<double>(p / o.width);
    const double c = static_cast<double>(p % o.width);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < o.classes; ++k) {
      const double dr = r - static_cast<double>(centres[k] / o.width);
      const double dc = c - static_cast<double>(centres[k] % o.width);
      const double d = dr * dr + dc * dc;
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    labels.labels[p] = static_cast<std::uint16_t>(best + 1);
    for (std::size_t b = 0; b < o.bands; ++b) {
      const double noise = sigma > 0.0 ? sigma * rng.normal() : 0.0;
      cube.values[p * o.bands + b] = static_cast<float>(signatures[best][b] + noise);
    }
  }
  return {std::move(cube), std::move(labels)};
}

}  // namespace esmhc::hsi
