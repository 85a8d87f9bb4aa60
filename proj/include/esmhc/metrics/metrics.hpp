#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "esmhc/hsi/cube.hpp"

namespace esmhc::metrics {

/// K x K counts, rows = ground truth, columns = prediction (both 0-based).
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::uint64_t> counts;

  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * classes + pred]; }
  std::uint64_t total() const;
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t col_sum(std::size_t pred) const;
};

/// Tally over masked pixels. Masked pixels must be labeled in `truth`;
/// a prediction of 0 or above K there is a DataError.
ConfusionMatrix confusion(const hsi::LabelMap& pred, const hsi::LabelMap& truth,
                          const std::vector<std::uint8_t>& mask);

struct Scores {
  double overall = 0.0;
  double average = 0.0;  // over classes with nonzero support
  double kappa = 0.0;
  std::vector<double> per_class;  // NaN where support is 0
  std::vector<std::uint64_t> support;
};

/// OA, AA and Cohen's kappa. DataError when the matrix is empty.
Scores scores(const ConfusionMatrix& cm);

/// "class,name,support,accuracy" rows then OA, AA and Kappa rows (fractions).
void write_metrics_csv(const Scores& s, const std::vector<std::string>& class_names,
                       const std::filesystem::path& path);

/// Per-class accuracy table in percent with an OA / AA / Kappa footer.
std::string format_metrics_table(const Scores& s, const std::vector<std::string>& class_names);

}  // namespace esmhc::metrics
