#include "esmhc/metrics/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "esmhc/errors.hpp"

namespace esmhc::metrics {

namespace {

std::string class_name(const std::vector<std::string>& names, std::size_t c) {
  return c < names.size() && !names[c].empty() ? names[c] : "class" + std::to_string(c + 1);
}

}  // namespace

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (auto v : counts) s += v;
  return s;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < classes; ++p) s += at(truth, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t pred) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < classes; ++t) s += at(t, pred);
  return s;
}

ConfusionMatrix confusion(const hsi::LabelMap& pred, const hsi::LabelMap& truth,
                          const std::vector<std::uint8_t>& mask) {
  if (pred.height != truth.height || pred.width != truth.width || mask.size() != truth.pixels() ||
      pred.labels.size() != truth.labels.size()) {
    throw DimensionError("confusion: prediction, truth and mask disagree on geometry");
  }
  ConfusionMatrix cm;
  cm.classes = truth.classes;
  cm.counts.assign(cm.classes * cm.classes, 0);
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (!mask[t]) continue;
    const std::size_t y = truth.labels[t], p = pred.labels[t];
    if (y == 0 || y > cm.classes) throw DataError("confusion: masked pixel " + std::to_string(t) + " is unlabeled");
    if (p == 0 || p > cm.classes) {
      throw DataError("confusion: prediction " + std::to_string(p) + " at pixel " + std::to_string(t) +
                      " is not a class");
    }
    ++cm.counts[(y - 1) * cm.classes + (p - 1)];
  }
  return cm;
}

Scores scores(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw DataError("scores: empty confusion matrix");
  const std::size_t k = cm.classes;
  Scores s;
  s.per_class.assign(k, std::numeric_limits<double>::quiet_NaN());
  s.support.resize(k);
  std::uint64_t trace = 0;
  double expected = 0.0, acc_sum = 0.0;
  std::size_t supported = 0;
  const double n = static_cast<double>(total);
  for (std::size_t c = 0; c < k; ++c) {
    trace += cm.at(c, c);
    s.support[c] = cm.row_sum(c);
    expected += static_cast<double>(s.support[c]) * static_cast<double>(cm.col_sum(c)) / (n * n);
    if (s.support[c] > 0) {
      s.per_class[c] = static_cast<double>(cm.at(c, c)) / static_cast<double>(s.support[c]);
      acc_sum += s.per_class[c];
      ++supported;
    }
  }
  s.overall = static_cast<double>(trace) / n;
  s.average = acc_sum / static_cast<double>(supported);
  // p_e = 1 only when truth and prediction are the same single class.
  s.kappa = expected < 1.0 ? (s.overall - expected) / (1.0 - expected) : 1.0;
  return s;
}

void write_metrics_csv(const Scores& s, const std::vector<std::string>& class_names,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  char buf[64];
  auto num = [&](double v) {
    if (std::isnan(v)) return std::string();
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  out << "class,name,support,accuracy\n";
  for (std::size_t c = 0; c < s.per_class.size(); ++c) {
    out << c + 1 << ',' << class_name(class_names, c) << ',' << s.support[c] << ',' << num(s.per_class[c]) << '\n';
  }
  out << "OA,,," << num(s.overall) << '\n';
  out << "AA,,," << num(s.average) << '\n';
  out << "Kappa,,," << num(s.kappa) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

std::string format_metrics_table(const Scores& s, const std::vector<std::string>& class_names) {
  std::size_t width = 5;
  for (std::size_t c = 0; c < s.per_class.size(); ++c) width = std::max(width, class_name(class_names, c).size());
  std::string out;
  char line[256];
  const int w = static_cast<int>(width);
  std::snprintf(line, sizeof line, "%-5s  %-*s  %8s  %8s\n", "No.", w, "Class", "Samples", "Acc(%)");
  out += line;
  for (std::size_t c = 0; c < s.per_class.size(); ++c) {
    if (std::isnan(s.per_class[c])) {
      std::snprintf(line, sizeof line, "%-5zu  %-*s  %8llu  %8s\n", c + 1, w, class_name(class_names, c).c_str(),
                    static_cast<unsigned long long>(s.support[c]), "-");
    } else {
      std::snprintf(line, sizeof line, "%-5zu  %-*s  %8llu  %8.2f\n", c + 1, w, class_name(class_names, c).c_str(),
                    static_cast<unsigned long long>(s.support[c]), 100.0 * s.per_class[c]);
    }
    out += line;
  }
  const char* labels[3] = {"OA(%)", "AA(%)", "Kappa(%)"};
  const double values[3] = {s.overall, s.average, s.kappa};
  for (int i = 0; i < 3; ++i) {
    std::snprintf(line, sizeof line, "%-*s  %8.2f\n", w + 17, labels[i], 100.0 * values[i]);
    out += line;
  }
  return out;
}

}  // namespace esmhc::metrics
