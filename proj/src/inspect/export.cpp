#include "esmhc/inspect/export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "esmhc/errors.hpp"

namespace esmhc::inspect {

namespace {

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw DataError("write failed: " + path.string());
}

std::string fmt(double v) {
  if (std::isnan(v)) return {};
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Head parse_head(const std::string& s) {
  if (s == "pre") return Head::pre;
  if (s == "post") return Head::post;
  if (s == "res") return Head::res;
  throw DataError("unknown head '" + s + "' in index");
}

std::size_t parse_size(const std::string& s, const std::string& what) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0') throw DataError("bad " + what + " '" + s + "'");
  return static_cast<std::size_t>(v);
}

void check_geometry(const std::vector<float>& values, std::size_t height, std::size_t width) {
  if (values.size() != height * width) {
    throw DimensionError("map has " + std::to_string(values.size()) + " values for " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
}

}  // namespace

const char* head_name(Head head) {
  switch (head) {
    case Head::pre: return "pre";
    case Head::post: return "post";
    case Head::res: return "res";
  }
  return "?";
}

std::string HeatMap::file_stem() const {
  std::string stem = std::string(head_name(head)) + "_l" + std::to_string(layer) + "_" + sublayer + "_e" +
                     std::to_string(epoch) + "_";
  if (head == Head::res) return stem + "dst-" + dst + "_src-" + src;
  return stem + dst;
}

std::vector<HeatMap> sublayer_heatmaps(const model::SublayerTrace& trace, Head head, std::size_t layer,
                                       const std::string& sublayer, std::size_t epoch,
                                       const std::vector<std::string>& streams) {
  const std::size_t n = streams.size();
  const nn::Tensor& t = head == Head::pre ? trace.pre : head == Head::post ? trace.post : trace.res;
  const std::size_t per_token = head == Head::res ? n * n : n;
  if (!t.defined() || t.numel() % per_token != 0 || t.dim(1) != n) {
    throw DimensionError("sublayer_heatmaps: trace does not match " + std::to_string(n) + " streams");
  }
  const std::size_t length = t.numel() / per_token;
  auto v = t.values();
  std::vector<HeatMap> maps;
  for (std::size_t e = 0; e < per_token; ++e) {
    HeatMap m;
    m.head = head;
    m.layer = layer;
    m.sublayer = sublayer;
    m.epoch = epoch;
    m.dst = streams[head == Head::res ? e / n : e];
    if (head == Head::res) m.src = streams[e % n];
    m.values.resize(length);
    for (std::size_t p = 0; p < length; ++p) m.values[p] = v[p * per_token + e];
    maps.push_back(std::move(m));
  }
  return maps;
}

std::vector<HeatMap> collect_heatmaps(const model::ForwardTrace& trace, std::size_t epoch,
                                      const std::vector<std::string>& streams) {
  std::vector<HeatMap> all;
  for (std::size_t l = 0; l < trace.layers.size(); ++l) {
    for (const auto& [name, sub] : {std::pair<const char*, const model::SublayerTrace*>{"ssm", &trace.layers[l].ssm},
                                    {"ffn", &trace.layers[l].ffn}}) {
      for (Head h : {Head::pre, Head::post, Head::res}) {
        auto maps = sublayer_heatmaps(*sub, h, l, name, epoch, streams);
        std::move(maps.begin(), maps.end(), std::back_inserter(all));
      }
    }
  }
  return all;
}

void write_pgm(const std::filesystem::path& path, const std::vector<float>& values, std::size_t height,
               std::size_t width) {
  check_geometry(values, height, width);
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = values.empty() ? 0.0 : *lo_it, hi = values.empty() ? 0.0 : *hi_it;
  std::vector<unsigned char> pixels(values.size(), 128);
  if (hi > lo) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      pixels[i] = static_cast<unsigned char>(std::lround((values[i] - lo) / (hi - lo) * 255.0));
    }
  }
  auto out = open_out(path, std::ios::binary);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  finish(out, path);
}

void write_label_pgm(const std::filesystem::path& path, const hsi::LabelMap& labels) {
  const std::size_t k = std::max<std::size_t>(labels.classes, 1);
  std::vector<unsigned char> pixels(labels.labels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = static_cast<unsigned char>(std::min<std::size_t>(labels.labels[i], k) * 255 / k);
  }
  auto out = open_out(path, std::ios::binary);
  out << "P5\n" << labels.width << ' ' << labels.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  finish(out, path);
}

void write_raw_csv(const std::filesystem::path& path, const std::vector<float>& values, std::size_t height,
                   std::size_t width) {
  check_geometry(values, height, width);
  auto out = open_out(path);
  out << "row,col,value\n";
  char line[64];
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      std::snprintf(line, sizeof line, "%zu,%zu,%.9g\n", r, c, static_cast<double>(values[r * width + c]));
      out << line;
    }
  }
  finish(out, path);
}

std::vector<float> read_raw_csv(const std::filesystem::path& path, std::size_t height, std::size_t width) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "row,col,value") throw DataError(path.string() + ": missing header");
  std::vector<float> values(height * width);
  std::vector<bool> seen(height * width, false);
  std::size_t count = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != 3) throw DataError(path.string() + ": malformed line '" + line + "'");
    const std::size_t r = parse_size(cells[0], "row"), c = parse_size(cells[1], "col");
    if (r >= height || c >= width) throw DataError(path.string() + ": pixel outside the image");
    char* end = nullptr;
    const float v = std::strtof(cells[2].c_str(), &end);
    if (cells[2].empty() || *end != '\0') throw DataError(path.string() + ": bad value '" + cells[2] + "'");
    if (seen[r * width + c]) throw DataError(path.string() + ": duplicate pixel");
    seen[r * width + c] = true;
    values[r * width + c] = v;
    ++count;
  }
  if (count != height * width) throw DataError(path.string() + ": expected " + std::to_string(height * width) + " pixels");
  return values;
}

void export_heatmaps(const std::vector<HeatMap>& maps, std::size_t height, std::size_t width,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto index_path = dir / "index.csv";
  const bool fresh = !std::filesystem::exists(index_path);
  auto index = open_out(index_path, std::ios::app);
  if (fresh) index << "stem,head,layer,sublayer,epoch,dst,src,min,max,constant\n";
  for (const auto& m : maps) {
    const std::string stem = m.file_stem();
    write_pgm(dir / (stem + ".pgm"), m.values, height, width);
    write_raw_csv(dir / (stem + ".csv"), m.values, height, width);
    const auto [lo, hi] = std::minmax_element(m.values.begin(), m.values.end());
    index << stem << ',' << head_name(m.head) << ',' << m.layer << ',' << m.sublayer << ',' << m.epoch << ','
          << m.dst << ',' << m.src << ',' << fmt(*lo) << ',' << fmt(*hi) << ',' << (*lo == *hi ? 1 : 0) << '\n';
  }
  finish(index, index_path);
}

std::vector<IndexEntry> read_index(const std::filesystem::path& dir) {
  const auto path = dir / "index.csv";
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "stem,head,layer,sublayer,epoch,dst,src,min,max,constant") {
    throw DataError(path.string() + ": unexpected header");
  }
  std::vector<IndexEntry> entries;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto c = split(line);
    if (c.size() != 10) throw DataError(path.string() + ": malformed line '" + line + "'");
    IndexEntry e;
    e.stem = c[0];
    e.head = parse_head(c[1]);
    e.layer = parse_size(c[2], "layer");
    e.sublayer = c[3];
    e.epoch = parse_size(c[4], "epoch");
    e.dst = c[5];
    e.src = c[6];
    e.min = std::strtod(c[7].c_str(), nullptr);
    e.max = std::strtod(c[8].c_str(), nullptr);
    e.constant = c[9] == "1";
    entries.push_back(std::move(e));
  }
  return entries;
}

void export_selection_masks(const std::vector<ssm::TokenSelection>& selections, std::size_t layer,
                            std::size_t epoch, const std::vector<std::string>& streams, std::size_t height,
                            std::size_t width, const std::filesystem::path& dir) {
  const std::size_t n = streams.size();
  if (selections.size() != n * n) {
    throw DimensionError("export_selection_masks: " + std::to_string(selections.size()) + " selections for " +
                         std::to_string(n) + " streams");
  }
  std::filesystem::create_directories(dir);
  for (std::size_t e = 0; e < n * n; ++e) {
    std::vector<float> mask(height * width, 0.0f);
    for (std::size_t t : selections[e].indices) {
      if (t >= mask.size()) throw DimensionError("export_selection_masks: index outside the image");
      mask[t] = 1.0f;
    }
    const std::string stem = "topk_l" + std::to_string(layer) + "_e" + std::to_string(epoch) + "_dst-" +
                             streams[e / n] + "_src-" + streams[e % n];
    std::vector<unsigned char> pixels(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) pixels[i] = mask[i] > 0.0f ? 255 : 0;
    auto out = open_out(dir / (stem + ".pgm"), std::ios::binary);
    out << "P5\n" << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    finish(out, dir / (stem + ".pgm"));
    write_raw_csv(dir / (stem + ".csv"), mask, height, width);
  }
}

std::vector<AssociationRow> class_association(const std::vector<HeatMap>& maps, const hsi::LabelMap& labels) {
  const std::size_t k = labels.classes;
  std::vector<std::size_t> counts(k, 0);
  for (auto l : labels.labels)
    if (l > 0 && l <= k) ++counts[l - 1];
  if (std::all_of(counts.begin(), counts.end(), [](std::size_t c) { return c == 0; })) {
    throw DataError("class_association: label map has no labeled pixels");
  }
  std::vector<AssociationRow> rows;
  for (const auto& m : maps) {
    check_geometry(m.values, labels.height, labels.width);
    std::vector<double> sums(k, 0.0);
    for (std::size_t p = 0; p < m.values.size(); ++p) {
      const auto l = labels.labels[p];
      if (l > 0 && l <= k) sums[l - 1] += m.values[p];
    }
    AssociationRow row;
    row.dst = m.dst;
    row.src = m.src;
    row.class_means.assign(k, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      row.class_means[c] = sums[c] / static_cast<double>(counts[c]);
      if (row.winner == 0 || row.class_means[c] > row.winner_mean) {
        row.winner = c + 1;
        row.winner_mean = row.class_means[c];
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_association_csv(const std::vector<AssociationRow>& rows, std::size_t classes,
                           const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "dst,src,winner_class,winner_mean";
  for (std::size_t c = 1; c <= classes; ++c) out << ",class" << c;
  out << '\n';
  for (const auto& r : rows) {
    out << r.dst << ',' << r.src << ',' << r.winner << ',' << fmt(r.winner_mean);
    for (double m : r.class_means) out << ',' << fmt(m);
    out << '\n';
  }
  finish(out, path);
}

std::vector<AsymmetryRow> asymmetry_report(const std::vector<HeatMap>& res_maps) {
  std::vector<std::string> streams;
  for (const auto& m : res_maps) {
    if (m.head != Head::res) throw DimensionError("asymmetry_report: expects res maps only");
    if (std::find(streams.begin(), streams.end(), m.dst) == streams.end()) streams.push_back(m.dst);
  }
  const std::size_t n = streams.size();
  if (n < 2 || res_maps.size() != n * n) {
    throw DimensionError("asymmetry_report: need all n^2 res maps with n >= 2, got " +
                         std::to_string(res_maps.size()));
  }
  auto find = [&](const std::string& dst, const std::string& src) -> const HeatMap& {
    for (const auto& m : res_maps)
      if (m.dst == dst && m.src == src) return m;
    throw DimensionError("asymmetry_report: missing map " + src + "->" + dst);
  };
  std::vector<AsymmetryRow> rows;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const auto& ab = find(streams[b], streams[a]).values;  // flow a -> b
      const auto& ba = find(streams[a], streams[b]).values;  // flow b -> a
      if (ab.size() != ba.size() || ab.empty()) throw DimensionError("asymmetry_report: map sizes differ");
      const double len = static_cast<double>(ab.size());
      double diff = 0, mx = 0, my = 0;
      for (std::size_t p = 0; p < ab.size(); ++p) {
        diff += std::abs(static_cast<double>(ab[p]) - ba[p]);
        mx += ab[p];
        my += ba[p];
      }
      mx /= len;
      my /= len;
      double sxy = 0, sxx = 0, syy = 0;
      for (std::size_t p = 0; p < ab.size(); ++p) {
        const double dx = ab[p] - mx, dy = ba[p] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
      }
      AsymmetryRow row;
      row.a = streams[a];
      row.b = streams[b];
      row.mean_abs_diff = diff / len;
      row.correlation = sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : std::numeric_limits<double>::quiet_NaN();
      rows.push_back(row);
    }
  }
  return rows;
}

void write_asymmetry_csv(const std::vector<AsymmetryRow>& rows, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "stream_a,stream_b,mean_abs_diff,correlation\n";
  for (const auto& r : rows) out << r.a << ',' << r.b << ',' << fmt(r.mean_abs_diff) << ',' << fmt(r.correlation) << '\n';
  finish(out, path);
}

}  // namespace esmhc::inspect
