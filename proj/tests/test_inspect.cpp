#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "esmhc/errors.hpp"
#include "esmhc/inspect/export.hpp"
#include "esmhc/mhc/hyper.hpp"
#include "oracles.hpp"

using namespace esmhc;
using namespace esmhc::inspect;
using nn::Tensor;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "esmhc_test_inspect" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<unsigned char> read_pgm(const std::filesystem::path& path, std::size_t& h, std::size_t& w) {
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  int maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  REQUIRE(magic == "P5");
  REQUIRE(maxval == 255);
  std::vector<unsigned char> px(h * w);
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  REQUIRE(in.gcount() == static_cast<std::streamsize>(px.size()));
  return px;
}

HeatMap res_map(std::string dst, std::string src, std::vector<float> v) {
  HeatMap m;
  m.head = Head::res;
  m.sublayer = "ssm";
  m.dst = std::move(dst);
  m.src = std::move(src);
  m.values = std::move(v);
  return m;
}

hsi::LabelMap labels_of(std::size_t h, std::size_t w, std::size_t k, std::vector<std::uint16_t> v) {
  hsi::LabelMap m;
  m.height = h;
  m.width = w;
  m.classes = k;
  m.labels = std::move(v);
  return m;
}

const std::vector<std::string> kStreams{"FULL", "VIS", "NIR"};

}  // namespace

TEST_CASE("file stems encode head, layer, sublayer, epoch and streams") {
  HeatMap m = res_map("NIR", "SWIR2", {});
  m.layer = 0;
  m.epoch = 10;
  CHECK(m.file_stem() == "res_l0_ssm_e10_dst-NIR_src-SWIR2");
  m.head = Head::pre;
  m.sublayer = "ffn";
  m.layer = 1;
  m.src.clear();
  CHECK(m.file_stem() == "pre_l1_ffn_e10_NIR");
}

TEST_CASE("pgm: min-max scaling and constant maps") {
  auto dir = fresh_dir("pgm");
  write_pgm(dir / "a.pgm", {0.0f, 0.5f, 1.0f, 2.0f, -2.0f, 0.0f}, 2, 3);
  std::size_t h = 0, w = 0;
  auto px = read_pgm(dir / "a.pgm", h, w);
  CHECK(h == 2);
  CHECK(w == 3);
  CHECK(px == std::vector<unsigned char>{128, 159, 191, 255, 0, 128});

  write_pgm(dir / "c.pgm", std::vector<float>(6, 0.3f), 2, 3);
  px = read_pgm(dir / "c.pgm", h, w);
  for (auto p : px) CHECK(p == 128);
  CHECK_THROWS_AS(write_pgm(dir / "x.pgm", {1.0f}, 2, 3), DimensionError);
}

TEST_CASE("raw CSV round trip is exact") {
  auto dir = fresh_dir("raw");
  nn::Rng rng(1);
  std::vector<float> v(7 * 5);
  for (auto& x : v) x = static_cast<float>(rng.normal() * std::pow(10.0, rng.below(12) - 6.0));
  v[3] = 0.0f;
  v[4] = -0.0f;
  v[5] = std::numeric_limits<float>::denorm_min();
  write_raw_csv(dir / "m.csv", v, 7, 5);
  auto back = read_raw_csv(dir / "m.csv", 7, 5);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::memcmp(&back[i], &v[i], sizeof(float)) == 0);
  CHECK_THROWS_AS(read_raw_csv(dir / "m.csv", 7, 6), DataError);
  CHECK_THROWS_AS(read_raw_csv(dir / "missing.csv", 7, 5), DataError);
}

TEST_CASE("heatmaps from a trace: identity res gives diagonal ones") {
  const std::size_t len = 6, n = 3;
  std::vector<float> res(len * n * n, 0.0f);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t i = 0; i < n; ++i) res[t * 9 + i * 4] = 1.0f;
  model::SublayerTrace trace{Tensor::full({len, n}, 0.5f), Tensor::full({len, n}, 1.0f),
                             Tensor::from_values({len, n, n}, res)};
  auto maps = sublayer_heatmaps(trace, Head::res, 0, "ssm", 1, kStreams);
  REQUIRE(maps.size() == 9);
  for (const auto& m : maps)
    for (float v : m.values) CHECK(v == (m.dst == m.src ? 1.0f : 0.0f));
  CHECK(maps[1].dst == "FULL");
  CHECK(maps[1].src == "VIS");
  CHECK(sublayer_heatmaps(trace, Head::pre, 0, "ssm", 1, kStreams).size() == 3);
  CHECK_THROWS_AS(sublayer_heatmaps(trace, Head::res, 0, "ssm", 1, {"A", "B"}), DimensionError);
}

TEST_CASE("exported res maps of a doubly stochastic field average to 1/n") {
  nn::Rng rng(2);
  const std::size_t h = 4, w = 5, n = 3;
  auto res = mhc::sinkhorn_knopp(oracle::random_tensor({h * w, n, n}, rng, 2.0), {50, 0.0f});
  model::SublayerTrace trace{Tensor(), Tensor(), res};
  auto maps = sublayer_heatmaps(trace, Head::res, 0, "ssm", 3, kStreams);
  auto dir = fresh_dir("mean");
  export_heatmaps(maps, h, w, dir);
  double total = 0;
  for (const auto& m : maps) {
    auto back = read_raw_csv(dir / (m.file_stem() + ".csv"), h, w);
    CHECK(back == m.values);
    for (float v : back) total += v;
  }
  CHECK(std::abs(total / (n * n * h * w) - 1.0 / n) < 1e-4);

  auto index = read_index(dir);
  REQUIRE(index.size() == 9);
  CHECK(index[5].stem == maps[5].file_stem());
  CHECK(index[5].dst == "VIS");
  CHECK(index[5].src == "NIR");
  CHECK(index[5].epoch == 3);
  CHECK(index[5].head == Head::res);
  CHECK_FALSE(index[5].constant);
}

TEST_CASE("index flags constant maps") {
  auto dir = fresh_dir("const");
  HeatMap m = res_map("A", "B", std::vector<float>(4, 0.25f));
  export_heatmaps({m}, 2, 2, dir);
  auto index = read_index(dir);
  REQUIRE(index.size() == 1);
  CHECK(index[0].constant);
  CHECK(index[0].min == index[0].max);
}

TEST_CASE("selection masks") {
  auto dir = fresh_dir("topk");
  std::vector<ssm::TokenSelection> sels(4);
  for (std::size_t e = 0; e < 4; ++e) sels[e] = {{e, e + 2}, {}, 2};
  export_selection_masks(sels, 1, 7, {"FULL", "VIS"}, 2, 3, dir);
  auto mask = read_raw_csv(dir / "topk_l1_e7_dst-VIS_src-FULL.csv", 2, 3);
  CHECK(mask == std::vector<float>{0, 0, 1, 0, 1, 0});
  CHECK(std::filesystem::exists(dir / "topk_l1_e7_dst-FULL_src-FULL.pgm"));
  CHECK_THROWS_AS(export_selection_masks(sels, 1, 7, kStreams, 2, 3, dir), DimensionError);
}

TEST_CASE("class association: indicator, constant and brute force") {
  auto labels = labels_of(2, 4, 3, {1, 1, 2, 3, 3, 0, 2, 1});
  std::vector<float> indicator(8);
  for (std::size_t p = 0; p < 8; ++p) indicator[p] = labels.labels[p] == 3 ? 1.0f : 0.0f;
  auto rows = class_association({res_map("A", "B", indicator), res_map("B", "A", std::vector<float>(8, 0.2f))}, labels);
  CHECK(rows[0].winner == 3);
  CHECK(rows[0].winner_mean == 1.0);
  CHECK(rows[1].winner == 1);

  nn::Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + rng.below(5);
    hsi::LabelMap lm = labels_of(5, 6, k, std::vector<std::uint16_t>(30));
    for (auto& l : lm.labels) l = static_cast<std::uint16_t>(rng.below(k + 1));
    lm.labels[0] = 1;
    std::vector<float> v(30);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    auto row = class_association({res_map("A", "B", v)}, lm)[0];
    std::size_t best = 0;
    double best_mean = 0;
    for (std::size_t c = 1; c <= k; ++c) {
      double s = 0;
      std::size_t cnt = 0;
      for (std::size_t p = 0; p < 30; ++p)
        if (lm.labels[p] == c) {
          s += v[p];
          ++cnt;
        }
      if (cnt == 0) {
        CHECK(std::isnan(row.class_means[c - 1]));
        continue;
      }
      CHECK(row.class_means[c - 1] == doctest::Approx(s / cnt).epsilon(1e-12));
      if (best == 0 || s / cnt > best_mean) {
        best = c;
        best_mean = s / cnt;
      }
    }
    CHECK(row.winner == best);

    std::vector<float> affine(v);
    for (auto& x : affine) x = 4.0f * x + 3.0f;
    CHECK(class_association({res_map("A", "B", affine)}, lm)[0].winner == best);
  }
  CHECK_THROWS_AS(class_association({res_map("A", "B", indicator)}, labels_of(2, 4, 2, std::vector<std::uint16_t>(8, 0))),
                  DataError);
}

TEST_CASE("association CSV layout") {
  auto dir = fresh_dir("assoc");
  std::vector<AssociationRow> rows{{"VIS", "FULL", 2, 0.5, {0.25, 0.5, std::nan("")}}};
  write_association_csv(rows, 3, dir / "a.csv");
  std::ifstream in(dir / "a.csv");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text == "dst,src,winner_class,winner_mean,class1,class2,class3\nVIS,FULL,2,0.5,0.25,0.5,\n");
}

TEST_CASE("asymmetry report") {
  auto sym = [](std::size_t n) {
    std::vector<HeatMap> maps;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        std::vector<float> v(6);
        for (std::size_t p = 0; p < 6; ++p) v[p] = static_cast<float>((i + j + 1) * (p + 1));
        maps.push_back(res_map("S" + std::to_string(i), "S" + std::to_string(j), v));
      }
    return maps;
  };
  auto rows = asymmetry_report(sym(3));
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK(r.mean_abs_diff == 0.0);
    CHECK(r.correlation == doctest::Approx(1.0));
  }
  CHECK(asymmetry_report(sym(5)).size() == 10);

  std::vector<HeatMap> two{res_map("A", "A", {1, 1}), res_map("A", "B", {0, 0}), res_map("B", "A", {1, 1}),
                           res_map("B", "B", {0, 0})};
  rows = asymmetry_report(two);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].a == "A");
  CHECK(rows[0].b == "B");
  CHECK(rows[0].mean_abs_diff == 1.0);
  CHECK(std::isnan(rows[0].correlation));

  CHECK_THROWS_AS(asymmetry_report({res_map("A", "A", {1})}), DimensionError);
  two.pop_back();
  CHECK_THROWS_AS(asymmetry_report(two), DimensionError);
}

TEST_CASE("label PGM") {
  auto dir = fresh_dir("labels");
  write_label_pgm(dir / "l.pgm", labels_of(1, 4, 4, {0, 1, 2, 4}));
  std::size_t h = 0, w = 0;
  auto px = read_pgm(dir / "l.pgm", h, w);
  CHECK(px == std::vector<unsigned char>{0, 63, 127, 255});
}
