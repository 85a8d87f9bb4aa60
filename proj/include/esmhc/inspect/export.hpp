#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "esmhc/hsi/cube.hpp"
#include "esmhc/model/es_mhc.hpp"

namespace esmhc::inspect {

enum class Head { pre, post, res };
const char* head_name(Head head);

/// One H x W map of a single matrix element. For pre/post `dst` names the
/// stream and `src` is empty; for res the element is (row dst, column src),
/// the flow src -> dst.
struct HeatMap {
  Head head = Head::res;
  std::size_t layer = 0;
  std::string sublayer;  // "ssm" or "ffn"
  std::size_t epoch = 0;
  std::string dst;
  std::string src;
  std::vector<float> values;  // row-major H * W

  /// e.g. res_l0_ssm_e10_dst-NIR_src-SWIR2, pre_l1_ffn_e50_VIS
  std::string file_stem() const;
};

/// n maps for pre/post, n^2 (row-major over dst, src) for res.
std::vector<HeatMap> sublayer_heatmaps(const model::SublayerTrace& trace, Head head, std::size_t layer,
                                       const std::string& sublayer, std::size_t epoch,
                                       const std::vector<std::string>& streams);

/// Every head of every sublayer of every layer.
std::vector<HeatMap> collect_heatmaps(const model::ForwardTrace& trace, std::size_t epoch,
                                      const std::vector<std::string>& streams);

/// 8-bit binary PGM (P5), min-max scaled to 0..255; a constant map is
/// written as uniform 128.
void write_pgm(const std::filesystem::path& path, const std::vector<float>& values, std::size_t height,
               std::size_t width);
/// Label map as PGM, gray level label * 255 / K.
void write_label_pgm(const std::filesystem::path& path, const hsi::LabelMap& labels);

/// "row,col,value" with %.9g values, which read back bit-exactly.
void write_raw_csv(const std::filesystem::path& path, const std::vector<float>& values, std::size_t height,
                   std::size_t width);
std::vector<float> read_raw_csv(const std::filesystem::path& path, std::size_t height, std::size_t width);

/// Writes <stem>.pgm and <stem>.csv per map and appends one row per map to
/// dir/index.csv (stem,head,layer,sublayer,epoch,dst,src,min,max,constant).
void export_heatmaps(const std::vector<HeatMap>& maps, std::size_t height, std::size_t width,
                     const std::filesystem::path& dir);

struct IndexEntry {
  std::string stem;
  Head head = Head::res;
  std::size_t layer = 0;
  std::string sublayer;
  std::size_t epoch = 0;
  std::string dst;
  std::string src;
  double min = 0.0;
  double max = 0.0;
  bool constant = false;
};
std::vector<IndexEntry> read_index(const std::filesystem::path& dir);

/// Binary masks (255 = selected) of the n^2 top-k selections of one layer,
/// as topk_l<layer>_e<epoch>_dst-<i>_src-<j>.pgm and .csv (0/1 values).
void export_selection_masks(const std::vector<ssm::TokenSelection>& selections, std::size_t layer,
                            std::size_t epoch, const std::vector<std::string>& streams, std::size_t height,
                            std::size_t width, const std::filesystem::path& dir);

struct AssociationRow {
  std::string dst;
  std::string src;
  std::size_t winner = 0;  // 1..K
  double winner_mean = 0.0;
  std::vector<double> class_means;  // NaN for classes without pixels
};

/// Per map, the mean over each class's labeled pixels; winner is the largest
/// mean, ties to the lower class. DataError when no class has pixels.
std::vector<AssociationRow> class_association(const std::vector<HeatMap>& maps, const hsi::LabelMap& labels);
void write_association_csv(const std::vector<AssociationRow>& rows, std::size_t classes,
                           const std::filesystem::path& path);

struct AsymmetryRow {
  std::string a;
  std::string b;
  double mean_abs_diff = 0.0;  // mean |map(a -> b) - map(b -> a)|
  double correlation = 0.0;    // Pearson; NaN when either map is constant
};

/// One row per unordered stream pair, over the res maps of one sublayer.
/// DimensionError unless n >= 2 and all n^2 maps are present.
std::vector<AsymmetryRow> asymmetry_report(const std::vector<HeatMap>& res_maps);
void write_asymmetry_csv(const std::vector<AsymmetryRow>& rows, const std::filesystem::path& path);

}  // namespace esmhc::inspect
