#include "esmhc/cli/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "esmhc/errors.hpp"
#include "json.hpp"

namespace esmhc::cli {

using nlohmann::json;

namespace {

template <class T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

std::size_t get_count(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

}  // namespace

std::vector<hsi::BandRange> preset_band_ranges(std::size_t expansion) {
  switch (expansion) {
    case 1: return {};
    case 2: return {{"VNIRSWIR", 400.0, 2500.0}};
    case 3: return {{"VNIR", 400.0, 1000.0}, {"SWIR", 1000.0, 2500.0}};
    case 4: return {{"VIS", 400.0, 700.0}, {"NIR", 700.0, 1000.0}, {"SWIR", 1000.0, 2500.0}};
    case 5: return hsi::default_band_ranges();
    default:
      throw ConfigError("no preset spectrum split for expansion " + std::to_string(expansion) +
                        "; give 'bands' or use stream_mode 'duplicate'");
  }
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  static const std::set<std::string> known{
      "hidden", "expansion", "layers", "sinkhorn_iters", "sinkhorn_tol", "topk_frac", "spectral_groups",
      "ssm_state", "ffn_multiplier", "seed", "learning_rate", "epochs", "gamma", "rms_eps", "cube", "labels",
      "out", "train_fraction", "stream_mode", "bands", "export_epochs", "zscore"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
  }

  RunConfig c;
  auto& m = c.model;
  if (j.contains("hidden")) m.hidden = get_count(j, "hidden");
  if (j.contains("expansion")) {
    m.expansion = get_count(j, "expansion");
    c.expansion_given = true;
  }
  if (j.contains("layers")) m.layers = get_count(j, "layers");
  if (j.contains("sinkhorn_iters")) m.sinkhorn_iters = get_count(j, "sinkhorn_iters");
  if (j.contains("sinkhorn_tol")) m.sinkhorn_tol = get<float>(j, "sinkhorn_tol");
  if (j.contains("topk_frac")) m.topk_fraction = get<double>(j, "topk_frac");
  if (j.contains("spectral_groups")) m.spectral_groups = get_count(j, "spectral_groups");
  if (j.contains("ssm_state")) m.ssm_state = get_count(j, "ssm_state");
  if (j.contains("ffn_multiplier")) m.ffn_multiplier = get_count(j, "ffn_multiplier");
  if (j.contains("seed")) m.seed = get_count(j, "seed");
  if (j.contains("learning_rate")) m.learning_rate = get<double>(j, "learning_rate");
  if (j.contains("epochs")) m.epochs = get_count(j, "epochs");
  if (j.contains("gamma")) m.gamma = get<double>(j, "gamma");
  if (j.contains("rms_eps")) m.rms_eps = get<float>(j, "rms_eps");
  if (j.contains("cube")) c.cube = get<std::string>(j, "cube");
  if (j.contains("labels")) c.labels = get<std::string>(j, "labels");
  if (j.contains("out")) c.out = get<std::string>(j, "out");
  if (j.contains("train_fraction")) c.train_fraction = get<double>(j, "train_fraction");
  if (j.contains("stream_mode")) c.stream_mode = get<std::string>(j, "stream_mode");
  if (j.contains("zscore")) c.zscore = get<bool>(j, "zscore");
  if (j.contains("export_epochs")) {
    const auto& e = j.at("export_epochs");
    if (!e.is_array()) throw ConfigError("config key 'export_epochs' must be an array");
    c.export_epochs.clear();
    for (const auto& v : e) {
      if (!v.is_number_integer() || v.get<long long>() < 1) throw ConfigError("export_epochs entries must be >= 1");
      c.export_epochs.push_back(v.get<std::size_t>());
    }
  }
  if (j.contains("bands")) {
    const auto& b = j.at("bands");
    if (!b.is_array()) throw ConfigError("config key 'bands' must be an array");
    for (const auto& r : b) {
      if (!r.is_object()) throw ConfigError("each band range must be an object");
      for (auto it = r.begin(); it != r.end(); ++it) {
        if (it.key() != "name" && it.key() != "min_nm" && it.key() != "max_nm") {
          throw ConfigError("unknown band range key '" + it.key() + "'");
        }
      }
      c.bands.push_back({get<std::string>(r, "name"), get<double>(r, "min_nm"), get<double>(r, "max_nm")});
    }
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

void resolve(RunConfig& c) {
  if (c.stream_mode == "spectrum") {
    if (c.bands.empty()) {
      c.bands = preset_band_ranges(c.model.expansion);
    } else if (c.expansion_given && c.model.expansion != c.bands.size() + 1) {
      throw ConfigError("expansion " + std::to_string(c.model.expansion) + " does not match " +
                        std::to_string(c.bands.size()) + " band ranges plus FULL");
    } else {
      c.model.expansion = c.bands.size() + 1;
    }
    std::set<std::string> names{hsi::kFullGroup};
    for (const auto& r : c.bands) {
      if (r.name.empty() || r.name.find_first_of(",_/\\ ") != std::string::npos) {
        throw ConfigError("band range name '" + r.name + "' must be non-empty without , _ / \\ or spaces");
      }
      if (!names.insert(r.name).second) throw ConfigError("duplicate band range name '" + r.name + "'");
    }
  } else if (c.stream_mode == "duplicate") {
    if (!c.bands.empty()) throw ConfigError("stream_mode 'duplicate' takes no band ranges");
  } else {
    throw ConfigError("stream_mode must be 'spectrum' or 'duplicate', got '" + c.stream_mode + "'");
  }
  c.expansion_given = true;
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) throw ConfigError("train_fraction must be in (0, 1)");
  c.model.validate();
}

std::string to_json(const RunConfig& c) {
  const auto& m = c.model;
  json j;
  j["hidden"] = m.hidden;
  j["expansion"] = m.expansion;
  j["layers"] = m.layers;
  j["sinkhorn_iters"] = m.sinkhorn_iters;
  j["sinkhorn_tol"] = m.sinkhorn_tol;
  j["topk_frac"] = m.topk_fraction;
  j["spectral_groups"] = m.spectral_groups;
  j["ssm_state"] = m.ssm_state;
  j["ffn_multiplier"] = m.ffn_multiplier;
  j["seed"] = m.seed;
  j["learning_rate"] = m.learning_rate;
  j["epochs"] = m.epochs;
  j["gamma"] = m.gamma;
  j["rms_eps"] = m.rms_eps;
  j["cube"] = c.cube;
  j["labels"] = c.labels;
  j["out"] = c.out;
  j["train_fraction"] = c.train_fraction;
  j["stream_mode"] = c.stream_mode;
  j["zscore"] = c.zscore;
  j["export_epochs"] = c.export_epochs;
  j["bands"] = json::array();
  for (const auto& r : c.bands) j["bands"].push_back({{"name", r.name}, {"min_nm", r.min_nm}, {"max_nm", r.max_nm}});
  return j.dump(2) + "\n";
}

std::vector<hsi::SpectrumGroup> stream_groups(const RunConfig& c, const hsi::HsiCube& cube) {
  if (c.stream_mode == "duplicate") return hsi::duplicate_streams(cube.bands, c.model.expansion);
  auto groups = hsi::split_spectrum(cube, c.bands);
  for (const auto& g : groups) {
    if (g.bands.empty()) throw ConfigError("spectrum group " + g.name + " contains no bands of this cube");
  }
  return groups;
}

}  // namespace esmhc::cli
