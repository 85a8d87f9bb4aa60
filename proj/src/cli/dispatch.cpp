#include "esmhc/cli/dispatch.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "esmhc/cli/run_config.hpp"
#include "esmhc/errors.hpp"
#include "esmhc/hsi/synthetic.hpp"
#include "esmhc/inspect/export.hpp"
#include "esmhc/metrics/metrics.hpp"
#include "esmhc/nn/params.hpp"

namespace esmhc::cli {

namespace {

namespace fs = std::filesystem;

struct RunFlags {
  std::string config, cube, labels, out;
  std::uint64_t seed = 0;
  std::size_t epochs = 0, expansion = 0, hidden = 0, layers = 0;
  double topk_frac = 0.0;
  std::map<std::string, CLI::Option*> opts;

  void add_to(CLI::App& app) {
    opts["config"] = app.add_option("--config", config, "JSON run configuration");
    opts["cube"] = app.add_option("--cube", cube, "Cube container");
    opts["labels"] = app.add_option("--labels", labels, "Label container");
    opts["out"] = app.add_option("--out", out, "Output directory");
    opts["seed"] = app.add_option("--seed", seed, "Seed for initialisation and split");
    opts["epochs"] = app.add_option("--epochs", epochs, "Training epochs");
    opts["expansion"] = app.add_option("--expansion", expansion, "Residual stream count n");
    opts["topk"] = app.add_option("--topk-frac", topk_frac, "Fraction of tokens per cluster scan");
    opts["hidden"] = app.add_option("--hidden", hidden, "Hidden width D");
    opts["layers"] = app.add_option("--layers", layers, "Number of mHC layers");
  }
  bool given(const char* name) const { return opts.at(name)->count() > 0; }

  RunConfig resolve_config(const fs::path& fallback_config = {}) const {
    RunConfig c;
    if (given("config")) {
      c = load_run_config(config);
    } else if (!fallback_config.empty() && fs::exists(fallback_config)) {
      c = load_run_config(fallback_config);
    }
    if (given("cube")) c.cube = cube;
    if (given("labels")) c.labels = labels;
    if (given("out")) c.out = out;
    if (given("seed")) c.model.seed = seed;
    if (given("epochs")) c.model.epochs = epochs;
    if (given("hidden")) c.model.hidden = hidden;
    if (given("layers")) c.model.layers = layers;
    if (given("topk")) c.model.topk_fraction = topk_frac;
    if (given("expansion")) {
      if (c.model.expansion != expansion && c.stream_mode == "spectrum") c.bands.clear();
      c.model.expansion = expansion;
      c.expansion_given = true;
    }
    resolve(c);
    return c;
  }
};

struct Inputs {
  hsi::HsiCube cube;
  hsi::LabelMap labels;
};

Inputs load_inputs(const RunConfig& c) {
  if (c.cube.empty()) throw ConfigError("no cube given (--cube or config 'cube')");
  if (c.labels.empty()) throw ConfigError("no labels given (--labels or config 'labels')");
  Inputs in{hsi::load_cube(c.cube), hsi::load_labels(c.labels)};
  if (in.cube.height != in.labels.height || in.cube.width != in.labels.width) {
    throw DataError("cube is " + std::to_string(in.cube.height) + "x" + std::to_string(in.cube.width) +
                    " but labels are " + std::to_string(in.labels.height) + "x" + std::to_string(in.labels.width));
  }
  if (c.zscore) in.cube = hsi::zscore_normalize(in.cube);
  return in;
}

std::vector<std::string> stream_names(const model::EsMhcModel& m) {
  std::vector<std::string> names;
  for (const auto& g : m.groups()) names.push_back(g.name);
  return names;
}

void export_trace(const model::EsMhcModel& m, const hsi::HsiCube& cube, std::size_t epoch, const fs::path& dir) {
  nn::NoGradGuard guard;
  model::ForwardTrace trace;
  m.forward(cube, &trace);
  const auto names = stream_names(m);
  inspect::export_heatmaps(inspect::collect_heatmaps(trace, epoch, names), m.height(), m.width(), dir);
  for (std::size_t l = 0; l < trace.layers.size(); ++l) {
    inspect::export_selection_masks(trace.layers[l].selections, l, epoch, names, m.height(), m.width(), dir);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<double> read_wavelengths(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<double> wl;
  std::string token;
  while (in >> token) {
    std::replace(token.begin(), token.end(), ',', ' ');
    std::istringstream parts(token);
    double v;
    while (parts >> v) wl.push_back(v);
    if (!parts.eof()) throw DataError(path.string() + ": bad wavelength '" + token + "'");
  }
  if (wl.empty()) throw DataError(path.string() + ": no wavelengths");
  return wl;
}

int cmd_synth(const hsi::SyntheticOptions& o, const std::string& dir, std::ostream& out) {
  auto [cube, labels] = hsi::gen_synthetic_cube(o);
  fs::create_directories(dir);
  hsi::save_cube(cube, fs::path(dir) / "cube.hsi");
  hsi::save_labels(labels, fs::path(dir) / "labels.lbl");
  out << "wrote " << (fs::path(dir) / "cube.hsi").string() << " (" << cube.height << "x" << cube.width << "x"
      << cube.bands << ") and " << (fs::path(dir) / "labels.lbl").string() << " (" << labels.classes
      << " classes)\n";
  return 0;
}

int cmd_split_bands(const RunFlags& flags, const std::string& wavelengths_file, std::ostream& out) {
  RunConfig c = flags.resolve_config();
  std::vector<double> wl;
  if (!wavelengths_file.empty()) {
    wl = read_wavelengths(wavelengths_file);
  } else if (!c.cube.empty()) {
    wl = hsi::load_cube(c.cube).wavelengths;
  } else {
    throw ConfigError("split-bands needs --cube or --wavelengths");
  }
  auto groups = c.stream_mode == "duplicate" ? hsi::duplicate_streams(wl.size(), c.model.expansion)
                                             : hsi::split_spectrum(wl, c.bands);
  out << "group,bands,min_nm,max_nm,first_band,last_band\n";
  for (const auto& g : groups) {
    out << g.name << ',' << g.bands.size() << ',' << g.min_nm << ',' << g.max_nm << ',';
    if (g.bands.empty()) {
      out << ",\n";
    } else {
      out << g.bands.front() << ',' << g.bands.back() << '\n';
    }
  }
  return 0;
}

int cmd_train(const RunFlags& flags, std::ostream& out) {
  RunConfig c = flags.resolve_config();
  Inputs in = load_inputs(c);
  const fs::path dir = c.out;
  fs::create_directories(dir);
  write_text(dir / "config.json", to_json(c));

  auto masks = hsi::stratified_split(in.labels, c.train_fraction, c.model.seed);
  model::EsMhcModel m(c.model, stream_groups(c, in.cube), in.cube.height, in.cube.width, in.labels.classes);
  std::set<std::size_t> cadence(c.export_epochs.begin(), c.export_epochs.end());
  cadence.insert(c.model.epochs);
  const fs::path maps = dir / "h_maps";
  auto log = model::train(m, in.cube, in.labels, masks, [&](const model::EsMhcModel& model, const model::EpochStats& s) {
    if (cadence.count(s.epoch)) export_trace(model, in.cube, s.epoch, maps);
  });
  nn::save_checkpoint(m.params(), dir / "model.ckpt");
  model::write_train_log(log, dir / "train_log.csv");
  out << "trained " << log.size() << " epochs on " << masks.train_count() << " pixels";
  if (!log.empty()) out << ", last loss " << log.back().loss << ", train OA " << log.back().train_oa;
  out << "; outputs in " << dir.string() << "\n";
  return 0;
}

struct Restored {
  RunConfig config;
  Inputs inputs;
  std::unique_ptr<model::EsMhcModel> model;
};

Restored restore(const RunFlags& flags, const fs::path& checkpoint) {
  Restored r;
  r.config = flags.resolve_config(checkpoint.parent_path() / "config.json");
  r.inputs = load_inputs(r.config);
  r.model = std::make_unique<model::EsMhcModel>(r.config.model, stream_groups(r.config, r.inputs.cube),
                                                r.inputs.cube.height, r.inputs.cube.width, r.inputs.labels.classes);
  nn::load_checkpoint(r.model->params(), checkpoint);
  return r;
}

int cmd_eval(const RunFlags& flags, const fs::path& checkpoint, std::ostream& out) {
  Restored r = restore(flags, checkpoint);
  const fs::path dir = flags.given("out") ? fs::path(flags.out) : checkpoint.parent_path();
  fs::create_directories(dir);
  auto masks = hsi::stratified_split(r.inputs.labels, r.config.train_fraction, r.config.model.seed);
  auto pred = model::predict(*r.model, r.inputs.cube);
  pred.class_names = r.inputs.labels.class_names;
  auto s = metrics::scores(metrics::confusion(pred, r.inputs.labels, masks.test));
  metrics::write_metrics_csv(s, r.inputs.labels.class_names, dir / "metrics.csv");
  const std::string table = metrics::format_metrics_table(s, r.inputs.labels.class_names);
  write_text(dir / "metrics.txt", table);
  hsi::save_labels(pred, dir / "prediction.lbl");
  inspect::write_label_pgm(dir / "prediction.pgm", pred);
  out << table;
  return 0;
}

int cmd_export_h(const RunFlags& flags, const fs::path& checkpoint, std::ostream& out) {
  Restored r = restore(flags, checkpoint);
  const fs::path dir = flags.given("out") ? fs::path(flags.out) : checkpoint.parent_path() / "h_export";
  export_trace(*r.model, r.inputs.cube, r.config.model.epochs, dir);
  out << "exported H maps of " << r.config.model.layers << " layers to " << dir.string() << "\n";
  return 0;
}

struct AssociateFlags {
  std::string maps, labels, out, sublayer = "ssm";
  std::size_t layer = 0, epoch = 0;
  CLI::Option* epoch_opt = nullptr;
};

int cmd_associate(const AssociateFlags& f, std::ostream& out) {
  const auto labels = hsi::load_labels(f.labels);
  auto index = inspect::read_index(f.maps);
  std::size_t epoch = f.epoch;
  if (!f.epoch_opt->count()) {
    for (const auto& e : index) epoch = std::max(epoch, e.epoch);
  }
  std::vector<inspect::HeatMap> maps;
  for (const auto& e : index) {
    if (e.head != inspect::Head::res || e.layer != f.layer || e.sublayer != f.sublayer || e.epoch != epoch) continue;
    inspect::HeatMap m;
    m.head = e.head;
    m.layer = e.layer;
    m.sublayer = e.sublayer;
    m.epoch = e.epoch;
    m.dst = e.dst;
    m.src = e.src;
    m.values = inspect::read_raw_csv(fs::path(f.maps) / (e.stem + ".csv"), labels.height, labels.width);
    maps.push_back(std::move(m));
  }
  if (maps.empty()) {
    throw DataError("no res maps for layer " + std::to_string(f.layer) + ", sublayer " + f.sublayer + ", epoch " +
                    std::to_string(epoch) + " in " + f.maps);
  }
  const fs::path dir = f.out.empty() ? fs::path(f.maps) : fs::path(f.out);
  fs::create_directories(dir);
  auto rows = inspect::class_association(maps, labels);
  inspect::write_association_csv(rows, labels.classes, dir / "association.csv");
  auto asym = inspect::asymmetry_report(maps);
  inspect::write_asymmetry_csv(asym, dir / "asymmetry.csv");
  out << "association: " << rows.size() << " maps, asymmetry: " << asym.size() << " pairs (layer " << f.layer << ", "
      << f.sublayer << ", epoch " << epoch << ") in " << dir.string() << "\n";
  return 0;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Manifold-constrained hyper-connection state-space classifier for hyperspectral images", "esmhc"};
  app.require_subcommand(1);

  hsi::SyntheticOptions synth;
  std::string synth_out;
  auto* s_synth = app.add_subcommand("synth", "Write a synthetic cube and label map");
  s_synth->add_option("--out", synth_out, "Output directory")->required();
  s_synth->add_option("--height", synth.height);
  s_synth->add_option("--width", synth.width);
  s_synth->add_option("--bands", synth.bands);
  s_synth->add_option("--classes", synth.classes);
  s_synth->add_option("--seed", synth.seed);
  s_synth->add_option("--noise", synth.noise_fraction, "Noise std as a fraction of the signature range");

  RunFlags split_flags;
  std::string wavelengths;
  auto* s_split = app.add_subcommand("split-bands", "Print the band to stream assignment");
  split_flags.add_to(*s_split);
  s_split->add_option("--wavelengths", wavelengths, "Text file of band centres in nm");

  RunFlags train_flags;
  auto* s_train = app.add_subcommand("train", "Train a model and export H maps");
  train_flags.add_to(*s_train);

  RunFlags eval_flags;
  std::string eval_ckpt;
  auto* s_eval = app.add_subcommand("eval", "Score a checkpoint on the held-out split");
  eval_flags.add_to(*s_eval);
  s_eval->add_option("--checkpoint", eval_ckpt)->required();

  RunFlags export_flags;
  std::string export_ckpt;
  auto* s_export = app.add_subcommand("export-h", "Export H matrices of a checkpoint as maps");
  export_flags.add_to(*s_export);
  s_export->add_option("--checkpoint", export_ckpt)->required();

  AssociateFlags assoc;
  auto* s_assoc = app.add_subcommand("associate", "Class association and asymmetry of exported res maps");
  s_assoc->add_option("--maps", assoc.maps, "Directory with index.csv")->required();
  s_assoc->add_option("--labels", assoc.labels)->required();
  s_assoc->add_option("--layer", assoc.layer);
  s_assoc->add_option("--sublayer", assoc.sublayer)->check(CLI::IsMember({"ssm", "ffn"}));
  assoc.epoch_opt = s_assoc->add_option("--epoch", assoc.epoch, "Defaults to the latest exported epoch");
  s_assoc->add_option("--out", assoc.out);

  if (args.empty()) {
    err << app.help();
    return 2;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "esmhc: usage error: " << one_line(e.what()) << " (see esmhc --help)\n";
    return 2;
  }

  if (*s_synth) return cmd_synth(synth, synth_out, out);
  if (*s_split) return cmd_split_bands(split_flags, wavelengths, out);
  if (*s_train) return cmd_train(train_flags, out);
  if (*s_eval) return cmd_eval(eval_flags, eval_ckpt, out);
  if (*s_export) return cmd_export_h(export_flags, export_ckpt, out);
  if (*s_assoc) return cmd_associate(assoc, out);
  return 2;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return run(args, out, err);
  } catch (const ConfigError& e) {
    err << "esmhc: config error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "esmhc: data error: " << one_line(e.what()) << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "esmhc: error: " << one_line(e.what()) << "\n";
    return 1;
  }
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace esmhc::cli
