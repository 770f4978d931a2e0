#include "radcls/cli.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iostream>
#include <regex>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "radcls/checkpoint.hpp"
#include "radcls/config.hpp"
#include "radcls/dataset.hpp"
#include "radcls/errors.hpp"
#include "radcls/eval.hpp"
#include "radcls/explain.hpp"
#include "radcls/roi.hpp"
#include "radcls/synth.hpp"
#include "radcls/train.hpp"

namespace radcls::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

fs::path or_default(const std::string& given, const fs::path& fallback) {
  return given.empty() ? fallback : fs::path(given);
}

std::pair<int, int> parse_wxh(const std::string& s) {
  static const std::regex re(R"((\d+)x(\d+))");
  std::smatch m;
  if (!std::regex_match(s, m, re)) throw ArgumentError("expected WxH, got '" + s + "'");
  return {std::stoi(m[1]), std::stoi(m[2])};
}

BBox parse_box(const std::string& s) {
  std::stringstream ss(s);
  std::string f;
  std::vector<double> v;
  while (std::getline(ss, f, ',')) v.push_back(std::stod(f));
  if (v.size() != 4) throw ArgumentError("--box expects x,y,w,h");
  return {v[0], v[1], v[2], v[3]};
}

void apply_thread_cap() {
  if (const char* env = std::getenv("RADCLS_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(std::min(n, omp_get_num_procs()));
  }
}

struct ImagingFlags {
  double clahe_clip = 2.0;
  std::string clahe_tiles = "8x8";
  int pad_value = 0;
};

void add_imaging_flags(CLI::App* cmd, ImagingFlags& f) {
  cmd->add_option("--clahe-clip", f.clahe_clip, "CLAHE clip limit (inf disables clipping)")->capture_default_str();
  cmd->add_option("--clahe-tiles", f.clahe_tiles, "CLAHE tile grid WxH")->capture_default_str();
  cmd->add_option("--pad-value", f.pad_value, "Letterbox padding intensity")->capture_default_str();
}

// ---- synth ----
struct SynthArgs {
  PhantomSpec spec;
  std::string out;
};

int do_synth(const SynthArgs& a, std::ostream& out) {
  const Manifest m = generate(a.spec, a.out);
  out << "wrote " << m.records.size() << " images for " << a.spec.n_subjects << " subjects to " << a.out << "\n";
  return kOk;
}

// ---- prepare ----
struct PrepareArgs {
  std::string manifest;
  std::string out;
  ImagingFlags imaging;
  int size = 512;
  double margin = 0.0;
  bool letterbox = false;
};

int do_prepare(const PrepareArgs& a, std::ostream& out) {
  const Manifest m = parse_manifest(a.manifest);
  PreprocessConfig pc;
  pc.clahe.clip_limit = a.imaging.clahe_clip;
  std::tie(pc.clahe.tiles_x, pc.clahe.tiles_y) = parse_wxh(a.imaging.clahe_tiles);
  pc.crop_margin = a.margin;
  pc.letterbox = a.letterbox;
  pc.pad_value = a.imaging.pad_value;
  if (pc.pad_value < 0 || pc.pad_value > 255) throw ArgumentError("--pad-value must be in [0,255]");
  Manifest outm;
  outm.base_dir = a.out;
  for (const auto& r : m.records) {
    const GrayImage img = load_and_preprocess(m, r, pc, a.size);
    ImageRecord nr = r;
    fs::path rel(r.image_path);
    if (rel.is_absolute()) rel = rel.filename();
    rel.replace_extension(".png");
    nr.image_path = rel.generic_string();
    nr.roi_box.reset();  // the crop is the whole prepared image
    fs::create_directories((fs::path(a.out) / rel).parent_path());
    write_png(fs::path(a.out) / rel, img);
    outm.records.push_back(nr);
  }
  write_manifest(fs::path(a.out) / "manifest.csv", outm);
  out << "prepared " << outm.records.size() << " images into " << a.out << "\n";
  return kOk;
}

// ---- split ----
struct SplitArgs {
  std::string dir = ".";
  std::string manifest;
  std::string out;
  int k = 5;
  std::uint64_t seed = 0;
};

int do_split(const SplitArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path mpath = or_default(a.manifest, fs::path(a.dir) / "manifest.csv");
  const Manifest m = parse_manifest(mpath);
  const auto violations = validate_dataset(m, {.check_files = false});
  if (!violations.empty()) {
    err << violations_to_text(violations);
    return kDataError;
  }
  const FoldAssignment f = split_folds(m, a.k, a.seed);
  const fs::path opath = or_default(a.out, fs::path(a.dir) / "folds.json");
  write_folds(opath, f);
  out << "split " << f.fold_of_subject.size() << " subjects into " << f.k << " folds:";
  for (int i = 0; i < f.k; ++i) out << " " << f.test_subjects(i).size();
  out << "\nwrote " << opath.string() << "\n";
  return kOk;
}

// ---- train ----
struct TrainArgs {
  std::string dir = ".";
  std::string manifest;
  std::string folds;
  std::string runs;
  std::string config;
  std::string preset = "resnet50";
  std::string init_weights;
  int fold = -1;
  bool all_folds = false;
  bool parallel_folds = false;
  bool skip_preprocess = false;
  int epochs = 50;
  double lr = 0.01;
  int batch = 8;
  double dropout = 0.2;
  double momentum = 0.9;
  int image_size = 512;
  std::uint64_t seed = 0;
  ImagingFlags imaging;
};

struct TrainFlagsSeen {
  CLI::Option* epochs;
  CLI::Option* lr;
  CLI::Option* batch;
  CLI::Option* dropout;
  CLI::Option* momentum;
  CLI::Option* image_size;
  CLI::Option* seed;
  CLI::Option* clahe_clip;
  CLI::Option* clahe_tiles;
  CLI::Option* pad_value;
  CLI::Option* skip_preprocess;
};

constexpr double kTinyPresetLr = 0.03;

RunConfig build_run_config(const TrainArgs& a, const TrainFlagsSeen& seen) {
  RunConfig rc;
  if (a.preset == "tiny")
    rc.model = ModelConfig::tiny();
  else if (a.preset == "resnet50")
    rc.model = ModelConfig::resnet50();
  else
    throw ArgumentError("--preset must be resnet50 or tiny");
  rc.train.lr_max = a.lr;
  rc.train.batch_size = a.batch;
  rc.train.epochs = a.epochs;
  rc.train.momentum = a.momentum;
  rc.train.dropout_p = a.dropout;
  rc.train.seed = a.seed;
  rc.train.preprocess.clahe.clip_limit = a.imaging.clahe_clip;
  std::tie(rc.train.preprocess.clahe.tiles_x, rc.train.preprocess.clahe.tiles_y) = parse_wxh(a.imaging.clahe_tiles);
  rc.train.preprocess.pad_value = a.imaging.pad_value;
  rc.train.preprocess.skip_roi_and_clahe = a.skip_preprocess;
  if (seen.image_size->count() || a.preset != "tiny") rc.model.input_size = a.image_size;
  // The small backbone trains on few steps per fold and wants a hotter peak lr.
  if (a.preset == "tiny" && !seen.lr->count()) rc.train.lr_max = kTinyPresetLr;
  if (!a.config.empty()) apply_config_file(rc, a.config);
  // Explicit flags win over the config file.
  auto flag = [&](CLI::Option* o, const std::string& key, const std::string& value) {
    if (o->count()) apply_config_entry(rc, key, value);
  };
  flag(seen.epochs, "epochs", std::to_string(a.epochs));
  flag(seen.lr, "lr_max", format_double(a.lr));
  flag(seen.batch, "batch_size", std::to_string(a.batch));
  flag(seen.dropout, "dropout_p", format_double(a.dropout));
  flag(seen.momentum, "momentum", format_double(a.momentum));
  flag(seen.image_size, "model.input_size", std::to_string(a.image_size));
  flag(seen.seed, "seed", std::to_string(a.seed));
  flag(seen.clahe_clip, "imaging.clahe_clip", format_double(a.imaging.clahe_clip));
  flag(seen.clahe_tiles, "imaging.clahe_tiles", a.imaging.clahe_tiles);
  flag(seen.pad_value, "imaging.pad_value", std::to_string(a.imaging.pad_value));
  if (seen.skip_preprocess->count()) rc.train.preprocess.skip_roi_and_clahe = true;
  rc.model.dropout_p = rc.train.dropout_p;
  rc.model.num_classes = kNumClasses;
  rc.model.validate();
  rc.train.validate();
  return rc;
}

int do_train(const TrainArgs& a, const TrainFlagsSeen& seen, std::ostream& out) {
  if (a.all_folds == (a.fold >= 0)) throw ArgumentError("train: pass exactly one of --fold i or --all-folds");
  const RunConfig rc = build_run_config(a, seen);
  const fs::path mpath = or_default(a.manifest, fs::path(a.dir) / "manifest.csv");
  const fs::path fpath = or_default(a.folds, fs::path(a.dir) / "folds.json");
  const fs::path runs = or_default(a.runs, fs::path(a.dir) / "runs");
  const FoldAssignment folds = read_folds(fpath);
  if (a.fold >= folds.k)
    throw ArgumentError("train: --fold " + std::to_string(a.fold) + " is out of range; valid folds are 0.." +
                        std::to_string(folds.k - 1));
  const Manifest m = parse_manifest(mpath);

  std::optional<ModelParams> init;
  if (!a.init_weights.empty()) {
    init = init_params(rc.model, rc.train.seed);
    const ImportReport rep = import_weights(*init, a.init_weights);
    out << "imported " << rep.loaded.size() << " arrays from " << a.init_weights << " (" << rep.skipped.size()
        << " skipped)\n";
  }

  std::vector<int> which;
  if (a.all_folds)
    for (int i = 0; i < folds.k; ++i) which.push_back(i);
  else
    which.push_back(a.fold);

  auto run_one = [&](int i) {
    const TrainResult r = train_fold(m, folds, i, rc.model, rc.train, init ? &*init : nullptr);
    const fs::path fdir = runs / ("fold" + std::to_string(i));
    fs::create_directories(fdir);
    save_checkpoint(fdir / "checkpoint.bin", {rc.model, r.best});
    write_text(fdir / "log.csv", format_log_csv(r.log));
    write_text(fdir / "predictions.csv", format_predictions_csv(r.test_predictions));
    write_text(fdir / "config.txt", format_config(rc));
    return r;
  };

  std::vector<TrainResult> results;
  if (a.parallel_folds && which.size() > 1) {
    std::vector<std::future<TrainResult>> jobs;
    for (int i : which) jobs.push_back(std::async(std::launch::async, run_one, i));
    for (auto& j : jobs) results.push_back(j.get());
  } else {
    for (int i : which) results.push_back(run_one(i));
  }
  for (std::size_t j = 0; j < which.size(); ++j) {
    const auto& last = results[j].log.back();
    out << "fold " << which[j] << ": best epoch " << results[j].best_epoch << ", final train loss "
        << last.train_loss << ", val loss " << last.val_loss << ", val accuracy " << last.val_accuracy << "\n";
  }
  return kOk;
}

// ---- eval ----
struct EvalArgs {
  std::string dir = ".";
  std::string runs;
  std::string out;
  std::string roc;
  double threshold = 0.5;
};

int do_eval(const EvalArgs& a, std::ostream& out) {
  const fs::path runs = or_default(a.runs, fs::path(a.dir) / "runs");
  if (!fs::is_directory(runs)) throw IoError("no runs directory at " + runs.string());
  std::vector<FoldPredictions> folds;
  static const std::regex fold_re(R"(fold(\d+))");
  for (const auto& entry : fs::directory_iterator(runs)) {
    std::smatch mm;
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || !std::regex_match(name, mm, fold_re)) continue;
    const fs::path preds = entry.path() / "predictions.csv";
    if (!fs::exists(preds)) continue;
    folds.push_back({std::stoi(mm[1]), read_predictions_csv(preds)});
  }
  if (folds.empty()) throw IoError("no fold predictions found under " + runs.string());
  std::sort(folds.begin(), folds.end(), [](const auto& x, const auto& y) { return x.fold < y.fold; });
  const EvalReport rep = pool_folds(folds, a.threshold);
  const fs::path jpath = or_default(a.out, fs::path(a.dir) / "report.json");
  const fs::path spath = or_default(a.roc, fs::path(a.dir) / "roc.svg");
  write_text(jpath, report_to_json(rep));
  write_text(spath, roc_to_svg(rep.roc, rep.pooled.auroc));
  const auto& pm = rep.pooled.metrics;
  out << "pooled over " << folds.size() << " folds (" << rep.pooled.cm.total() << " images): accuracy "
      << pm.accuracy.value_or(NAN) << ", auroc " << rep.pooled.auroc.value_or(NAN) << ", ppv "
      << pm.ppv.value_or(NAN) << ", npv " << pm.npv.value_or(NAN) << "\n";
  out << "wrote " << jpath.string() << " and " << spath.string() << "\n";
  return kOk;
}

// ---- explain ----
struct ExplainArgs {
  std::string checkpoint;
  std::string image;
  std::string box;
  std::string layer;
  std::string out = "gradcam.png";
  int target = 1;
  double alpha = 0.5;
  double margin = 0.0;
  bool skip_preprocess = false;
  ImagingFlags imaging;
};

int do_explain(const ExplainArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  PreprocessConfig pc;
  pc.clahe.clip_limit = a.imaging.clahe_clip;
  std::tie(pc.clahe.tiles_x, pc.clahe.tiles_y) = parse_wxh(a.imaging.clahe_tiles);
  pc.crop_margin = a.margin;
  pc.skip_roi_and_clahe = a.skip_preprocess;
  ImageRecord rec;
  rec.image_path = a.image;
  if (!a.box.empty()) rec.roi_box = parse_box(a.box);
  const GrayImage img = preprocess_image(read_png_gray(a.image), rec, pc, ck.config.input_size);
  const std::string layer = a.layer.empty() ? default_cam_layer(ck.config) : a.layer;
  const Heatmap hm = grad_cam(ck.params, ck.config, img, a.target, layer);
  const fs::path opath(a.out);
  if (opath.has_parent_path()) fs::create_directories(opath.parent_path());
  write_png(opath, overlay(hm, img, a.alpha));
  nlohmann::ordered_json side;
  side["target_class"] = a.target;
  side["layer_path"] = layer;
  side["max_activation"] = hm.max_activation;
  fs::path sidecar = opath;
  sidecar.replace_extension(".json");
  write_text(sidecar, side.dump(2) + "\n");
  out << "wrote " << opath.string() << " and " << sidecar.string() << "\n";
  return kOk;
}

// ---- det-eval ----
struct DetEvalArgs {
  std::string pred;
  std::string gt;
  std::string out;
};

int do_det_eval(const DetEvalArgs& a, std::ostream& out) {
  const Manifest m = parse_manifest(a.gt);
  GroundTruth gts;
  for (const auto& r : m.records) {
    auto& boxes = gts[r.image_path];
    if (r.roi_box) boxes.push_back(*r.roi_box);
  }
  const DetMetrics dm = map_range(read_detections(a.pred), gts);
  const std::string js = det_metrics_to_json(dm);
  if (!a.out.empty()) write_text(a.out, js);
  out << js;
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  apply_thread_cap();
  CLI::App app{"Radiograph rotator-cuff-tear classification pipeline", "radcls"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a phantom dataset (images + manifest)");
  c_synth->add_option("--subjects", synth.spec.n_subjects, "Number of subjects")->capture_default_str();
  c_synth->add_option("--seed", synth.spec.seed, "Random seed")->capture_default_str();
  c_synth->add_option("--image-size", synth.spec.image_size, "Square image size in pixels")->capture_default_str();
  c_synth->add_option("--signal", synth.spec.signal_strength, "Defect contrast in (0,1]")->capture_default_str();
  c_synth->add_option("--noise", synth.spec.noise_sigma, "Gaussian noise sigma (intensity levels)")
      ->capture_default_str();
  c_synth->add_option("--out", synth.out, "Output directory")->required();

  PrepareArgs prep;
  auto* c_prep = app.add_subcommand("prepare", "Crop ROIs, apply CLAHE and resize");
  c_prep->add_option("--manifest", prep.manifest, "Input manifest CSV")->required();
  c_prep->add_option("--out", prep.out, "Output directory")->required();
  c_prep->add_option("--size", prep.size, "Output square size")->capture_default_str();
  c_prep->add_option("--margin", prep.margin, "ROI margin fraction")->capture_default_str();
  c_prep->add_flag("--letterbox", prep.letterbox, "Aspect-preserving resize with padding");
  add_imaging_flags(c_prep, prep.imaging);

  SplitArgs split;
  auto* c_split = app.add_subcommand("split", "Subject-grouped stratified k-fold split");
  c_split->add_option("--dir", split.dir, "Working directory")->capture_default_str();
  c_split->add_option("--manifest", split.manifest, "Manifest CSV (default <dir>/manifest.csv)");
  c_split->add_option("--out", split.out, "Fold JSON (default <dir>/folds.json)");
  c_split->add_option("--k", split.k, "Number of folds")->capture_default_str();
  c_split->add_option("--seed", split.seed, "Random seed")->capture_default_str();

  TrainArgs train;
  TrainFlagsSeen seen{};
  auto* c_train = app.add_subcommand("train", "Train one fold or all folds");
  c_train->add_option("--dir", train.dir, "Working directory")->capture_default_str();
  c_train->add_option("--manifest", train.manifest, "Manifest CSV (default <dir>/manifest.csv)");
  c_train->add_option("--folds", train.folds, "Fold JSON (default <dir>/folds.json)");
  c_train->add_option("--runs", train.runs, "Output directory (default <dir>/runs)");
  c_train->add_option("--config", train.config, "key=value config file");
  c_train->add_option("--preset", train.preset, "Backbone preset: resnet50 or tiny")->capture_default_str();
  c_train->add_option("--fold", train.fold, "Fold index to train");
  c_train->add_flag("--all-folds", train.all_folds, "Train every fold sequentially");
  c_train->add_flag("--parallel-folds", train.parallel_folds,
                    "Train folds concurrently (same results, only wall-clock time changes)");
  seen.epochs = c_train->add_option("--epochs", train.epochs, "Epochs")->capture_default_str();
  seen.lr = c_train->add_option("--lr", train.lr, "Peak learning rate (tiny preset default 0.03)")->capture_default_str();
  seen.batch = c_train->add_option("--batch", train.batch, "Batch size")->capture_default_str();
  seen.dropout = c_train->add_option("--dropout", train.dropout, "Dropout probability")->capture_default_str();
  seen.momentum = c_train->add_option("--momentum", train.momentum, "SGD momentum")->capture_default_str();
  seen.image_size = c_train->add_option("--image-size", train.image_size, "Network input size")->capture_default_str();
  seen.seed = c_train->add_option("--seed", train.seed, "Random seed")->capture_default_str();
  seen.skip_preprocess =
      c_train->add_flag("--skip-preprocess", train.skip_preprocess, "Images are already cropped and equalized");
  c_train->add_option("--init-weights", train.init_weights, "Checkpoint-format weight file to start from");
  add_imaging_flags(c_train, train.imaging);
  seen.clahe_clip = c_train->get_option("--clahe-clip");
  seen.clahe_tiles = c_train->get_option("--clahe-tiles");
  seen.pad_value = c_train->get_option("--pad-value");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Pool per-fold predictions into a report");
  c_eval->add_option("--dir", ev.dir, "Working directory")->capture_default_str();
  c_eval->add_option("--runs", ev.runs, "Runs directory (default <dir>/runs)");
  c_eval->add_option("--out", ev.out, "Report JSON (default <dir>/report.json)");
  c_eval->add_option("--roc", ev.roc, "ROC SVG (default <dir>/roc.svg)");
  c_eval->add_option("--threshold", ev.threshold, "Decision threshold")->capture_default_str();

  ExplainArgs ex;
  auto* c_ex = app.add_subcommand("explain", "Grad-CAM overlay for one image");
  c_ex->add_option("--checkpoint", ex.checkpoint, "Checkpoint file")->required();
  c_ex->add_option("--image", ex.image, "Input PNG")->required();
  c_ex->add_option("--box", ex.box, "ROI box x,y,w,h to crop first");
  c_ex->add_option("--target", ex.target, "Target class (1 = frct)")->capture_default_str();
  c_ex->add_option("--layer", ex.layer, "Feature layer path (default: last residual block)");
  c_ex->add_option("--alpha", ex.alpha, "Overlay opacity")->capture_default_str();
  c_ex->add_option("--margin", ex.margin, "ROI margin fraction")->capture_default_str();
  c_ex->add_flag("--skip-preprocess", ex.skip_preprocess, "Image is already cropped and equalized");
  c_ex->add_option("--out", ex.out, "Output PNG")->capture_default_str();
  add_imaging_flags(c_ex, ex.imaging);

  DetEvalArgs de;
  auto* c_de = app.add_subcommand("det-eval", "Score predicted ROI boxes against manifest boxes");
  c_de->add_option("--pred", de.pred, "Predicted boxes CSV image_path,x,y,w,h,confidence")->required();
  c_de->add_option("--gt", de.gt, "Manifest CSV with ground-truth boxes")->required();
  c_de->add_option("--out", de.out, "Also write the JSON here");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (c_synth->parsed()) return do_synth(synth, out);
    if (c_prep->parsed()) return do_prepare(prep, out);
    if (c_split->parsed()) return do_split(split, out, err);
    if (c_train->parsed()) return do_train(train, seen, out);
    if (c_eval->parsed()) return do_eval(ev, out);
    if (c_ex->parsed()) return do_explain(ex, out);
    if (c_de->parsed()) return do_det_eval(de, out);
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  err << app.help();
  return kUsage;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace radcls::cli
