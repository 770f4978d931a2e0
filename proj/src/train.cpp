#include "radcls/train.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "radcls/config.hpp"
#include "radcls/errors.hpp"
#include "radcls/roi.hpp"
#include "radcls/rng.hpp"

namespace radcls {

void TrainConfig::validate() const {
  if (!(lr_max > 0.0)) throw ConfigError("lr_max must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0,1)");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must be in [0,1)");
  if (preprocess.pad_value < 0 || preprocess.pad_value > 255) throw ConfigError("imaging.pad_value must be in [0,255]");
  if (!(preprocess.clahe.clip_limit > 0.0)) throw ConfigError("imaging.clahe_clip must be positive");
  if (preprocess.clahe.tiles_x < 1 || preprocess.clahe.tiles_y < 1)
    throw ConfigError("imaging.clahe_tiles must be at least 1x1");
  schedule.validate();
  try {
    augment.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
}

GrayImage preprocess_image(const GrayImage& raw, const ImageRecord& rec, const PreprocessConfig& cfg, int size) {
  GrayImage img = raw;
  if (!cfg.skip_roi_and_clahe) {
    if (rec.roi_box) img = crop_roi(img, *rec.roi_box, cfg.crop_margin);
    const int tx = std::min(cfg.clahe.tiles_x, img.width);
    const int ty = std::min(cfg.clahe.tiles_y, img.height);
    img = clahe(img, cfg.clahe.clip_limit, tx, ty);
  }
  if (cfg.letterbox) return letterbox(img, size, size, static_cast<std::uint8_t>(cfg.pad_value)).image;
  return resize(img, size, size);
}

GrayImage load_and_preprocess(const Manifest& m, const ImageRecord& rec, const PreprocessConfig& cfg, int size) {
  const auto path = m.resolve(rec);
  GrayImage raw;
  try {
    raw = read_png_gray(path);
  } catch (const Error& e) {
    throw IoError("unreadable image " + path.string() + ": " + e.what());
  }
  return preprocess_image(raw, rec, cfg, size);
}

void write_normalized(const GrayImage& img, Tensor& batch, std::size_t n) {
  const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
  if (batch.H() * batch.W() != plane) throw ShapeError("input: image size does not match batch tensor");
  double* dst = batch.data() + n * plane;
  for (std::size_t i = 0; i < plane; ++i) dst[i] = (img.pixels[i] / 255.0 - 0.5) / 0.5;
}

Tensor images_to_batch(const std::vector<GrayImage>& imgs) {
  if (imgs.empty()) throw ShapeError("input: empty batch");
  Tensor batch({imgs.size(), 1, std::size_t(imgs[0].height), std::size_t(imgs[0].width)});
  for (std::size_t n = 0; n < imgs.size(); ++n) write_normalized(imgs[n], batch, n);
  return batch;
}

namespace {

Tensor infer_logits(const ModelParams& p, const ModelConfig& cfg, const std::vector<GrayImage>& inputs,
                    int batch_size) {
  Tensor logits({inputs.size(), std::size_t(kNumClasses)});
  for (std::size_t start = 0; start < inputs.size(); start += batch_size) {
    const std::size_t end = std::min(inputs.size(), start + batch_size);
    std::vector<GrayImage> chunk(inputs.begin() + start, inputs.begin() + end);
    const Tensor out = forward(p, cfg, images_to_batch(chunk));
    std::copy(out.storage().begin(), out.storage().end(), logits.data() + start * kNumClasses);
  }
  return logits;
}

// Loads and preprocesses records in parallel; rethrows the first failure in
// record order.
std::vector<GrayImage> preprocess_all(const Manifest& m, const std::vector<std::size_t>& idx,
                                      const PreprocessConfig& cfg, int size) {
  std::vector<GrayImage> out(idx.size());
  std::vector<std::string> errors(idx.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(idx.size()); ++i) {
    try {
      out[i] = load_and_preprocess(m, m.records[idx[i]], cfg, size);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw IoError(e);
  return out;
}

}  // namespace

std::vector<Prediction> predict(const ModelParams& p, const ModelConfig& cfg, const std::vector<ImageRecord>& recs,
                                const std::vector<GrayImage>& inputs, int batch_size) {
  const Tensor probs = softmax(infer_logits(p, cfg, inputs, batch_size));
  std::vector<Prediction> out(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i)
    out[i] = {recs[i].image_path, recs[i].subject_id, label_index(recs[i].label), probs[i * kNumClasses + 1]};
  return out;
}

TrainResult train_fold(const Manifest& m, const FoldAssignment& folds, int fold, const ModelConfig& model_cfg,
                       const TrainConfig& tc, const ModelParams* init) {
  tc.validate();
  if (fold < 0 || fold >= folds.k)
    throw ArgumentError("fold " + std::to_string(fold) + " is out of range; valid folds are 0.." +
                        std::to_string(folds.k - 1));
  ModelConfig cfg = model_cfg;
  cfg.dropout_p = tc.dropout_p;
  cfg.num_classes = kNumClasses;
  cfg.validate();

  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& subj = m.records[i].subject_id;
    if (!folds.fold_of_subject.count(subj))
      throw ValueError("subject " + subj + " has no fold assignment");
    (folds.in_test(subj, fold) ? test_idx : train_idx).push_back(i);
  }
  if (train_idx.empty() || test_idx.empty()) throw ArgumentError("fold " + std::to_string(fold) + " has an empty split");

  const std::vector<GrayImage> train_imgs = preprocess_all(m, train_idx, tc.preprocess, cfg.input_size);
  const std::vector<GrayImage> test_imgs = preprocess_all(m, test_idx, tc.preprocess, cfg.input_size);
  std::vector<ImageRecord> test_recs;
  std::vector<int> test_labels;
  for (std::size_t i : test_idx) {
    test_recs.push_back(m.records[i]);
    test_labels.push_back(label_index(m.records[i].label));
  }

  ModelParams params = init ? *init : init_params(cfg, tc.seed);
  const int n_train = static_cast<int>(train_idx.size());
  const int steps_per_epoch = (n_train + tc.batch_size - 1) / tc.batch_size;
  ScheduleConfig sched = tc.schedule;
  if (!sched.cycle_steps) sched.cycle_steps = 10 * steps_per_epoch;
  if (!sched.warmup_steps) sched.warmup_steps = std::min(steps_per_epoch, *sched.cycle_steps - 1);
  sched.validate();

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  SgdState opt;
  long step = 0;
  std::vector<std::size_t> order(n_train);
  for (int i = 0; i < n_train; ++i) order[i] = i;

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(tc.seed, {1, std::uint64_t(epoch)}));
    for (int i = 0; i < n_train; ++i) order[i] = i;
    shuffle_rng.shuffle(order.begin(), order.end());

    double loss_sum = 0.0;
    for (int b = 0; b < steps_per_epoch; ++b) {
      const int start = b * tc.batch_size;
      const int end = std::min(n_train, start + tc.batch_size);
      std::vector<GrayImage> batch_imgs(end - start);
      std::vector<int> labels(end - start);
#pragma omp parallel for schedule(static)
      for (int j = start; j < end; ++j) {
        const std::size_t local = order[j];
        const std::uint64_t rec_id = train_idx[local];
        batch_imgs[j - start] =
            augment(train_imgs[local], tc.augment, derive_seed(tc.seed, {2, rec_id, std::uint64_t(epoch)}));
      }
      for (int j = start; j < end; ++j) labels[j - start] = label_index(m.records[train_idx[order[j]]].label);

      ForwardTrace trace;
      ForwardOptions fo{true, derive_seed(tc.seed, {3, std::uint64_t(epoch), std::uint64_t(b)})};
      const Tensor logits = forward(params, cfg, images_to_batch(batch_imgs), fo, &trace);
      const LossResult loss = cross_entropy_with_grad(logits, labels);
      if (!std::isfinite(loss.loss)) throw TrainingError("non-finite training loss at step " + std::to_string(step));
      const BackwardResult grads = backward(params, cfg, trace, loss.dlogits);
      sgd_step_inplace(params.params, grads.grads, lr_at(step, sched, tc.lr_max), tc.momentum, opt);
      update_running_stats(params, cfg, trace);
      loss_sum += loss.loss * (end - start);
      ++step;
    }

    const Tensor val_logits = infer_logits(params, cfg, test_imgs, tc.batch_size);
    const double val_loss = cross_entropy(val_logits, test_labels);
    if (!std::isfinite(val_loss)) throw TrainingError("non-finite validation loss after step " + std::to_string(step));
    int correct = 0;
    for (std::size_t i = 0; i < test_labels.size(); ++i) {
      const int pred = val_logits[i * 2 + 1] > val_logits[i * 2] ? 1 : 0;
      correct += pred == test_labels[i];
    }
    result.log.push_back({epoch, loss_sum / n_train, val_loss, static_cast<double>(correct) / test_labels.size()});
    if (val_loss < best_val) {
      best_val = val_loss;
      result.best = params;
      result.best_epoch = epoch;
    }
  }

  result.test_predictions = predict(result.best, cfg, test_recs, test_imgs, tc.batch_size);
  return result;
}

std::string format_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,train_loss,val_loss,val_accuracy\n";
  for (const auto& e : log)
    out += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," + format_double(e.val_loss) + "," +
           format_double(e.val_accuracy) + "\n";
  return out;
}

std::string format_predictions_csv(const std::vector<Prediction>& preds) {
  std::string out = "image_path,subject_id,label,score\n";
  for (const auto& p : preds)
    out += p.image_path + "," + p.subject_id + "," + std::to_string(p.label) + "," + format_double(p.score) + "\n";
  return out;
}

std::vector<Prediction> read_predictions_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions file " + path.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "image_path,subject_id,label,score")
    throw FormatError("predictions header must be 'image_path,subject_id,label,score' in " + path.string());
  std::vector<Prediction> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[4];
    for (auto& x : f) std::getline(ss, x, ',');
    Prediction p;
    p.image_path = f[0];
    p.subject_id = f[1];
    if (f[2] == "1" || f[2] == "frct")
      p.label = 1;
    else if (f[2] == "0" || f[2] == "no_tear")
      p.label = 0;
    else
      throw ValueError(path.string() + " line " + std::to_string(line_no) + ": label must be 0 or 1");
    try {
      p.score = std::stod(f[3]);
    } catch (const std::exception&) {
      throw ValueError(path.string() + " line " + std::to_string(line_no) + ": score is not a number");
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace radcls
