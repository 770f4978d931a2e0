#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "radcls/dataset.hpp"
#include "radcls/imaging.hpp"
#include "radcls/model.hpp"
#include "radcls/optim.hpp"

namespace radcls {

struct PreprocessConfig {
  ClaheParams clahe;
  double crop_margin = 0.0;
  bool letterbox = false;  // aspect-preserving resize instead of a plain stretch
  int pad_value = 0;
  // Images were already cropped and equalized (e.g. by `prepare`); only resize.
  bool skip_roi_and_clahe = false;
};

struct TrainConfig {
  double lr_max = 0.01;
  int batch_size = 8;
  int epochs = 50;
  double momentum = 0.9;
  double dropout_p = 0.2;
  ScheduleConfig schedule;
  AugmentSpec augment;
  PreprocessConfig preprocess;
  std::uint64_t seed = 0;

  void validate() const;
};

// crop_roi -> clahe -> resize (or letterbox) to `size`.
GrayImage preprocess_image(const GrayImage& raw, const ImageRecord& rec, const PreprocessConfig& cfg, int size);
GrayImage load_and_preprocess(const Manifest& m, const ImageRecord& rec, const PreprocessConfig& cfg, int size);

// (pixel / 255 - 0.5) / 0.5 into slot n of an (N, 1, S, S) batch.
void write_normalized(const GrayImage& img, Tensor& batch, std::size_t n);
Tensor images_to_batch(const std::vector<GrayImage>& imgs);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct Prediction {
  std::string image_path;
  std::string subject_id;
  int label = 0;
  double score = 0.0;  // softmax probability of frct
};

struct TrainResult {
  ModelParams best;
  int best_epoch = 0;
  std::vector<EpochLog> log;
  std::vector<Prediction> test_predictions;  // best checkpoint on the held-out fold
};

// Trains on every subject outside fold `fold` and validates on the fold
// after each epoch, keeping the lowest-validation-loss parameters.
// Deterministic for a fixed seed: per-sample augmentation seeds depend only
// on (seed, record index, epoch) and kernels are thread-count invariant.
TrainResult train_fold(const Manifest& m, const FoldAssignment& folds, int fold, const ModelConfig& model_cfg,
                       const TrainConfig& train_cfg, const ModelParams* init = nullptr);

// Inference-mode softmax scores for the given records.
std::vector<Prediction> predict(const ModelParams& p, const ModelConfig& cfg, const std::vector<ImageRecord>& recs,
                                const std::vector<GrayImage>& inputs, int batch_size = 8);

std::string format_log_csv(const std::vector<EpochLog>& log);
std::string format_predictions_csv(const std::vector<Prediction>& preds);
std::vector<Prediction> read_predictions_csv(const std::filesystem::path& path);

}  // namespace radcls
