#pragma once

#include <optional>
#include <string>
#include <vector>

#include "radcls/train.hpp"

namespace radcls {

// Positive class is frct (label 1).
struct ConfusionMatrix {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;

  long total() const { return tp + fp + fn + tn; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

// Predicted positive iff score >= threshold.
ConfusionMatrix confusion(const std::vector<double>& scores, const std::vector<int>& labels, double threshold = 0.5);

// Absent when the denominator is zero.
struct BasicMetrics {
  std::optional<double> accuracy;
  std::optional<double> ppv;
  std::optional<double> npv;
};
BasicMetrics basic_metrics(const ConfusionMatrix& cm);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocResult {
  double auc = 0.0;
  std::vector<RocPoint> points;  // from (0,0) to (1,1)
};

// Threshold sweep over distinct scores with trapezoidal area; tied scores
// form a diagonal segment, which is exactly half credit for tied pairs.
// Throws UndefinedMetricError unless both classes are present.
RocResult auroc(const std::vector<double>& scores, const std::vector<int>& labels);

struct FoldPredictions {
  int fold = 0;
  std::vector<Prediction> predictions;
};

struct FoldMetrics {
  int fold = -1;  // -1 for pooled
  ConfusionMatrix cm;
  BasicMetrics metrics;
  std::optional<double> auroc;
};

struct EvalReport {
  std::vector<FoldMetrics> per_fold;
  FoldMetrics pooled;
  std::optional<double> mean_fold_auroc;
  std::vector<RocPoint> roc;
  // Subject-level majority vote over views; informational only.
  ConfusionMatrix subject_vote;
};

// Pools test predictions across folds. Throws ValueError when an image
// appears in more than one fold.
EvalReport pool_folds(const std::vector<FoldPredictions>& folds, double threshold = 0.5);

std::string report_to_json(const EvalReport& r);
std::string roc_to_svg(const std::vector<RocPoint>& roc, std::optional<double> auc);

}  // namespace radcls
