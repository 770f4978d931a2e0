#pragma once

#include <map>
#include <string>
#include <vector>

#include "radcls/bbox.hpp"
#include "radcls/image.hpp"
#include "radcls/imaging.hpp"

namespace radcls {

double iou(const BBox& a, const BBox& b);

// Crops `box` grown by margin_fraction of its size on every side, clamped to
// the image. Throws GeometryError when the box misses the image entirely.
GrayImage crop_roi(const GrayImage& img, const BBox& box, double margin_fraction = 0.0);

// Forward maps original-image coordinates into the letterboxed canvas.
BBox remap_box(const BBox& box, const LetterboxTransform& t, bool inverse = false);

struct Detection {
  std::string image_id;
  BBox box;
  double confidence = 0.0;
};

using GroundTruth = std::map<std::string, std::vector<BBox>>;

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;
  double confidence = 0.0;
};

// Precision/recall after each detection in descending-confidence order.
// Detections are matched greedily to the unmatched ground-truth box of the
// same image with the highest IoU at or above the threshold.
std::vector<PrPoint> pr_curve(const std::vector<Detection>& dets, const GroundTruth& gts, double iou_thresh);

// All-point interpolated average precision. No ground truth at all gives 0
// when there are detections and 1 when there are none.
double average_precision(const std::vector<Detection>& dets, const GroundTruth& gts, double iou_thresh);

struct DetMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double map50 = 0.0;
  double map5095 = 0.0;
};

// map50 is AP at IoU 0.5 and map5095 the mean AP over 0.50:0.05:0.95.
// Precision/recall are taken at IoU 0.5 at the confidence cutoff that
// maximizes F1.
DetMetrics map_range(const std::vector<Detection>& dets, const GroundTruth& gts);

std::string det_metrics_to_json(const DetMetrics& m);

// Predicted boxes CSV: image_path,x,y,w,h,confidence
std::vector<Detection> read_detections(const std::string& path);

}  // namespace radcls
