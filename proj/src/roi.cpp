#include "radcls/roi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "radcls/errors.hpp"

namespace radcls {

double iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

GrayImage crop_roi(const GrayImage& img, const BBox& box, double margin_fraction) {
  if (!box.valid()) throw GeometryError("crop_roi: box must have positive extent");
  if (!(margin_fraction >= 0.0)) throw ArgumentError("crop_roi: margin must be non-negative");
  if (box.x >= img.width || box.y >= img.height || box.x + box.w <= 0 || box.y + box.h <= 0)
    throw GeometryError("crop_roi: box lies entirely outside the " + std::to_string(img.width) + "x" +
                        std::to_string(img.height) + " image");
  const double mx = margin_fraction * box.w, my = margin_fraction * box.h;
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x - mx)));
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y - my)));
  const int x1 = std::min(img.width, static_cast<int>(std::ceil(box.x + box.w + mx)));
  const int y1 = std::min(img.height, static_cast<int>(std::ceil(box.y + box.h + my)));
  if (x1 <= x0 || y1 <= y0) throw GeometryError("crop_roi: empty crop");
  GrayImage out(x1 - x0, y1 - y0);
  for (int y = y0; y < y1; ++y)
    std::copy_n(&img.pixels[static_cast<std::size_t>(y) * img.width + x0], x1 - x0,
                &out.pixels[static_cast<std::size_t>(y - y0) * out.width]);
  return out;
}

BBox remap_box(const BBox& box, const LetterboxTransform& t, bool inverse) {
  if (inverse)
    return {(box.x - t.pad_left) / t.scale, (box.y - t.pad_top) / t.scale, box.w / t.scale, box.h / t.scale};
  return {box.x * t.scale + t.pad_left, box.y * t.scale + t.pad_top, box.w * t.scale, box.h * t.scale};
}

namespace {

std::size_t gt_count(const GroundTruth& gts) {
  std::size_t n = 0;
  for (const auto& [id, boxes] : gts) n += boxes.size();
  return n;
}

std::vector<std::size_t> confidence_order(const std::vector<Detection>& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });
  return order;
}

}  // namespace

std::vector<PrPoint> pr_curve(const std::vector<Detection>& dets, const GroundTruth& gts, double iou_thresh) {
  const double total = static_cast<double>(gt_count(gts));
  std::map<std::string, std::vector<bool>> matched;
  for (const auto& [id, boxes] : gts) matched[id].assign(boxes.size(), false);

  std::vector<PrPoint> curve;
  curve.reserve(dets.size());
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (std::size_t idx : confidence_order(dets)) {
    const Detection& d = dets[idx];
    ++seen;
    auto it = gts.find(d.image_id);
    if (it != gts.end()) {
      auto& used = matched[d.image_id];
      int best = -1;
      double best_iou = iou_thresh;
      for (std::size_t g = 0; g < it->second.size(); ++g) {
        if (used[g]) continue;
        const double v = iou(d.box, it->second[g]);
        if (v >= best_iou && (best < 0 || v > best_iou)) {
          best = static_cast<int>(g);
          best_iou = v;
        }
      }
      if (best >= 0) {
        used[best] = true;
        ++tp;
      }
    }
    curve.push_back({static_cast<double>(tp) / seen, total > 0 ? tp / total : 0.0, d.confidence});
  }
  return curve;
}

double average_precision(const std::vector<Detection>& dets, const GroundTruth& gts, double iou_thresh) {
  if (!(iou_thresh > 0.0 && iou_thresh < 1.0)) throw ArgumentError("average_precision: iou_thresh must be in (0,1)");
  if (gt_count(gts) == 0) return dets.empty() ? 1.0 : 0.0;
  const auto curve = pr_curve(dets, gts, iou_thresh);
  // Precision envelope from the right, then area over recall increments.
  std::vector<double> env(curve.size());
  double running = 0.0;
  for (std::size_t i = curve.size(); i-- > 0;) {
    running = std::max(running, curve[i].precision);
    env[i] = running;
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    ap += (curve[i].recall - prev_recall) * env[i];
    prev_recall = curve[i].recall;
  }
  return std::clamp(ap, 0.0, 1.0);
}

DetMetrics map_range(const std::vector<Detection>& dets, const GroundTruth& gts) {
  DetMetrics m;
  m.map50 = average_precision(dets, gts, 0.5);
  double sum = 0.0;
  for (int i = 0; i < 10; ++i) sum += average_precision(dets, gts, (50.0 + 5.0 * i) / 100.0);
  m.map5095 = sum / 10.0;

  if (gt_count(gts) == 0) {
    m.precision = m.recall = dets.empty() ? 1.0 : 0.0;
    return m;
  }
  const auto curve = pr_curve(dets, gts, 0.5);
  double best_f1 = -1.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    // Only cut between distinct confidences.
    if (i + 1 < curve.size() && curve[i + 1].confidence == curve[i].confidence) continue;
    const double p = curve[i].precision, r = curve[i].recall;
    const double f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    if (f1 > best_f1) {
      best_f1 = f1;
      m.precision = p;
      m.recall = r;
    }
  }
  return m;
}

std::string det_metrics_to_json(const DetMetrics& m) {
  nlohmann::ordered_json j;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["map50"] = m.map50;
  j["map5095"] = m.map5095;
  return j.dump(2) + "\n";
}

std::vector<Detection> read_detections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open detections file " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("detections file is empty: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "image_path,x,y,w,h,confidence")
    throw FormatError("detections header must be 'image_path,x,y,w,h,confidence', got '" + line + "'");
  std::vector<Detection> dets;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 6) throw FormatError("detections line " + std::to_string(line_no) + ": expected 6 fields");
    Detection d;
    d.image_id = f[0];
    try {
      d.box = {std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])};
      d.confidence = std::stod(f[5]);
    } catch (const std::exception&) {
      throw ValueError("detections line " + std::to_string(line_no) + ": non-numeric field");
    }
    if (!d.box.valid()) throw ValueError("detections line " + std::to_string(line_no) + ": invalid box");
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0))
      throw ValueError("detections line " + std::to_string(line_no) + ": confidence outside [0,1]");
    dets.push_back(d);
  }
  return dets;
}

}  // namespace radcls
