#include "radcls/eval.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "radcls/errors.hpp"

namespace radcls {

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

ConfusionMatrix confusion(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  if (scores.size() != labels.size())
    throw ValueError("confusion: " + std::to_string(scores.size()) + " scores but " + std::to_string(labels.size()) +
                     " labels");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i] != 0 && labels[i] != 1) throw ValueError("confusion: labels must be 0 or 1");
    const bool pos = labels[i] == 1;
    if (pred && pos) ++cm.tp;
    else if (pred) ++cm.fp;
    else if (pos) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

BasicMetrics basic_metrics(const ConfusionMatrix& cm) {
  BasicMetrics m;
  if (cm.total() > 0) m.accuracy = static_cast<double>(cm.tp + cm.tn) / cm.total();
  if (cm.tp + cm.fp > 0) m.ppv = static_cast<double>(cm.tp) / (cm.tp + cm.fp);
  if (cm.tn + cm.fn > 0) m.npv = static_cast<double>(cm.tn) / (cm.tn + cm.fn);
  return m;
}

RocResult auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ValueError("auroc: scores and labels differ in length");
  const long pos = std::count(labels.begin(), labels.end(), 1);
  const long neg = static_cast<long>(labels.size()) - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetricError("auroc: needs at least one positive and one negative label");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult r;
  r.points.push_back({0.0, 0.0});
  long tp = 0, fp = 0;
  double area = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    const long tp0 = tp, fp0 = fp;
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] == 1 ? tp : fp)++;
    // Trapezoid in count space: (fp - fp0) * (tp + tp0) / 2.
    area += 0.5 * static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0);
    r.points.push_back({static_cast<double>(fp) / neg, static_cast<double>(tp) / pos});
  }
  r.auc = area / (static_cast<double>(pos) * static_cast<double>(neg));
  return r;
}

namespace {

FoldMetrics metrics_for(int fold, const std::vector<Prediction>& preds, double threshold) {
  FoldMetrics fm;
  fm.fold = fold;
  std::vector<double> s;
  std::vector<int> l;
  for (const auto& p : preds) {
    s.push_back(p.score);
    l.push_back(p.label);
  }
  fm.cm = confusion(s, l, threshold);
  fm.metrics = basic_metrics(fm.cm);
  try {
    fm.auroc = auroc(s, l).auc;
  } catch (const UndefinedMetricError&) {
    fm.auroc.reset();
  }
  return fm;
}

}  // namespace

EvalReport pool_folds(const std::vector<FoldPredictions>& folds, double threshold) {
  EvalReport r;
  std::set<std::string> seen;
  std::vector<Prediction> all;
  double auc_sum = 0.0;
  int auc_count = 0;
  for (const auto& f : folds) {
    for (const auto& p : f.predictions) {
      if (!seen.insert(p.image_path).second)
        throw ValueError("image " + p.image_path + " appears in more than one fold's predictions");
      all.push_back(p);
    }
    r.per_fold.push_back(metrics_for(f.fold, f.predictions, threshold));
    if (r.per_fold.back().auroc) {
      auc_sum += *r.per_fold.back().auroc;
      ++auc_count;
    }
  }
  r.pooled = metrics_for(-1, all, threshold);
  if (auc_count > 0) r.mean_fold_auroc = auc_sum / auc_count;
  std::vector<double> s;
  std::vector<int> l;
  for (const auto& p : all) {
    s.push_back(p.score);
    l.push_back(p.label);
  }
  try {
    r.roc = auroc(s, l).points;
  } catch (const UndefinedMetricError&) {
    r.roc.clear();
  }

  // Majority vote per subject; ties fall back to the mean score.
  std::map<std::string, std::vector<const Prediction*>> by_subject;
  for (const auto& p : all) by_subject[p.subject_id].push_back(&p);
  for (const auto& [subj, preds] : by_subject) {
    int votes = 0;
    double mean = 0.0;
    for (const auto* p : preds) {
      votes += p->score >= threshold ? 1 : -1;
      mean += p->score / preds.size();
    }
    const bool pred = votes > 0 || (votes == 0 && mean >= threshold);
    const bool pos = preds.front()->label == 1;
    if (pred && pos) ++r.subject_vote.tp;
    else if (pred) ++r.subject_vote.fp;
    else if (pos) ++r.subject_vote.fn;
    else ++r.subject_vote.tn;
  }
  return r;
}

namespace {

nlohmann::ordered_json opt(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json fold_json(const FoldMetrics& f) {
  nlohmann::ordered_json j;
  if (f.fold >= 0) j["fold"] = f.fold;
  j["tp"] = f.cm.tp;
  j["fp"] = f.cm.fp;
  j["fn"] = f.cm.fn;
  j["tn"] = f.cm.tn;
  j["accuracy"] = opt(f.metrics.accuracy);
  j["auroc"] = opt(f.auroc);
  j["ppv"] = opt(f.metrics.ppv);
  j["npv"] = opt(f.metrics.npv);
  return j;
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["per_fold"] = nlohmann::ordered_json::array();
  for (const auto& f : r.per_fold) j["per_fold"].push_back(fold_json(f));
  j["pooled"] = fold_json(r.pooled);
  j["mean_fold_auroc"] = opt(r.mean_fold_auroc);
  j["subject_vote"] = {{"tp", r.subject_vote.tp}, {"fp", r.subject_vote.fp}, {"fn", r.subject_vote.fn},
                       {"tn", r.subject_vote.tn}};
  j["roc"] = nlohmann::ordered_json::array();
  for (const auto& p : r.roc) j["roc"].push_back({p.fpr, p.tpr});
  return j.dump(2) + "\n";
}

std::string roc_to_svg(const std::vector<RocPoint>& roc, std::optional<double> auc) {
  constexpr double kSize = 400.0, kMargin = 50.0;
  auto px = [&](double v) { return kMargin + v * kSize; };
  auto py = [&](double v) { return kMargin + (1.0 - v) * kSize; };
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize + 2 * kMargin << "\" height=\""
     << kSize + 2 * kMargin << "\">\n";
  os << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kSize << "\" height=\"" << kSize
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
     << "\" stroke=\"gray\" stroke-dasharray=\"4,4\"/>\n";
  os << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\"";
  for (const auto& p : roc) os << px(p.fpr) << "," << py(p.tpr) << " ";
  os << "\"/>\n";
  os << "<text x=\"" << px(0.5) << "\" y=\"" << kSize + 1.7 * kMargin << "\" text-anchor=\"middle\">"
     << "False positive rate</text>\n";
  os << "<text x=\"" << kMargin * 0.4 << "\" y=\"" << py(0.5) << "\" text-anchor=\"middle\" transform=\"rotate(-90 "
     << kMargin * 0.4 << " " << py(0.5) << ")\">True positive rate</text>\n";
  if (auc) {
    os.precision(3);
    os << "<text x=\"" << px(0.6) << "\" y=\"" << py(0.1) << "\">AUROC = " << *auc << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace radcls
