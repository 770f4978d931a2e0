#include <cmath>

#include "doctest.h"
#include "json.hpp"
#include "radcls/errors.hpp"
#include "radcls/eval.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace radcls;
using namespace oracle;

namespace {

std::pair<std::vector<double>, std::vector<int>> random_instance(Rng& rng) {
  const std::size_t n = 2 + rng.below(49);
  std::vector<double> s(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = rng.bernoulli(0.3) ? std::round(rng.uniform() * 5) / 5 : rng.uniform();  // inject ties
    y[i] = int(rng.below(2));
  }
  y[0] = 1;
  y[1] = 0;
  return {s, y};
}

FoldPredictions fold_of(int fold, const std::vector<std::pair<double, int>>& rows) {
  FoldPredictions f{fold, {}};
  int i = 0;
  for (auto [s, l] : rows) {
    const std::string id = "f" + std::to_string(fold) + "_" + std::to_string(i++);
    f.predictions.push_back({id + ".png", id, l, s});
  }
  return f;
}

}  // namespace

TEST_CASE("confusion and basic metrics") {
  CHECK(confusion({1, 1, 1}, {1, 1, 1}) == ConfusionMatrix{3, 0, 0, 0});
  CHECK(confusion({0, 0}, {1, 1}) == ConfusionMatrix{0, 0, 2, 0});
  CHECK(confusion({0.5, 0.49}, {0, 0}) == ConfusionMatrix{0, 1, 0, 1});
  CHECK_THROWS_AS(confusion({0.5}, {0, 1}), ValueError);

  const ConfusionMatrix cm{161, 28, 39, 168};
  CHECK(cm.total() == 396);
  const BasicMetrics m = basic_metrics(cm);
  CHECK(*m.accuracy == doctest::Approx(329.0 / 396).epsilon(1e-15));
  CHECK(*m.ppv == doctest::Approx(161.0 / 189).epsilon(1e-15));
  CHECK(*m.npv == doctest::Approx(168.0 / 207).epsilon(1e-15));
  CHECK(std::abs(*m.accuracy - 0.831) < 0.0005);
  CHECK(std::abs(*m.ppv - 0.852) < 0.0005);
  CHECK(std::abs(*m.npv - 0.812) < 0.0005);

  const BasicMetrics perfect = basic_metrics({1, 0, 0, 1});
  CHECK(*perfect.accuracy == 1.0);
  CHECK(*perfect.ppv == 1.0);
  CHECK(*perfect.npv == 1.0);
  const BasicMetrics undefined = basic_metrics({0, 0, 3, 0});
  CHECK_FALSE(undefined.ppv);
  CHECK(*undefined.npv == 0.0);
  CHECK_FALSE(basic_metrics({}).accuracy);
}

TEST_CASE("auroc examples") {
  CHECK(auroc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}).auc == 1.0);
  CHECK(auroc({0.5, 0.5, 0.5}, {0, 1, 1}).auc == 0.5);
  CHECK(auroc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}).auc == 0.75);
  CHECK_THROWS_AS(auroc({0.1, 0.2}, {1, 1}), UndefinedMetricError);
  const RocResult r = auroc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1});
  CHECK(r.points.front().fpr == 0.0);
  CHECK(r.points.front().tpr == 0.0);
  CHECK(r.points.back().fpr == 1.0);
  CHECK(r.points.back().tpr == 1.0);
}

TEST_CASE("auroc equals the pair-counting statistic") {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto [s, y] = random_instance(rng);
    CHECK(std::abs(auroc(s, y).auc - pair_count_auc(s, y)) < 1e-9);
  }
}

TEST_CASE("auroc is invariant under increasing transforms") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto [s, y] = random_instance(rng);
    const double base = auroc(s, y).auc;
    for (int f = 0; f < 3; ++f) {
      std::vector<double> t(s.size());
      for (std::size_t i = 0; i < s.size(); ++i)
        t[i] = f == 0 ? 3 * s[i] - 7 : (f == 1 ? std::pow(s[i], 3) : std::log1p(s[i]));
      CHECK(auroc(t, y).auc == doctest::Approx(base).epsilon(1e-12));
    }
  }
}

TEST_CASE("pooling") {
  std::vector<FoldPredictions> five;
  for (int i = 0; i < 5; ++i) five.push_back(fold_of(i, {{0.9, 1}, {0.1, 0}}));
  const EvalReport r = pool_folds(five);
  CHECK(r.pooled.cm == ConfusionMatrix{5, 0, 0, 5});
  CHECK(*r.pooled.metrics.accuracy == 1.0);
  CHECK(r.per_fold.size() == 5);

  const EvalReport one = pool_folds({fold_of(0, {{0.9, 1}, {0.6, 0}, {0.2, 1}})});
  CHECK(one.pooled.cm == one.per_fold[0].cm);
  CHECK(*one.pooled.auroc == *one.per_fold[0].auroc);

  auto dup = five;
  dup[1].predictions[0].image_path = dup[0].predictions[0].image_path;
  CHECK_THROWS_AS(pool_folds(dup), ValueError);
}

TEST_CASE("pooled confusion is the sum of folds and the JSON agrees") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<FoldPredictions> folds;
    for (int f = 0; f < 5; ++f) {
      std::vector<std::pair<double, int>> rows;
      for (std::uint64_t i = 0, n = 2 + rng.below(20); i < n; ++i) rows.push_back({rng.uniform(), int(rng.below(2))});
      folds.push_back(fold_of(f, rows));
    }
    const EvalReport r = pool_folds(folds);
    ConfusionMatrix sum;
    for (const auto& f : r.per_fold) sum += f.cm;
    CHECK(sum == r.pooled.cm);
    const auto j = nlohmann::json::parse(report_to_json(r));
    const auto& p = j["pooled"];
    const ConfusionMatrix from_json{p["tp"], p["fp"], p["fn"], p["tn"]};
    CHECK(from_json == sum);
    const BasicMetrics m = basic_metrics(from_json);
    if (m.accuracy) CHECK(p["accuracy"].get<double>() == *m.accuracy);
    if (m.ppv) CHECK(p["ppv"].get<double>() == *m.ppv);
    else CHECK(p["ppv"].is_null());
    if (m.npv) CHECK(p["npv"].get<double>() == *m.npv);
    CHECK(j["per_fold"].size() == 5);
    CHECK(j.contains("mean_fold_auroc"));
  }
}

TEST_CASE("396 pooled predictions") {
  std::vector<FoldPredictions> folds;
  Rng rng(4);
  for (int f = 0; f < 5; ++f) {
    std::vector<std::pair<double, int>> rows;
    for (int i = 0; i < (f < 4 ? 80 : 76); ++i) rows.push_back({rng.uniform(), int(rng.below(2))});
    folds.push_back(fold_of(f, rows));
  }
  CHECK(pool_folds(folds).pooled.cm.total() == 396);
}

TEST_CASE("ROC plot") {
  const RocResult r = auroc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1});
  const std::string svg = roc_to_svg(r.points, r.auc);
  CHECK(svg.starts_with("<svg"));
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find("AUROC = 0.750") != std::string::npos);
}
