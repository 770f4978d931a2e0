#include <cmath>
#include <fstream>
#include <set>
#include <tuple>
#include <sstream>

#include "doctest.h"
#include "radcls/dataset.hpp"
#include "radcls/errors.hpp"
#include "radcls/image.hpp"
#include "test_util.hpp"

using namespace radcls;

namespace {

Manifest synthetic_manifest(int n_frct, int n_none) {
  Manifest m;
  int s = 0;
  auto add = [&](Label l) {
    char id[16];
    std::snprintf(id, sizeof id, "S%03d", ++s);
    for (View v : kAllViews) m.records.push_back({id, v, l, std::string(id) + "_" + std::string(to_string(v)) + ".png", {}, 0});
  };
  for (int i = 0; i < n_frct; ++i) add(Label::frct);
  for (int i = 0; i < n_none; ++i) add(Label::no_tear);
  return m;
}

Manifest parse(const std::string& text) {
  std::istringstream in(text);
  return parse_manifest(in);
}

}  // namespace

TEST_CASE("manifest rows map to records") {
  const Manifest m = parse(
      "subject_id,view,label,image_path,x,y,w,h\n"
      "S001,ap,frct,img/s1_ap.png,10,20,100,120\n"
      "S002,axial,no_tear,img/s2_ax.png,,,,\n");
  REQUIRE(m.records.size() == 2);
  CHECK(m.records[0].subject_id == "S001");
  CHECK(m.records[0].view == View::ap);
  CHECK(m.records[0].label == Label::frct);
  REQUIRE(m.records[0].roi_box);
  CHECK(m.records[0].roi_box->x == 10);
  CHECK(m.records[0].roi_box->h == 120);
  CHECK_FALSE(m.records[1].roi_box);
  CHECK(m.records[1].line == 3);
}

TEST_CASE("manifest errors") {
  SUBCASE("missing column") {
    try {
      parse("subject_id,view,image_path,x,y,w,h\n");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("label") != std::string::npos);
    }
  }
  SUBCASE("unknown view names the row") {
    try {
      parse("subject_id,view,label,image_path,x,y,w,h\nS1,ap,frct,a.png,,,,\nS1,lateral,frct,b.png,,,,\n");
      FAIL("expected ValueError");
    } catch (const ValueError& e) {
      CHECK(std::string(e.what()).find("3") != std::string::npos);
    }
  }
  SUBCASE("unknown label") {
    CHECK_THROWS_AS(parse("subject_id,view,label,image_path,x,y,w,h\nS1,ap,partial,a.png,,,,\n"), ValueError);
  }
  SUBCASE("duplicate view") {
    CHECK_THROWS_AS(parse("subject_id,view,label,image_path,x,y,w,h\nS1,ap,frct,a.png,,,,\nS1,ap,frct,b.png,,,,\n"),
                    DuplicateError);
  }
}

TEST_CASE("manifest round-trips through text") {
  Manifest m = synthetic_manifest(2, 1);
  m.records[0].roi_box = BBox{1.5, 2, 30, 40};
  const Manifest back = parse(format_manifest(m));
  REQUIRE(back.records.size() == m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    CHECK(back.records[i].subject_id == m.records[i].subject_id);
    CHECK(back.records[i].view == m.records[i].view);
    CHECK(back.records[i].label == m.records[i].label);
    CHECK(back.records[i].image_path == m.records[i].image_path);
    CHECK(back.records[i].roi_box.has_value() == m.records[i].roi_box.has_value());
  }
  CHECK(back.records[0].roi_box->x == 1.5);
}

TEST_CASE("396 rows over 99 subjects") {
  const Manifest m = parse(format_manifest(synthetic_manifest(50, 49)));
  CHECK(m.records.size() == 396);
  CHECK(m.subjects().size() == 99);
  CHECK(validate_dataset(m, {.check_files = false}).empty());
}

TEST_CASE("validation reports") {
  SUBCASE("label conflict") {
    Manifest m = synthetic_manifest(1, 0);
    m.records[2].label = Label::no_tear;
    const auto v = validate_dataset(m, {.check_files = false});
    REQUIRE(v.size() >= 1);
    CHECK(v[0].code == "label_conflict");
  }
  SUBCASE("missing file") {
    Manifest m = synthetic_manifest(1, 0);
    m.base_dir = testutil::scratch("validate_missing");
    const auto v = validate_dataset(m);
    REQUIRE(v.size() == 4);
    CHECK(v[0].code == "missing_file");
    CHECK(violations_to_json(v).find("missing_file") != std::string::npos);
  }
  SUBCASE("undecodable file") {
    Manifest m = synthetic_manifest(1, 0);
    m.base_dir = testutil::scratch("validate_decode");
    for (const auto& r : m.records) write_png(m.resolve(r), GrayImage(4, 4, 7));
    CHECK(validate_dataset(m).empty());
    { std::ofstream(m.resolve(m.records[1])) << "not a png"; }
    const auto v = validate_dataset(m);
    REQUIRE(v.size() == 1);
    CHECK(v[0].code == "decode_error");
  }
  SUBCASE("invalid box") {
    Manifest m = synthetic_manifest(1, 0);
    m.records[0].roi_box = BBox{0, 0, -1, 5};
    const auto v = validate_dataset(m, {.check_files = false});
    REQUIRE(v.size() == 1);
    CHECK(v[0].code == "invalid_box");
  }
}

TEST_CASE("fold assignment invariants") {
  for (auto [nf, nn, k] : std::vector<std::tuple<int, int, int>>{{50, 49, 5}, {2, 2, 2}, {7, 13, 3}, {20, 20, 5}, {5, 1, 4}}) {
    const Manifest m = synthetic_manifest(nf, nn);
    for (std::uint64_t seed : {0ull, 1ull, 42ull}) {
      const FoldAssignment f = split_folds(m, k, seed);
      const auto labels = subject_labels(m);
      CHECK(f.fold_of_subject.size() == static_cast<std::size_t>(nf + nn));
      std::set<std::string> all;
      for (int i = 0; i < k; ++i) {
        const auto test = f.test_subjects(i);
        const auto train = f.train_subjects(i);
        CHECK(test.size() + train.size() == static_cast<std::size_t>(nf + nn));
        std::set<std::string> ts(test.begin(), test.end());
        for (const auto& s : train) CHECK(ts.count(s) == 0);
        for (const auto& s : test) CHECK(all.insert(s).second);
        for (Label cls : {Label::frct, Label::no_tear}) {
          const int total = cls == Label::frct ? nf : nn;
          int count = 0;
          for (const auto& s : test) count += labels.at(s) == cls;
          CHECK(std::abs(count - static_cast<int>(std::lround(static_cast<double>(total) / k))) <= 1);
        }
      }
      CHECK(all.size() == f.fold_of_subject.size());
      CHECK(folds_to_json(split_folds(m, k, seed)) == folds_to_json(f));
    }
  }
}

TEST_CASE("99 subjects in 5 folds") {
  const FoldAssignment f = split_folds(synthetic_manifest(50, 49), 5, 0);
  std::multiset<std::size_t> sizes;
  bool has_79_20 = false;
  for (int i = 0; i < 5; ++i) {
    sizes.insert(f.test_subjects(i).size());
    has_79_20 |= f.test_subjects(i).size() == 20 && f.train_subjects(i).size() == 79;
  }
  CHECK(sizes == std::multiset<std::size_t>{19, 20, 20, 20, 20});
  CHECK(has_79_20);
}

TEST_CASE("two-by-two split is perfectly stratified") {
  const Manifest m = synthetic_manifest(2, 2);
  const auto labels = subject_labels(m);
  const FoldAssignment f = split_folds(m, 2, 9);
  for (int i = 0; i < 2; ++i) {
    const auto t = f.test_subjects(i);
    REQUIRE(t.size() == 2);
    CHECK(labels.at(t[0]) != labels.at(t[1]));
  }
}

TEST_CASE("split argument errors") {
  CHECK_THROWS_AS(split_folds(synthetic_manifest(2, 1), 4, 0), ArgumentError);
  CHECK_THROWS_AS(split_folds(synthetic_manifest(2, 1), 1, 0), ArgumentError);
}

TEST_CASE("fold JSON round trip") {
  const FoldAssignment f = split_folds(synthetic_manifest(6, 5), 3, 17);
  const FoldAssignment g = folds_from_json(folds_to_json(f));
  CHECK(g.k == f.k);
  CHECK(g.seed == f.seed);
  CHECK(g.fold_of_subject == f.fold_of_subject);
}
