#include <fstream>
#include <sstream>

#include "doctest.h"
#include "radcls/dataset.hpp"
#include "radcls/synth.hpp"
#include "test_util.hpp"

using namespace radcls;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

bool inside(const BBox& b, int x, int y) { return x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h; }

}  // namespace

TEST_CASE("class signal stays inside the ROI box") {
  PhantomSpec spec;
  spec.image_size = 128;
  for (int subject = 0; subject < 10; ++subject)
    for (View v : kAllViews) {
      const Phantom a = render_phantom(spec, subject, v, Label::no_tear);
      const Phantom b = render_phantom(spec, subject, v, Label::frct);
      CHECK(a.roi.x == b.roi.x);
      CHECK(a.roi.w == b.roi.w);
      std::size_t differ_inside = 0;
      for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x) {
          const bool same = a.image.at(x, y) == b.image.at(x, y);
          if (!inside(a.roi, x, y) && !same) FAIL("pixel outside the ROI depends on the label");
          differ_inside += !same;
        }
      CHECK(differ_inside > 50);
      CHECK(a.roi.x >= 0);
      CHECK(a.roi.y >= 0);
      CHECK(a.roi.x + a.roi.w <= 128);
      CHECK(a.roi.y + a.roi.h <= 128);
    }
}

TEST_CASE("noise-free full-strength defect is separable by a fixed threshold") {
  PhantomSpec spec;
  spec.signal_strength = 1.0;
  spec.noise_sigma = 0.0;
  spec.image_size = 128;
  const auto labels = phantom_labels(spec);
  int correct = 0, total = 0;
  for (int subject = 0; subject < spec.n_subjects; ++subject)
    for (View v : kAllViews) {
      const Phantom p = render_phantom(spec, subject, v, labels[subject]);
      int darkest = 255;
      for (int y = int(p.roi.y); y < int(p.roi.y + p.roi.h); ++y)
        for (int x = int(p.roi.x); x < int(p.roi.x + p.roi.w); ++x) darkest = std::min<int>(darkest, p.image.at(x, y));
      correct += (darkest < 60) == (labels[subject] == Label::frct);
      ++total;
    }
  CHECK(correct == total);
}

TEST_CASE("generate writes a balanced, reproducible dataset") {
  PhantomSpec spec;
  spec.image_size = 64;
  spec.seed = 7;
  const auto d1 = testutil::scratch("synth1"), d2 = testutil::scratch("synth2");
  const Manifest m = generate(spec, d1);
  generate(spec, d2);
  CHECK(m.records.size() == 160);
  int frct = 0;
  for (const auto& [s, l] : subject_labels(m)) frct += l == Label::frct;
  CHECK(frct == 20);
  CHECK(validate_dataset(parse_manifest(d1 / "manifest.csv")).empty());
  CHECK(slurp(d1 / "manifest.csv") == slurp(d2 / "manifest.csv"));
  for (const auto& r : m.records) {
    CHECK(r.roi_box.has_value());
    CHECK(slurp(d1 / r.image_path) == slurp(d2 / r.image_path));
  }
  PhantomSpec other = spec;
  other.seed = 8;
  CHECK(render_phantom(spec, 0, View::ap, Label::frct).image != render_phantom(other, 0, View::ap, Label::frct).image);
}
