#include "radcls/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "radcls/errors.hpp"
#include "radcls/rng.hpp"

namespace radcls {

void PhantomSpec::validate() const {
  if (n_subjects < 2) throw ArgumentError("synth: need at least 2 subjects");
  if (image_size < 32) throw ArgumentError("synth: image_size must be at least 32");
  if (!(signal_strength > 0.0 && signal_strength <= 1.0)) throw ArgumentError("synth: signal_strength must be in (0,1]");
  if (!(noise_sigma >= 0.0)) throw ArgumentError("synth: noise_sigma must be non-negative");
}

std::vector<Label> phantom_labels(const PhantomSpec& spec) {
  std::vector<Label> labels(spec.n_subjects, Label::no_tear);
  for (int i = 0; i < (spec.n_subjects + 1) / 2; ++i) labels[i] = Label::frct;
  Rng rng(derive_seed(spec.seed, {0}));
  rng.shuffle(labels.begin(), labels.end());
  return labels;
}

Phantom render_phantom(const PhantomSpec& spec, int subject, View view, Label label) {
  const int S = spec.image_size;
  const double s = S;
  const auto v = static_cast<std::uint64_t>(view);
  Rng geo(derive_seed(spec.seed, {1, std::uint64_t(subject), v}));
  Rng noise(derive_seed(spec.seed, {2, std::uint64_t(subject), v}));

  static constexpr double kTiltDeg[] = {0.0, 8.0, -8.0, 4.0};
  const double tissue = 90.0 + geo.uniform(-10.0, 10.0);
  const double cx = s * (0.5 + geo.uniform(-0.05, 0.05));
  const double cy = s * (0.58 + geo.uniform(-0.04, 0.04));
  const double r = s * 0.17 * (1.0 + geo.uniform(-0.1, 0.1));
  const double gap = s * (0.05 + geo.uniform(-0.01, 0.01));
  const double thick = s * 0.06;
  const double tilt = (kTiltDeg[v] + geo.uniform(-3.0, 3.0)) * std::numbers::pi / 180.0;
  const double bar_half = s * 0.2;
  const double bar_cy = cy - r - gap - 0.5 * thick;
  const double head = 195.0 + geo.uniform(-10.0, 10.0);
  const double bar = 215.0 + geo.uniform(-10.0, 10.0);
  const double rib_phase = geo.uniform(0.0, 2.0 * std::numbers::pi);
  const double cos_t = std::cos(tilt), sin_t = std::sin(tilt);
  const double band_cos = std::cos(35.0 * std::numbers::pi / 180.0);

  Phantom out;
  out.image = GrayImage(S, S);
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double val = tissue + 20.0 * px / s;
      // Rib-like arcs in the lower-left corner, well outside the joint.
      const double rd = std::hypot(px, py - s);
      if (rd < 0.42 * s && std::sin(rd / s * 40.0 + rib_phase) > 0.6) val += 45.0;
      // Humeral shaft.
      if (py > cy && std::abs(px - cx) < 0.6 * r) val = std::max(val, head - 15.0);
      const double dx = px - cx, dy = py - cy;
      const double d = std::hypot(dx, dy);
      if (d < r) val = head;
      // Acromion: a tilted bar above the head.
      const double u = cos_t * (px - cx) + sin_t * (py - bar_cy);
      const double w = -sin_t * (px - cx) + cos_t * (py - bar_cy);
      if (std::abs(u) < bar_half && std::abs(w) < 0.5 * thick) val = bar;
      // Defect: reduced intensity in the subacromial band just above the head.
      if (label == Label::frct && d >= r - 0.03 * s && d <= r + gap && -dy >= band_cos * d)
        val -= spec.signal_strength * kDefectDepth;
      val += spec.noise_sigma > 0 ? spec.noise_sigma * noise.normal() : 0.0;
      out.image.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::floor(val + 0.5), 0.0, 255.0));
    }
  }
  const double x0 = std::max(0.0, std::floor(cx - 0.3 * s));
  const double y0 = std::max(0.0, std::floor(bar_cy - 0.5 * thick - bar_half * std::abs(sin_t) - 0.04 * s));
  const double x1 = std::min(s, std::ceil(cx + 0.3 * s));
  const double y1 = std::min(s, std::ceil(cy + r + 0.04 * s));
  out.roi = {x0, y0, x1 - x0, y1 - y0};
  return out;
}

Manifest generate(const PhantomSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "img", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "img").string() + ": " + ec.message());

  const auto labels = phantom_labels(spec);
  const int width = std::max(3, static_cast<int>(std::to_string(spec.n_subjects).size()));
  Manifest m;
  m.base_dir = out_dir;
  for (int i = 0; i < spec.n_subjects; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "S%0*d", width, i + 1);
    for (View view : kAllViews) {
      const Phantom ph = render_phantom(spec, i, view, labels[i]);
      ImageRecord r;
      r.subject_id = id;
      r.view = view;
      r.label = labels[i];
      r.image_path = "img/" + std::string(id) + "_" + std::string(to_string(view)) + ".png";
      r.roi_box = ph.roi;
      write_png(out_dir / r.image_path, ph.image);
      m.records.push_back(std::move(r));
    }
  }
  write_manifest(out_dir / "manifest.csv", m);
  for (std::size_t i = 0; i < m.records.size(); ++i) m.records[i].line = static_cast<int>(i) + 2;
  return m;
}

}  // namespace radcls
