#pragma once

#include <cstdint>
#include <filesystem>

#include "radcls/dataset.hpp"
#include "radcls/image.hpp"

namespace radcls {

struct PhantomSpec {
  int n_subjects = 40;
  int image_size = 256;
  double signal_strength = 0.6;  // defect contrast as a fraction of its full depth
  double noise_sigma = 6.0;      // Gaussian noise, in intensity levels
  std::uint64_t seed = 0;

  void validate() const;
};

struct Phantom {
  GrayImage image;
  BBox roi;
};

// Full-depth darkening of the defect band at signal_strength 1.
inline constexpr double kDefectDepth = 80.0;

// One view of one subject. Anatomy and noise depend only on (seed, subject,
// view); the label only adds the subacromial defect, which lies inside the ROI.
Phantom render_phantom(const PhantomSpec& spec, int subject, View view, Label label);

// Labels for subjects 0..n-1: ceil(n/2) frct, the rest no_tear, shuffled by seed.
std::vector<Label> phantom_labels(const PhantomSpec& spec);

// Writes <out_dir>/img/<subject>_<view>.png for four views per subject and
// <out_dir>/manifest.csv; returns the manifest.
Manifest generate(const PhantomSpec& spec, const std::filesystem::path& out_dir);

}  // namespace radcls
