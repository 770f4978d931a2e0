#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "radcls/image.hpp"

namespace radcls {

inline constexpr double kUnboundedClip = std::numeric_limits<double>::infinity();

struct ClaheParams {
  double clip_limit = 2.0;
  int tiles_x = 8;
  int tiles_y = 8;
};

using Histogram = std::array<double, 256>;

// Clips every bin at `limit` and spreads the removed mass evenly over all 256
// bins. The total mass is unchanged.
Histogram clip_histogram(const Histogram& h, double limit);

// Maps each intensity to 255 * CDF(v) / total for the given histogram.
std::array<double, 256> equalization_map(const Histogram& h);

// Contrast-limited adaptive histogram equalization. Tile t along an axis of
// length n spans [t*n/tiles, (t+1)*n/tiles). Bins are clipped at
// clip_limit * tile_pixels / 256; kUnboundedClip disables clipping.
GrayImage clahe(const GrayImage& img, double clip_limit, int tiles_x, int tiles_y);
inline GrayImage clahe(const GrayImage& img, const ClaheParams& p) {
  return clahe(img, p.clip_limit, p.tiles_x, p.tiles_y);
}

// Bilinear resampling with pixel-center alignment; source coordinates are
// clamped at the borders.
GrayImage resize(const GrayImage& img, int out_w, int out_h);
std::vector<double> resize_bilinear(std::span<const double> src, int w, int h, int out_w, int out_h);

struct LetterboxTransform {
  double scale = 1.0;
  int pad_left = 0;
  int pad_top = 0;
  int content_w = 0;
  int content_h = 0;
  int out_w = 0;
  int out_h = 0;
};

struct Letterboxed {
  GrayImage image;
  LetterboxTransform transform;
};

// Aspect-preserving resize onto an out_w x out_h canvas filled with
// pad_value; content is centered, odd leftovers go to the right/bottom pad.
Letterboxed letterbox(const GrayImage& img, int out_w, int out_h, std::uint8_t pad_value = 0);

struct AugmentSpec {
  bool hflip = true;
  double hflip_prob = 0.5;
  bool rotate = true;
  double rotation_deg = 10.0;  // angle drawn from [-rotation_deg, rotation_deg]
  bool scale = true;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  bool translate = true;
  double translate_fraction = 0.0625;
  bool crop = true;
  double crop_fraction = 0.9;
  bool brightness = true;
  double brightness_delta = 25.0;
  bool invert = true;
  double invert_prob = 0.1;

  static AugmentSpec none();
  // Throws ArgumentError on ill-formed ranges or probabilities.
  void validate() const;
};

// Applies the enabled transforms in the order hflip, rotate, scale,
// translate, crop-and-resize-back, brightness, invert. Each transform draws
// from its own stream derived from `seed`.
GrayImage augment(const GrayImage& img, const AugmentSpec& spec, std::uint64_t seed);

GrayImage hflip(const GrayImage& img);
GrayImage invert(const GrayImage& img);
// Inverse-mapped affine warp about the image center with bilinear sampling;
// samples outside the source are `fill`.
GrayImage warp_about_center(const GrayImage& img, double angle_rad, double scale, double dx, double dy,
                            std::uint8_t fill = 0);

}  // namespace radcls
