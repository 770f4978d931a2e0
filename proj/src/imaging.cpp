#include "radcls/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "radcls/errors.hpp"
#include "radcls/rng.hpp"

namespace radcls {

namespace {

inline std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

// Maps coordinate `p` onto the pair of tile centers that bracket it.
struct TileLerp {
  int lo = 0;
  int hi = 0;
  double t = 0.0;
};

std::vector<TileLerp> tile_lerps(int n, int tiles) {
  std::vector<double> centers(tiles);
  for (int t = 0; t < tiles; ++t) {
    const long b0 = static_cast<long>(t) * n / tiles;
    const long b1 = static_cast<long>(t + 1) * n / tiles;
    centers[t] = 0.5 * static_cast<double>(b0 + b1 - 1);
  }
  std::vector<TileLerp> out(n);
  for (int p = 0; p < n; ++p) {
    if (p <= centers.front()) {
      out[p] = {0, 0, 0.0};
    } else if (p >= centers.back()) {
      out[p] = {tiles - 1, tiles - 1, 0.0};
    } else {
      int j = 0;
      while (j + 1 < tiles && centers[j + 1] <= p) ++j;
      out[p] = {j, j + 1, (p - centers[j]) / (centers[j + 1] - centers[j])};
    }
  }
  return out;
}

}  // namespace

Histogram clip_histogram(const Histogram& h, double limit) {
  Histogram out = h;
  if (!std::isfinite(limit)) return out;
  double excess = 0.0;
  for (double& b : out) {
    if (b > limit) {
      excess += b - limit;
      b = limit;
    }
  }
  const double share = excess / 256.0;
  for (double& b : out) b += share;
  return out;
}

std::array<double, 256> equalization_map(const Histogram& h) {
  double total = 0.0;
  for (double b : h) total += b;
  std::array<double, 256> map{};
  double cdf = 0.0;
  for (int v = 0; v < 256; ++v) {
    cdf += h[v];
    map[v] = total > 0 ? std::min(255.0, 255.0 * cdf / total) : static_cast<double>(v);
  }
  return map;
}

GrayImage clahe(const GrayImage& img, double clip_limit, int tiles_x, int tiles_y) {
  if (!(clip_limit > 0.0)) throw ArgumentError("clahe: clip_limit must be positive");
  if (tiles_x < 1 || tiles_y < 1) throw ArgumentError("clahe: tile counts must be at least 1");
  if (img.width < tiles_x || img.height < tiles_y)
    throw ArgumentError("clahe: image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        " is smaller than the tile grid");

  const int W = img.width, H = img.height;
  std::vector<std::array<double, 256>> maps(static_cast<std::size_t>(tiles_x) * tiles_y);

#pragma omp parallel for schedule(static)
  for (int t = 0; t < tiles_x * tiles_y; ++t) {
    const int tx = t % tiles_x, ty = t / tiles_x;
    const int x0 = static_cast<int>(static_cast<long>(tx) * W / tiles_x);
    const int x1 = static_cast<int>(static_cast<long>(tx + 1) * W / tiles_x);
    const int y0 = static_cast<int>(static_cast<long>(ty) * H / tiles_y);
    const int y1 = static_cast<int>(static_cast<long>(ty + 1) * H / tiles_y);
    Histogram hist{};
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) hist[img.at(x, y)] += 1.0;
    const double tile_pixels = static_cast<double>(x1 - x0) * (y1 - y0);
    maps[t] = equalization_map(clip_histogram(hist, clip_limit * tile_pixels / 256.0));
  }

  const auto lx = tile_lerps(W, tiles_x);
  const auto ly = tile_lerps(H, tiles_y);
  GrayImage out(W, H);

#pragma omp parallel for schedule(static)
  for (int y = 0; y < H; ++y) {
    const TileLerp& ry = ly[y];
    for (int x = 0; x < W; ++x) {
      const TileLerp& rx = lx[x];
      const int v = img.at(x, y);
      const double top = (1 - rx.t) * maps[ry.lo * tiles_x + rx.lo][v] + rx.t * maps[ry.lo * tiles_x + rx.hi][v];
      const double bot = (1 - rx.t) * maps[ry.hi * tiles_x + rx.lo][v] + rx.t * maps[ry.hi * tiles_x + rx.hi][v];
      out.at(x, y) = to_u8((1 - ry.t) * top + ry.t * bot);
    }
  }
  return out;
}

std::vector<double> resize_bilinear(std::span<const double> src, int w, int h, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0) throw ArgumentError("resize: output dimensions must be positive");
  std::vector<double> out(static_cast<std::size_t>(out_w) * out_h);
  const double sx = static_cast<double>(w) / out_w;
  const double sy = static_cast<double>(h) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - x0;
      const double top = (1 - tx) * src[y0 * w + x0] + tx * src[y0 * w + x1];
      const double bot = (1 - tx) * src[y1 * w + x0] + tx * src[y1 * w + x1];
      out[static_cast<std::size_t>(y) * out_w + x] = (1 - ty) * top + ty * bot;
    }
  }
  return out;
}

GrayImage resize(const GrayImage& img, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0) throw ArgumentError("resize: output dimensions must be positive");
  if (out_w == img.width && out_h == img.height) return img;
  std::vector<double> src(img.pixels.begin(), img.pixels.end());
  const auto dst = resize_bilinear(src, img.width, img.height, out_w, out_h);
  GrayImage out(out_w, out_h);
  std::transform(dst.begin(), dst.end(), out.pixels.begin(), to_u8);
  return out;
}

Letterboxed letterbox(const GrayImage& img, int out_w, int out_h, std::uint8_t pad_value) {
  if (out_w <= 0 || out_h <= 0) throw ArgumentError("letterbox: output dimensions must be positive");
  LetterboxTransform t;
  t.out_w = out_w;
  t.out_h = out_h;
  t.scale = std::min(static_cast<double>(out_w) / img.width, static_cast<double>(out_h) / img.height);
  t.content_w = std::clamp(static_cast<int>(std::lround(img.width * t.scale)), 1, out_w);
  t.content_h = std::clamp(static_cast<int>(std::lround(img.height * t.scale)), 1, out_h);
  t.pad_left = (out_w - t.content_w) / 2;
  t.pad_top = (out_h - t.content_h) / 2;

  const GrayImage content = resize(img, t.content_w, t.content_h);
  GrayImage canvas(out_w, out_h, pad_value);
  for (int y = 0; y < t.content_h; ++y)
    std::copy_n(&content.pixels[static_cast<std::size_t>(y) * t.content_w], t.content_w,
                &canvas.pixels[static_cast<std::size_t>(y + t.pad_top) * out_w + t.pad_left]);
  return {std::move(canvas), t};
}

AugmentSpec AugmentSpec::none() {
  AugmentSpec s;
  s.hflip = s.rotate = s.scale = s.translate = s.crop = s.brightness = s.invert = false;
  return s;
}

void AugmentSpec::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError(std::string("augment: ") + name + " must be in [0,1]");
  };
  prob(hflip_prob, "hflip_prob");
  prob(invert_prob, "invert_prob");
  if (!(rotation_deg >= 0.0)) throw ArgumentError("augment: rotation range must be non-negative");
  if (!(scale_lo > 0.0 && scale_lo <= scale_hi)) throw ArgumentError("augment: need 0 < scale_lo <= scale_hi");
  if (!(translate_fraction >= 0.0 && translate_fraction < 1.0))
    throw ArgumentError("augment: translate_fraction must be in [0,1)");
  if (!(crop_fraction > 0.0 && crop_fraction <= 1.0)) throw ArgumentError("augment: crop_fraction must be in (0,1]");
  if (!(brightness_delta >= 0.0)) throw ArgumentError("augment: brightness range must be non-negative");
}

GrayImage hflip(const GrayImage& img) {
  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(x, y) = img.at(img.width - 1 - x, y);
  return out;
}

GrayImage invert(const GrayImage& img) {
  GrayImage out = img;
  for (auto& p : out.pixels) p = static_cast<std::uint8_t>(255 - p);
  return out;
}

GrayImage warp_about_center(const GrayImage& img, double angle_rad, double scale, double dx, double dy,
                            std::uint8_t fill) {
  const int W = img.width, H = img.height;
  const double cx = 0.5 * (W - 1), cy = 0.5 * (H - 1);
  const double c = std::cos(angle_rad), s = std::sin(angle_rad);
  auto sample = [&](int x, int y) -> double {
    return (x < 0 || y < 0 || x >= W || y >= H) ? static_cast<double>(fill) : static_cast<double>(img.at(x, y));
  };
  GrayImage out(W, H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double u = x - cx - dx, v = y - cy - dy;
      const double sx = (c * u + s * v) / scale + cx;
      const double sy = (-s * u + c * v) / scale + cy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
      const double tx = sx - fx, ty = sy - fy;
      const double top = (1 - tx) * sample(x0, y0) + tx * sample(x0 + 1, y0);
      const double bot = (1 - tx) * sample(x0, y0 + 1) + tx * sample(x0 + 1, y0 + 1);
      out.at(x, y) = to_u8((1 - ty) * top + ty * bot);
    }
  }
  return out;
}

GrayImage augment(const GrayImage& img, const AugmentSpec& spec, std::uint64_t seed) {
  spec.validate();
  GrayImage out = img;
  auto stream = [seed](std::uint64_t slot) { return Rng(derive_seed(seed, {slot})); };

  if (spec.hflip) {
    Rng rng = stream(0);
    if (rng.bernoulli(spec.hflip_prob)) out = hflip(out);
  }
  if (spec.rotate) {
    Rng rng = stream(1);
    const double deg = rng.uniform(-spec.rotation_deg, spec.rotation_deg);
    out = warp_about_center(out, deg * std::numbers::pi / 180.0, 1.0, 0.0, 0.0);
  }
  if (spec.scale) {
    Rng rng = stream(2);
    out = warp_about_center(out, 0.0, rng.uniform(spec.scale_lo, spec.scale_hi), 0.0, 0.0);
  }
  if (spec.translate) {
    Rng rng = stream(3);
    const double tx = rng.uniform(-spec.translate_fraction, spec.translate_fraction) * out.width;
    const double ty = rng.uniform(-spec.translate_fraction, spec.translate_fraction) * out.height;
    out = warp_about_center(out, 0.0, 1.0, tx, ty);
  }
  if (spec.crop) {
    Rng rng = stream(4);
    const int cw = std::clamp(static_cast<int>(std::lround(spec.crop_fraction * out.width)), 1, out.width);
    const int ch = std::clamp(static_cast<int>(std::lround(spec.crop_fraction * out.height)), 1, out.height);
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(out.width - cw + 1)));
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(out.height - ch + 1)));
    GrayImage window(cw, ch);
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x) window.at(x, y) = out.at(x0 + x, y0 + y);
    out = resize(window, img.width, img.height);
  }
  if (spec.brightness) {
    Rng rng = stream(5);
    const double delta = rng.uniform(-spec.brightness_delta, spec.brightness_delta);
    for (auto& p : out.pixels) p = to_u8(p + delta);
  }
  if (spec.invert) {
    Rng rng = stream(6);
    if (rng.bernoulli(spec.invert_prob)) out = invert(out);
  }
  return out;
}

}  // namespace radcls
