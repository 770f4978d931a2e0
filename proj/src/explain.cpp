#include "radcls/explain.hpp"

#include <algorithm>
#include <cmath>

#include "radcls/errors.hpp"
#include "radcls/imaging.hpp"
#include "radcls/train.hpp"

namespace radcls {

Heatmap gradcam_from(const Tensor& A, const Tensor& dA, int out_w, int out_h) {
  if (A.rank() != 4 || A.N() != 1 || !A.same_shape(dA))
    throw ShapeError("grad_cam: activation and gradient must both be (1, C, h, w)");
  const std::size_t C = A.C(), h = A.H(), w = A.W(), HW = h * w;
  std::vector<double> cam(HW, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double alpha = 0.0;
    for (std::size_t i = 0; i < HW; ++i) alpha += dA[c * HW + i];
    alpha /= static_cast<double>(HW);
    for (std::size_t i = 0; i < HW; ++i) cam[i] += alpha * A[c * HW + i];
  }
  for (double& v : cam) v = std::max(0.0, v);

  Heatmap hm;
  hm.width = out_w;
  hm.height = out_h;
  hm.max_activation = *std::max_element(cam.begin(), cam.end());
  hm.values = resize_bilinear(cam, static_cast<int>(w), static_cast<int>(h), out_w, out_h);
  const double peak = *std::max_element(hm.values.begin(), hm.values.end());
  for (double& v : hm.values) v = peak > 0 ? std::clamp(v / peak, 0.0, 1.0) : 0.0;
  return hm;
}

Heatmap grad_cam(const ModelParams& p, const ModelConfig& cfg, const GrayImage& img, int target_class,
                 const std::string& layer_path) {
  if (target_class != 0 && target_class != 1) throw ArgumentError("grad_cam: target class must be 0 or 1");
  const Tensor batch = images_to_batch({img});
  ForwardTrace trace;
  forward(p, cfg, batch, {}, &trace);
  BackwardOptions bo;
  bo.param_grads = false;
  bo.capture_layer = layer_path;
  Tensor seed({1, std::size_t(kNumClasses)});
  seed[target_class] = 1.0;
  const BackwardResult r = backward(p, cfg, trace, seed, bo);
  return gradcam_from(trace.activation(layer_path), r.captured, img.width, img.height);
}

std::array<std::uint8_t, 3> heat_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  auto ch = [](double x) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(x, 0.0, 1.0))); };
  return {ch(3.0 * v), ch(3.0 * v - 1.0), ch(3.0 * v - 2.0)};
}

RgbImage overlay(const Heatmap& hm, const GrayImage& img, double alpha) {
  if (hm.width != img.width || hm.height != img.height)
    throw ShapeError("overlay: heatmap " + std::to_string(hm.width) + "x" + std::to_string(hm.height) +
                     " does not match image " + std::to_string(img.width) + "x" + std::to_string(img.height));
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("overlay: alpha must be in [0,1]");
  RgbImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const auto color = heat_color(hm.values[static_cast<std::size_t>(y) * img.width + x]);
      const double g = img.at(x, y);
      std::uint8_t* px = out.px(x, y);
      for (int c = 0; c < 3; ++c)
        px[c] = static_cast<std::uint8_t>(std::lround(alpha * color[c] + (1.0 - alpha) * g));
    }
  return out;
}

}  // namespace radcls
