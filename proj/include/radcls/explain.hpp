#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "radcls/image.hpp"
#include "radcls/model.hpp"

namespace radcls {

struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major, each in [0, 1]
  double max_activation = 0.0;  // peak of the raw map before normalization
};

// Channel weights are the spatial mean of `gradient`; the map is
// ReLU(sum_k w_k A_k), bilinearly resized to out_w x out_h and divided by its
// maximum (an all-zero map stays zero). activation/gradient: (1, C, h, w).
Heatmap gradcam_from(const Tensor& activation, const Tensor& gradient, int out_w, int out_h);

// `img` must already be preprocessed to cfg.input_size. Throws ArgumentError
// listing the valid layer paths when layer_path is unknown.
Heatmap grad_cam(const ModelParams& p, const ModelConfig& cfg, const GrayImage& img, int target_class,
                 const std::string& layer_path);

// Piecewise-linear black -> red -> yellow -> white ramp, monotone in every channel.
std::array<std::uint8_t, 3> heat_color(double v);

// alpha * colormap(heatmap) + (1 - alpha) * gray, rounded per channel.
RgbImage overlay(const Heatmap& heatmap, const GrayImage& img, double alpha);

}  // namespace radcls
