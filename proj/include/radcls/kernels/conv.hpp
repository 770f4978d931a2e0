#pragma once

#include <cstddef>
#include <vector>

#include "radcls/tensor.hpp"

// 2-D convolution kernels over (N, C, H, W) feature maps with square kernels
// of shape (Cout, Cin, K, K). `omp` is the production path; `reference` is a
// direct serial transcription of the definition kept for tests and the
// benchmark. Every omp kernel assigns each output element to exactly one
// thread and sums in a fixed order, so results do not depend on thread count.
namespace radcls::kernels {

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
};

std::size_t conv_out_dim(std::size_t in, std::size_t k, ConvGeometry g);

namespace omp {

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* bias, ConvGeometry g);
Tensor conv2d_backward_input(const Tensor& dy, const Tensor& w, const std::vector<std::size_t>& x_shape,
                             ConvGeometry g);
// Overwrites dw (and db when given) with the gradients for this batch.
void conv2d_backward_weight(const Tensor& dy, const Tensor& x, ConvGeometry g, Tensor& dw, Tensor* db);

}  // namespace omp

namespace reference {

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* bias, ConvGeometry g);
Tensor conv2d_backward_input(const Tensor& dy, const Tensor& w, const std::vector<std::size_t>& x_shape,
                             ConvGeometry g);
void conv2d_backward_weight(const Tensor& dy, const Tensor& x, ConvGeometry g, Tensor& dw, Tensor* db);

}  // namespace reference

using omp::conv2d_backward_input;
using omp::conv2d_backward_weight;
using omp::conv2d_forward;

}  // namespace radcls::kernels
