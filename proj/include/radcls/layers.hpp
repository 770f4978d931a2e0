#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "radcls/kernels/conv.hpp"
#include "radcls/tensor.hpp"

namespace radcls {

// Parameters, buffers and gradients are all keyed by a stable dotted path,
// e.g. "stage0.block1.cbam.channel.fc1.weight".
using TensorMap = std::map<std::string, Tensor>;

// Lookup that fails with a ShapeError naming the missing path.
const Tensor& get_tensor(const TensorMap& m, const std::string& path);
Tensor& get_tensor(TensorMap& m, const std::string& path);
// Adds `delta` into grads[path], creating a zero tensor of the same shape first.
void accumulate(TensorMap& grads, const std::string& path, const Tensor& delta);

double sigmoid(double z);

// --- convolution (weights at <path>.weight, optional <path>.bias) ---
struct ConvCache {
  Tensor input;
};
Tensor conv_forward(const TensorMap& p, const std::string& path, const Tensor& x, kernels::ConvGeometry g,
                    bool has_bias, ConvCache* cache);
Tensor conv_backward(const TensorMap& p, const std::string& path, const Tensor& dy, const ConvCache& cache,
                     kernels::ConvGeometry g, bool has_bias, TensorMap* grads);

// --- batch normalization over (N, H, W) per channel ---
// <path>.gamma/.beta are trainable; <path>.running_mean/.running_var are buffers.
struct BnCache {
  Tensor xhat;
  std::vector<double> inv_std;
  bool training = false;
  std::vector<double> batch_mean;
  std::vector<double> batch_var;  // unbiased, for running-stat updates
};
Tensor bn_forward(const TensorMap& p, const TensorMap& buffers, const std::string& path, const Tensor& x,
                  bool training, double eps, BnCache* cache);
Tensor bn_backward(const TensorMap& p, const std::string& path, const Tensor& dy, const BnCache& cache,
                   TensorMap* grads);

Tensor relu(const Tensor& x);
// Gradient through ReLU given its output.
Tensor relu_backward(const Tensor& dy, const Tensor& out);

struct PoolCache {
  std::vector<std::size_t> in_shape;
  std::vector<std::size_t> argmax;
};
Tensor maxpool_forward(const Tensor& x, int k, int stride, int pad, PoolCache* cache);
Tensor maxpool_backward(const Tensor& dy, const PoolCache& cache);

// (N, C, H, W) -> (N, C)
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& dy, const std::vector<std::size_t>& in_shape);

// y = x W^T + b with W of shape (out, in).
Tensor linear_forward(const TensorMap& p, const std::string& path, const Tensor& x);
Tensor linear_backward(const TensorMap& p, const std::string& path, const Tensor& dy, const Tensor& x,
                       TensorMap* grads);

// Inverted dropout; mask holds 0 or 1/(1-p).
Tensor dropout_forward(const Tensor& x, double p, std::uint64_t seed, Tensor* mask);

}  // namespace radcls
