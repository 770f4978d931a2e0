#pragma once

#include <string>
#include <vector>

#include "radcls/layers.hpp"
#include "radcls/tensor.hpp"

namespace radcls {

struct CbamConfig {
  int reduction_ratio = 16;
  int spatial_kernel = 7;
  friend bool operator==(const CbamConfig&, const CbamConfig&) = default;
};

// Channel attention reads <prefix>.fc1.{weight,bias} (C/r x C, C/r) and
// <prefix>.fc2.{weight,bias} (C x C/r, C): the shared MLP applied to the
// spatial average and spatial maximum of every channel.
struct ChannelAttentionCache {
  std::vector<std::size_t> input_shape;
  std::vector<double> avg, max;         // (N*C)
  std::vector<std::size_t> argmax;      // flat index into input
  std::vector<double> hid_avg, hid_max; // pre-ReLU hidden, (N*C/r)
  Tensor attention;                     // (N, C, 1, 1)
};

Tensor channel_attention(const Tensor& F, const TensorMap& params, const std::string& prefix, int reduction_ratio,
                         ChannelAttentionCache* cache = nullptr);
// Returns dL/dF for an upstream gradient on the (N, C, 1, 1) attention.
Tensor channel_attention_backward(const Tensor& d_att, const TensorMap& params, const std::string& prefix,
                                  const ChannelAttentionCache& cache, TensorMap* grads);

// Spatial attention reads <prefix>.conv.{weight,bias} of shape (1, 2, k, k)
// and (1): a same-padded convolution over the channel-wise [mean; max] maps.
struct SpatialAttentionCache {
  std::vector<std::size_t> input_shape;
  std::vector<std::size_t> argmax_channel;  // (N*H*W)
  ConvCache conv;
  Tensor attention;  // (N, 1, H, W)
};

Tensor spatial_attention(const Tensor& F, const TensorMap& params, const std::string& prefix, int kernel,
                         SpatialAttentionCache* cache = nullptr);
Tensor spatial_attention_backward(const Tensor& d_att, const TensorMap& params, const std::string& prefix,
                                  const SpatialAttentionCache& cache, TensorMap* grads);

// F' = Mc(F) * F, F'' = Ms(F') * F'. Parameters under <prefix>.channel and
// <prefix>.spatial.
struct CbamCache {
  Tensor input;
  Tensor refined;  // F'
  ChannelAttentionCache channel;
  SpatialAttentionCache spatial;
};

Tensor cbam_apply(const Tensor& F, const TensorMap& params, const std::string& prefix, const CbamConfig& cfg,
                  CbamCache* cache = nullptr);
Tensor cbam_backward(const Tensor& dy, const TensorMap& params, const std::string& prefix, const CbamCache& cache,
                     TensorMap* grads);

}  // namespace radcls
