#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "radcls/attention.hpp"
#include "radcls/layers.hpp"
#include "radcls/tensor.hpp"

namespace radcls {

inline constexpr int kNumClasses = 2;
inline constexpr int kBottleneckExpansion = 4;

// Residual bottleneck backbone with CBAM on each block's transform branch.
// stage_channels are block output widths; the bottleneck width is a quarter
// of that. The first block of every stage after the first downsamples by 2.
struct ModelConfig {
  std::vector<int> stage_block_counts{3, 4, 6, 3};
  std::vector<int> stage_channels{256, 512, 1024, 2048};
  int stem_channels = 64;
  int stem_kernel = 7;
  int stem_stride = 2;
  bool stem_pool = true;
  int num_classes = kNumClasses;
  double dropout_p = 0.2;
  CbamConfig cbam;
  // When false CBAM only sits in the last block of each stage.
  bool cbam_per_block = true;
  int input_size = 512;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  static ModelConfig resnet50();
  // Two single-block stages on 64x64 inputs; well under 100k parameters.
  static ModelConfig tiny();

  // Throws ConfigError describing the first inconsistency.
  void validate() const;
  bool has_cbam(int stage, int block) const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ModelParams {
  TensorMap params;   // trainable
  TensorMap buffers;  // batch-norm running statistics

  std::size_t parameter_count() const;
  bool all_finite() const;
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Deterministic per (cfg, seed). Convolutions draw from U(-sqrt(6/fan_in),
// sqrt(6/fan_in)), linear layers from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
// num_classes is always 2 regardless of cfg.num_classes.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// Names of feature maps that can be captured for Grad-CAM: "stem" and
// "stage<s>.block<b>" (block outputs after the skip addition).
std::vector<std::string> feature_layer_paths(const ModelConfig& cfg);
std::string default_cam_layer(const ModelConfig& cfg);

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

struct ConvBnCache {
  ConvCache conv;
  BnCache bn;
};

struct BlockTrace {
  ConvBnCache c1, c2, c3;
  Tensor relu1, relu2;
  std::optional<CbamCache> cbam;
  std::optional<ConvBnCache> down;
  Tensor output;
};

struct ForwardTrace {
  ConvBnCache stem;
  Tensor stem_relu;
  std::optional<PoolCache> stem_pool;
  Tensor stem_out;
  std::vector<std::vector<BlockTrace>> blocks;
  Tensor pooled;
  Tensor dropout_mask;
  Tensor features;  // head input after dropout
  Tensor logits;

  const Tensor& activation(const std::string& layer_path) const;
};

// batch: (N, 1, input_size, input_size). Returns (N, 2) logits.
Tensor forward(const ModelParams& p, const ModelConfig& cfg, const Tensor& batch, const ForwardOptions& opts = {},
               ForwardTrace* trace = nullptr);

struct BackwardOptions {
  bool param_grads = true;
  // Capture dL/dA for this feature layer (see feature_layer_paths).
  std::optional<std::string> capture_layer;
};

struct BackwardResult {
  TensorMap grads;
  Tensor captured;
};

BackwardResult backward(const ModelParams& p, const ModelConfig& cfg, const ForwardTrace& trace,
                        const Tensor& dlogits, const BackwardOptions& opts = {});

// Exponential moving update of running statistics from a training-mode trace.
void update_running_stats(ModelParams& p, const ModelConfig& cfg, const ForwardTrace& trace);

}  // namespace radcls
