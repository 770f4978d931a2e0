#include "radcls/model.hpp"

#include <algorithm>
#include <cmath>

#include "radcls/errors.hpp"
#include "radcls/rng.hpp"

namespace radcls {

namespace {

std::string block_path(int s, int b) { return "stage" + std::to_string(s) + ".block" + std::to_string(b); }

struct BlockShape {
  int in_channels;
  int mid_channels;
  int out_channels;
  int stride;
  bool downsample;
};

BlockShape block_shape(const ModelConfig& cfg, int s, int b) {
  BlockShape bs{};
  bs.in_channels = b > 0 ? cfg.stage_channels[s] : (s == 0 ? cfg.stem_channels : cfg.stage_channels[s - 1]);
  bs.out_channels = cfg.stage_channels[s];
  bs.mid_channels = bs.out_channels / kBottleneckExpansion;
  bs.stride = (s > 0 && b == 0) ? 2 : 1;
  bs.downsample = bs.stride != 1 || bs.in_channels != bs.out_channels;
  return bs;
}

// Calls fn(path, shape, fan_in, is_conv) for every trainable tensor, and
// bn(path, channels) for every normalization layer.
template <typename ParamFn, typename BnFn>
void for_each_layer(const ModelConfig& cfg, ParamFn fn, BnFn bn) {
  auto conv = [&](const std::string& path, int cout, int cin, int k) {
    fn(path + ".weight", std::vector<std::size_t>{std::size_t(cout), std::size_t(cin), std::size_t(k), std::size_t(k)},
       cin * k * k, true);
  };
  conv("stem.conv", cfg.stem_channels, 1, cfg.stem_kernel);
  bn("stem.bn", cfg.stem_channels);
  for (int s = 0; s < static_cast<int>(cfg.stage_block_counts.size()); ++s) {
    for (int b = 0; b < cfg.stage_block_counts[s]; ++b) {
      const BlockShape bs = block_shape(cfg, s, b);
      const std::string p = block_path(s, b);
      conv(p + ".conv1", bs.mid_channels, bs.in_channels, 1);
      bn(p + ".bn1", bs.mid_channels);
      conv(p + ".conv2", bs.mid_channels, bs.mid_channels, 3);
      bn(p + ".bn2", bs.mid_channels);
      conv(p + ".conv3", bs.out_channels, bs.mid_channels, 1);
      bn(p + ".bn3", bs.out_channels);
      if (cfg.has_cbam(s, b)) {
        const std::size_t C = bs.out_channels, hid = C / cfg.cbam.reduction_ratio;
        const std::size_t k = cfg.cbam.spatial_kernel;
        fn(p + ".cbam.channel.fc1.weight", std::vector<std::size_t>{hid, C}, int(C), false);
        fn(p + ".cbam.channel.fc1.bias", std::vector<std::size_t>{hid}, int(C), false);
        fn(p + ".cbam.channel.fc2.weight", std::vector<std::size_t>{C, hid}, int(hid), false);
        fn(p + ".cbam.channel.fc2.bias", std::vector<std::size_t>{C}, int(hid), false);
        fn(p + ".cbam.spatial.conv.weight", std::vector<std::size_t>{1, 2, k, k}, int(2 * k * k), false);
        fn(p + ".cbam.spatial.conv.bias", std::vector<std::size_t>{1}, int(2 * k * k), false);
      }
      if (bs.downsample) {
        conv(p + ".down.conv", bs.out_channels, bs.in_channels, 1);
        bn(p + ".down.bn", bs.out_channels);
      }
    }
  }
  const std::size_t feat = cfg.stage_channels.back();
  fn("head.fc.weight", std::vector<std::size_t>{std::size_t(kNumClasses), feat}, int(feat), false);
  fn("head.fc.bias", std::vector<std::size_t>{std::size_t(kNumClasses)}, int(feat), false);
}

}  // namespace

ModelConfig ModelConfig::resnet50() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.stage_block_counts = {1, 1};
  c.stage_channels = {16, 32};
  c.stem_channels = 8;
  c.cbam.reduction_ratio = 4;
  c.input_size = 64;
  return c;
}

bool ModelConfig::has_cbam(int stage, int block) const {
  return cbam_per_block || block == stage_block_counts[stage] - 1;
}

void ModelConfig::validate() const {
  if (stage_block_counts.empty()) throw ConfigError("model: stage_block_counts must not be empty");
  if (stage_block_counts.size() != stage_channels.size())
    throw ConfigError("model: stage_block_counts and stage_channels must have the same length");
  for (int n : stage_block_counts)
    if (n < 1) throw ConfigError("model: every stage needs at least one block");
  for (int c : stage_channels) {
    if (c < kBottleneckExpansion || c % kBottleneckExpansion != 0)
      throw ConfigError("model: stage channels must be positive multiples of " + std::to_string(kBottleneckExpansion));
    if (cbam.reduction_ratio < 1 || c % cbam.reduction_ratio != 0)
      throw ConfigError("model: cbam.reduction_ratio " + std::to_string(cbam.reduction_ratio) + " does not divide " +
                        std::to_string(c) + " channels");
  }
  if (cbam.spatial_kernel < 1 || cbam.spatial_kernel % 2 == 0)
    throw ConfigError("model: cbam.spatial_kernel must be odd and positive");
  if (stem_channels < 1) throw ConfigError("model: stem_channels must be positive");
  if (stem_kernel < 1 || stem_kernel % 2 == 0) throw ConfigError("model: stem_kernel must be odd and positive");
  if (stem_stride < 1) throw ConfigError("model: stem_stride must be positive");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("model: dropout_p must be in [0,1)");
  if (input_size < 1) throw ConfigError("model: input_size must be positive");
  long size = (input_size + 2 * (stem_kernel / 2) - stem_kernel) / stem_stride + 1;
  if (stem_pool) size = (size + 2 - 3) / 2 + 1;
  for (std::size_t s = 1; s < stage_channels.size(); ++s) size = (size + 2 - 3) / 2 + 1;
  if (size < 1) throw ConfigError("model: input_size " + std::to_string(input_size) + " is too small for the network");
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [k, t] : params) n += t.size();
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto& [k, t] : params)
    if (!t.all_finite()) return false;
  for (const auto& [k, t] : buffers)
    if (!t.all_finite()) return false;
  return true;
}

ModelParams init_params(const ModelConfig& cfg_in, std::uint64_t seed) {
  ModelConfig cfg = cfg_in;
  cfg.num_classes = kNumClasses;
  cfg.validate();
  ModelParams mp;
  std::uint64_t index = 0;
  for_each_layer(
      cfg,
      [&](const std::string& path, const std::vector<std::size_t>& shape, int fan_in, bool is_conv) {
        Tensor t(shape);
        const double bound = is_conv ? std::sqrt(6.0 / fan_in) : 1.0 / std::sqrt(static_cast<double>(fan_in));
        Rng rng(derive_seed(seed, {index++}));
        for (double& v : t.storage()) v = rng.uniform(-bound, bound);
        mp.params.emplace(path, std::move(t));
      },
      [&](const std::string& path, int channels) {
        const std::size_t c = channels;
        mp.params.emplace(path + ".gamma", Tensor({c}, 1.0));
        mp.params.emplace(path + ".beta", Tensor({c}, 0.0));
        mp.buffers.emplace(path + ".running_mean", Tensor({c}, 0.0));
        mp.buffers.emplace(path + ".running_var", Tensor({c}, 1.0));
      });
  return mp;
}

std::vector<std::string> feature_layer_paths(const ModelConfig& cfg) {
  std::vector<std::string> out{"stem"};
  for (int s = 0; s < static_cast<int>(cfg.stage_block_counts.size()); ++s)
    for (int b = 0; b < cfg.stage_block_counts[s]; ++b) out.push_back(block_path(s, b));
  return out;
}

std::string default_cam_layer(const ModelConfig& cfg) { return feature_layer_paths(cfg).back(); }

const Tensor& ForwardTrace::activation(const std::string& layer_path) const {
  if (layer_path == "stem") return stem_out;
  for (std::size_t s = 0; s < blocks.size(); ++s)
    for (std::size_t b = 0; b < blocks[s].size(); ++b)
      if (layer_path == block_path(int(s), int(b))) return blocks[s][b].output;
  throw ArgumentError("unknown layer path '" + layer_path + "'");
}

namespace {

Tensor conv_bn(const ModelParams& p, const ModelConfig& cfg, const std::string& conv_path, const std::string& bn_path,
               const Tensor& x, kernels::ConvGeometry g, bool training, ConvBnCache& cache) {
  const Tensor y = conv_forward(p.params, conv_path, x, g, false, &cache.conv);
  return bn_forward(p.params, p.buffers, bn_path, y, training, cfg.bn_eps, &cache.bn);
}

Tensor conv_bn_backward(const ModelParams& p, const std::string& conv_path, const std::string& bn_path,
                        const Tensor& dy, kernels::ConvGeometry g, const ConvBnCache& cache, TensorMap* grads) {
  const Tensor d = bn_backward(p.params, bn_path, dy, cache.bn, grads);
  return conv_backward(p.params, conv_path, d, cache.conv, g, false, grads);
}

}  // namespace

Tensor forward(const ModelParams& p, const ModelConfig& cfg, const Tensor& batch, const ForwardOptions& opts,
               ForwardTrace* trace_out) {
  const std::size_t S = cfg.input_size;
  if (batch.rank() != 4 || batch.N() < 1 || batch.C() != 1 || batch.H() != S || batch.W() != S)
    throw ShapeError("input: expected (N,1," + std::to_string(S) + "," + std::to_string(S) + "), got " +
                     shape_string(batch.shape()));
  for_each_layer(
      cfg,
      [&](const std::string& path, const std::vector<std::size_t>& shape, int, bool) {
        expect_shape(get_tensor(p.params, path), shape, path);
      },
      [&](const std::string& path, int channels) {
        const std::vector<std::size_t> shape{static_cast<std::size_t>(channels)};
        for (const char* leaf : {".gamma", ".beta"}) expect_shape(get_tensor(p.params, path + leaf), shape, path + leaf);
        for (const char* leaf : {".running_mean", ".running_var"})
          expect_shape(get_tensor(p.buffers, path + leaf), shape, path + leaf);
      });
  ForwardTrace local;
  ForwardTrace& t = trace_out ? *trace_out : local;
  const bool train = opts.training;

  Tensor x = conv_bn(p, cfg, "stem.conv", "stem.bn", batch, {cfg.stem_stride, cfg.stem_kernel / 2}, train, t.stem);
  t.stem_relu = relu(x);
  if (cfg.stem_pool) {
    t.stem_pool.emplace();
    x = maxpool_forward(t.stem_relu, 3, 2, 1, &*t.stem_pool);
  } else {
    t.stem_pool.reset();
    x = t.stem_relu;
  }
  t.stem_out = x;

  t.blocks.assign(cfg.stage_block_counts.size(), {});
  for (int s = 0; s < static_cast<int>(cfg.stage_block_counts.size()); ++s) {
    t.blocks[s].resize(cfg.stage_block_counts[s]);
    for (int b = 0; b < cfg.stage_block_counts[s]; ++b) {
      const BlockShape bs = block_shape(cfg, s, b);
      const std::string path = block_path(s, b);
      BlockTrace& bt = t.blocks[s][b];
      Tensor y = conv_bn(p, cfg, path + ".conv1", path + ".bn1", x, {1, 0}, train, bt.c1);
      bt.relu1 = relu(y);
      y = conv_bn(p, cfg, path + ".conv2", path + ".bn2", bt.relu1, {bs.stride, 1}, train, bt.c2);
      bt.relu2 = relu(y);
      y = conv_bn(p, cfg, path + ".conv3", path + ".bn3", bt.relu2, {1, 0}, train, bt.c3);
      if (cfg.has_cbam(s, b)) {
        bt.cbam.emplace();
        y = cbam_apply(y, p.params, path + ".cbam", cfg.cbam, &*bt.cbam);
      } else {
        bt.cbam.reset();
      }
      Tensor shortcut;
      if (bs.downsample) {
        bt.down.emplace();
        shortcut = conv_bn(p, cfg, path + ".down.conv", path + ".down.bn", x, {bs.stride, 0}, train, *bt.down);
      } else {
        bt.down.reset();
        shortcut = x;
      }
      if (!y.same_shape(shortcut))
        throw ShapeError(path + ": residual " + shape_string(y.shape()) + " does not match shortcut " +
                         shape_string(shortcut.shape()));
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += shortcut[i];
      bt.output = relu(y);
      x = bt.output;
    }
  }

  t.pooled = global_avg_pool(x);
  if (train && cfg.dropout_p > 0.0) {
    t.features = dropout_forward(t.pooled, cfg.dropout_p, opts.dropout_seed, &t.dropout_mask);
  } else {
    t.features = t.pooled;
    t.dropout_mask = Tensor();
  }
  t.logits = linear_forward(p.params, "head.fc", t.features);
  return t.logits;
}

BackwardResult backward(const ModelParams& p, const ModelConfig& cfg, const ForwardTrace& t, const Tensor& dlogits,
                        const BackwardOptions& opts) {
  BackwardResult r;
  TensorMap* grads = opts.param_grads ? &r.grads : nullptr;
  if (opts.capture_layer) {
    const auto paths = feature_layer_paths(cfg);
    if (std::find(paths.begin(), paths.end(), *opts.capture_layer) == paths.end()) {
      std::string valid;
      for (const auto& s : paths) valid += (valid.empty() ? "" : ", ") + s;
      throw ArgumentError("unknown layer path '" + *opts.capture_layer + "'; valid paths: " + valid);
    }
  }
  auto capture = [&](const std::string& path, const Tensor& g) {
    if (opts.capture_layer && *opts.capture_layer == path) r.captured = g;
  };

  expect_shape(dlogits, t.logits.shape(), "head.fc output gradient");
  Tensor d = linear_backward(p.params, "head.fc", dlogits, t.features, grads);
  if (t.dropout_mask.size() == d.size())
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= t.dropout_mask[i];
  const Tensor& last = t.blocks.back().back().output;
  d = global_avg_pool_backward(d, last.shape());

  for (int s = static_cast<int>(t.blocks.size()) - 1; s >= 0; --s) {
    for (int b = static_cast<int>(t.blocks[s].size()) - 1; b >= 0; --b) {
      const BlockShape bs = block_shape(cfg, s, b);
      const std::string path = block_path(s, b);
      const BlockTrace& bt = t.blocks[s][b];
      capture(path, d);
      const Tensor dsum = relu_backward(d, bt.output);

      Tensor dbranch = dsum;
      if (bt.cbam) dbranch = cbam_backward(dbranch, p.params, path + ".cbam", *bt.cbam, grads);
      dbranch = conv_bn_backward(p, path + ".conv3", path + ".bn3", dbranch, {1, 0}, bt.c3, grads);
      dbranch = relu_backward(dbranch, bt.relu2);
      dbranch = conv_bn_backward(p, path + ".conv2", path + ".bn2", dbranch, {bs.stride, 1}, bt.c2, grads);
      dbranch = relu_backward(dbranch, bt.relu1);
      dbranch = conv_bn_backward(p, path + ".conv1", path + ".bn1", dbranch, {1, 0}, bt.c1, grads);

      if (bt.down) {
        const Tensor dshort =
            conv_bn_backward(p, path + ".down.conv", path + ".down.bn", dsum, {bs.stride, 0}, *bt.down, grads);
        for (std::size_t i = 0; i < dbranch.size(); ++i) dbranch[i] += dshort[i];
      } else {
        for (std::size_t i = 0; i < dbranch.size(); ++i) dbranch[i] += dsum[i];
      }
      d = std::move(dbranch);
    }
  }

  capture("stem", d);
  if (t.stem_pool) d = maxpool_backward(d, *t.stem_pool);
  d = relu_backward(d, t.stem_relu);
  conv_bn_backward(p, "stem.conv", "stem.bn", d, {cfg.stem_stride, cfg.stem_kernel / 2}, t.stem, grads);
  return r;
}

void update_running_stats(ModelParams& p, const ModelConfig& cfg, const ForwardTrace& t) {
  auto update = [&](const std::string& path, const BnCache& c) {
    if (!c.training) return;
    Tensor& rm = get_tensor(p.buffers, path + ".running_mean");
    Tensor& rv = get_tensor(p.buffers, path + ".running_var");
    const double m = cfg.bn_momentum;
    for (std::size_t i = 0; i < rm.size(); ++i) {
      rm[i] = (1 - m) * rm[i] + m * c.batch_mean[i];
      rv[i] = (1 - m) * rv[i] + m * c.batch_var[i];
    }
  };
  update("stem.bn", t.stem.bn);
  for (std::size_t s = 0; s < t.blocks.size(); ++s)
    for (std::size_t b = 0; b < t.blocks[s].size(); ++b) {
      const std::string path = block_path(int(s), int(b));
      const BlockTrace& bt = t.blocks[s][b];
      update(path + ".bn1", bt.c1.bn);
      update(path + ".bn2", bt.c2.bn);
      update(path + ".bn3", bt.c3.bn);
      if (bt.down) update(path + ".down.bn", bt.down->bn);
    }
}

}  // namespace radcls
