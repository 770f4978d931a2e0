#include "radcls/attention.hpp"

#include <algorithm>
#include <limits>

#include "radcls/errors.hpp"

namespace radcls {

namespace {

// h = W v + b for W (out x in).
void mat_vec(const Tensor& w, const Tensor& b, const double* v, double* out) {
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = b[r];
    for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * v[c];
    out[r] = acc;
  }
}

// Sum of the values in sorted order, so any permutation of the inputs gives
// the bit-identical result.
double ordered_sum(std::vector<double>& scratch) {
  std::sort(scratch.begin(), scratch.end());
  double s = 0.0;
  for (double v : scratch) s += v;
  return s;
}

}  // namespace

Tensor channel_attention(const Tensor& F, const TensorMap& params, const std::string& prefix, int reduction_ratio,
                         ChannelAttentionCache* cache) {
  if (F.rank() != 4) throw ShapeError(prefix + ": channel attention expects a rank-4 feature map");
  const std::size_t N = F.N(), C = F.C(), HW = F.H() * F.W();
  if (reduction_ratio < 1 || C % static_cast<std::size_t>(reduction_ratio) != 0)
    throw ConfigError(prefix + ": reduction ratio " + std::to_string(reduction_ratio) + " does not divide " +
                      std::to_string(C) + " channels");
  const std::size_t hidden = C / reduction_ratio;
  const Tensor& w1 = get_tensor(params, prefix + ".fc1.weight");
  const Tensor& b1 = get_tensor(params, prefix + ".fc1.bias");
  const Tensor& w2 = get_tensor(params, prefix + ".fc2.weight");
  const Tensor& b2 = get_tensor(params, prefix + ".fc2.bias");
  expect_shape(w1, {hidden, C}, prefix + ".fc1.weight");
  expect_shape(b1, {hidden}, prefix + ".fc1.bias");
  expect_shape(w2, {C, hidden}, prefix + ".fc2.weight");
  expect_shape(b2, {C}, prefix + ".fc2.bias");

  ChannelAttentionCache local;
  ChannelAttentionCache& c = cache ? *cache : local;
  c.input_shape = F.shape();
  c.avg.assign(N * C, 0.0);
  c.max.assign(N * C, 0.0);
  c.argmax.assign(N * C, 0);
  std::vector<double> scratch(HW);
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const double* src = F.data() + nc * HW;
    double m = -std::numeric_limits<double>::infinity();
    std::size_t mi = 0;
    for (std::size_t i = 0; i < HW; ++i) {
      scratch[i] = src[i];
      if (src[i] > m) {
        m = src[i];
        mi = i;
      }
    }
    c.avg[nc] = ordered_sum(scratch) / static_cast<double>(HW);
    c.max[nc] = m;
    c.argmax[nc] = nc * HW + mi;
  }

  c.hid_avg.assign(N * hidden, 0.0);
  c.hid_max.assign(N * hidden, 0.0);
  c.attention = Tensor({N, C, 1, 1});
  std::vector<double> r_avg(hidden), r_max(hidden), o_avg(C), o_max(C);
  for (std::size_t n = 0; n < N; ++n) {
    double* ha = &c.hid_avg[n * hidden];
    double* hm = &c.hid_max[n * hidden];
    mat_vec(w1, b1, &c.avg[n * C], ha);
    mat_vec(w1, b1, &c.max[n * C], hm);
    for (std::size_t j = 0; j < hidden; ++j) {
      r_avg[j] = ha[j] > 0 ? ha[j] : 0.0;
      r_max[j] = hm[j] > 0 ? hm[j] : 0.0;
    }
    mat_vec(w2, b2, r_avg.data(), o_avg.data());
    mat_vec(w2, b2, r_max.data(), o_max.data());
    for (std::size_t ch = 0; ch < C; ++ch) c.attention[n * C + ch] = sigmoid(o_avg[ch] + o_max[ch]);
  }
  return c.attention;
}

Tensor channel_attention_backward(const Tensor& d_att, const TensorMap& params, const std::string& prefix,
                                  const ChannelAttentionCache& c, TensorMap* grads) {
  const Tensor& w1 = get_tensor(params, prefix + ".fc1.weight");
  const Tensor& w2 = get_tensor(params, prefix + ".fc2.weight");
  const std::size_t N = c.input_shape[0], C = c.input_shape[1], HW = c.input_shape[2] * c.input_shape[3];
  const std::size_t hidden = w1.dim(0);
  Tensor dw1(w1.shape()), db1({hidden}), dw2(w2.shape()), db2({C});
  Tensor dF(c.input_shape);
  std::vector<double> dz(C), dh_avg(hidden), dh_max(hidden);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t ch = 0; ch < C; ++ch) {
      const double a = c.attention[n * C + ch];
      dz[ch] = d_att[n * C + ch] * a * (1.0 - a);
    }
    const double* ha = &c.hid_avg[n * hidden];
    const double* hm = &c.hid_max[n * hidden];
    // Both MLP branches receive dz; fc2.bias enters the logit twice.
    for (std::size_t ch = 0; ch < C; ++ch) {
      db2[ch] += 2.0 * dz[ch];
      for (std::size_t j = 0; j < hidden; ++j)
        dw2[ch * hidden + j] += dz[ch] * ((ha[j] > 0 ? ha[j] : 0.0) + (hm[j] > 0 ? hm[j] : 0.0));
    }
    for (std::size_t j = 0; j < hidden; ++j) {
      double dr = 0.0;
      for (std::size_t ch = 0; ch < C; ++ch) dr += w2[ch * hidden + j] * dz[ch];
      dh_avg[j] = ha[j] > 0 ? dr : 0.0;
      dh_max[j] = hm[j] > 0 ? dr : 0.0;
      db1[j] += dh_avg[j] + dh_max[j];
      for (std::size_t ch = 0; ch < C; ++ch)
        dw1[j * C + ch] += dh_avg[j] * c.avg[n * C + ch] + dh_max[j] * c.max[n * C + ch];
    }
    for (std::size_t ch = 0; ch < C; ++ch) {
      double d_avg = 0.0, d_max = 0.0;
      for (std::size_t j = 0; j < hidden; ++j) {
        d_avg += w1[j * C + ch] * dh_avg[j];
        d_max += w1[j * C + ch] * dh_max[j];
      }
      double* dst = dF.data() + (n * C + ch) * HW;
      const double share = d_avg / static_cast<double>(HW);
      for (std::size_t i = 0; i < HW; ++i) dst[i] += share;
      dF[c.argmax[n * C + ch]] += d_max;
    }
  }
  if (grads) {
    accumulate(*grads, prefix + ".fc1.weight", dw1);
    accumulate(*grads, prefix + ".fc1.bias", db1);
    accumulate(*grads, prefix + ".fc2.weight", dw2);
    accumulate(*grads, prefix + ".fc2.bias", db2);
  }
  return dF;
}

Tensor spatial_attention(const Tensor& F, const TensorMap& params, const std::string& prefix, int kernel,
                         SpatialAttentionCache* cache) {
  if (F.rank() != 4) throw ShapeError(prefix + ": spatial attention expects a rank-4 feature map");
  if (kernel < 1 || kernel % 2 == 0)
    throw ConfigError(prefix + ": spatial kernel must be odd and positive, got " + std::to_string(kernel));
  const std::size_t N = F.N(), C = F.C(), H = F.H(), W = F.W(), HW = H * W;
  const std::size_t k = static_cast<std::size_t>(kernel);
  expect_shape(get_tensor(params, prefix + ".conv.weight"), {1, 2, k, k}, prefix + ".conv.weight");
  expect_shape(get_tensor(params, prefix + ".conv.bias"), {1}, prefix + ".conv.bias");

  SpatialAttentionCache local;
  SpatialAttentionCache& c = cache ? *cache : local;
  c.input_shape = F.shape();
  c.argmax_channel.assign(N * HW, 0);
  Tensor pooled({N, 2, H, W});
  std::vector<double> scratch(C);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < HW; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      std::size_t mc = 0;
      for (std::size_t ch = 0; ch < C; ++ch) {
        const double v = F[(n * C + ch) * HW + i];
        scratch[ch] = v;
        if (v > m) {
          m = v;
          mc = ch;
        }
      }
      pooled[(n * 2 + 0) * HW + i] = ordered_sum(scratch) / static_cast<double>(C);
      pooled[(n * 2 + 1) * HW + i] = m;
      c.argmax_channel[n * HW + i] = mc;
    }
  Tensor z = conv_forward(params, prefix + ".conv", pooled, {1, kernel / 2}, true, &c.conv);
  for (double& v : z.storage()) v = sigmoid(v);
  c.attention = z;
  return z;
}

Tensor spatial_attention_backward(const Tensor& d_att, const TensorMap& params, const std::string& prefix,
                                  const SpatialAttentionCache& c, TensorMap* grads) {
  const std::size_t N = c.input_shape[0], C = c.input_shape[1], HW = c.input_shape[2] * c.input_shape[3];
  const int k = static_cast<int>(get_tensor(params, prefix + ".conv.weight").dim(2));
  Tensor dz = d_att;
  for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= c.attention[i] * (1.0 - c.attention[i]);
  const Tensor dpooled = conv_backward(params, prefix + ".conv", dz, c.conv, {1, k / 2}, true, grads);
  Tensor dF(c.input_shape);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < HW; ++i) {
      const double d_mean = dpooled[(n * 2 + 0) * HW + i] / static_cast<double>(C);
      for (std::size_t ch = 0; ch < C; ++ch) dF[(n * C + ch) * HW + i] += d_mean;
      dF[(n * C + c.argmax_channel[n * HW + i]) * HW + i] += dpooled[(n * 2 + 1) * HW + i];
    }
  return dF;
}

Tensor cbam_apply(const Tensor& F, const TensorMap& params, const std::string& prefix, const CbamConfig& cfg,
                  CbamCache* cache) {
  CbamCache local;
  CbamCache& c = cache ? *cache : local;
  const std::size_t N = F.N(), C = F.C(), HW = F.H() * F.W();
  c.input = F;
  const Tensor mc = channel_attention(F, params, prefix + ".channel", cfg.reduction_ratio, &c.channel);
  c.refined = F;
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t i = 0; i < HW; ++i) c.refined[nc * HW + i] *= mc[nc];
  const Tensor ms = spatial_attention(c.refined, params, prefix + ".spatial", cfg.spatial_kernel, &c.spatial);
  Tensor out = c.refined;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t ch = 0; ch < C; ++ch)
      for (std::size_t i = 0; i < HW; ++i) out[(n * C + ch) * HW + i] *= ms[n * HW + i];
  return out;
}

Tensor cbam_backward(const Tensor& dy, const TensorMap& params, const std::string& prefix, const CbamCache& c,
                     TensorMap* grads) {
  const std::size_t N = dy.N(), C = dy.C(), HW = dy.H() * dy.W();
  const Tensor& ms = c.spatial.attention;
  const Tensor& mc = c.channel.attention;

  Tensor d_ms({N, 1, dy.H(), dy.W()});
  Tensor d_refined = dy;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t ch = 0; ch < C; ++ch)
      for (std::size_t i = 0; i < HW; ++i) {
        const std::size_t idx = (n * C + ch) * HW + i;
        d_ms[n * HW + i] += dy[idx] * c.refined[idx];
        d_refined[idx] *= ms[n * HW + i];
      }
  const Tensor d_from_spatial = spatial_attention_backward(d_ms, params, prefix + ".spatial", c.spatial, grads);
  for (std::size_t i = 0; i < d_refined.size(); ++i) d_refined[i] += d_from_spatial[i];

  Tensor d_mc({N, C, 1, 1});
  Tensor dF(c.input.shape());
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t i = 0; i < HW; ++i) {
      d_mc[nc] += d_refined[nc * HW + i] * c.input[nc * HW + i];
      dF[nc * HW + i] = d_refined[nc * HW + i] * mc[nc];
    }
  const Tensor d_from_channel = channel_attention_backward(d_mc, params, prefix + ".channel", c.channel, grads);
  for (std::size_t i = 0; i < dF.size(); ++i) dF[i] += d_from_channel[i];
  return dF;
}

}  // namespace radcls
