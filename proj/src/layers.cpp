#include "radcls/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "radcls/errors.hpp"
#include "radcls/rng.hpp"

namespace radcls {

const Tensor& get_tensor(const TensorMap& m, const std::string& path) {
  auto it = m.find(path);
  if (it == m.end()) throw ShapeError("missing tensor '" + path + "'");
  return it->second;
}

Tensor& get_tensor(TensorMap& m, const std::string& path) {
  auto it = m.find(path);
  if (it == m.end()) throw ShapeError("missing tensor '" + path + "'");
  return it->second;
}

void accumulate(TensorMap& grads, const std::string& path, const Tensor& delta) {
  auto [it, inserted] = grads.try_emplace(path, delta);
  if (inserted) return;
  if (!it->second.same_shape(delta)) throw ShapeError(path + ": gradient shape mismatch");
  for (std::size_t i = 0; i < delta.size(); ++i) it->second[i] += delta[i];
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Tensor conv_forward(const TensorMap& p, const std::string& path, const Tensor& x, kernels::ConvGeometry g,
                    bool has_bias, ConvCache* cache) {
  const Tensor& w = get_tensor(p, path + ".weight");
  if (x.rank() != 4 || x.C() != w.dim(1))
    throw ShapeError(path + ": input " + shape_string(x.shape()) + " does not match weight " +
                     shape_string(w.shape()));
  const Tensor* b = has_bias ? &get_tensor(p, path + ".bias") : nullptr;
  if (cache) cache->input = x;
  return kernels::conv2d_forward(x, w, b, g);
}

Tensor conv_backward(const TensorMap& p, const std::string& path, const Tensor& dy, const ConvCache& cache,
                     kernels::ConvGeometry g, bool has_bias, TensorMap* grads) {
  const Tensor& w = get_tensor(p, path + ".weight");
  if (grads) {
    Tensor dw(w.shape());
    Tensor db(has_bias ? std::vector<std::size_t>{w.dim(0)} : std::vector<std::size_t>{0});
    kernels::conv2d_backward_weight(dy, cache.input, g, dw, has_bias ? &db : nullptr);
    accumulate(*grads, path + ".weight", dw);
    if (has_bias) accumulate(*grads, path + ".bias", db);
  }
  return kernels::conv2d_backward_input(dy, w, cache.input.shape(), g);
}

Tensor bn_forward(const TensorMap& p, const TensorMap& buffers, const std::string& path, const Tensor& x,
                  bool training, double eps, BnCache* cache) {
  const Tensor& gamma = get_tensor(p, path + ".gamma");
  const Tensor& beta = get_tensor(p, path + ".beta");
  const std::size_t N = x.N(), C = x.C(), HW = x.H() * x.W();
  if (gamma.size() != C) throw ShapeError(path + ": expected " + std::to_string(gamma.size()) + " channels, got " +
                                          std::to_string(C));
  std::vector<double> mean(C), var(C);
  BnCache local;
  BnCache& c = cache ? *cache : local;
  c.training = training;
  if (training) {
    const double M = static_cast<double>(N * HW);
    c.batch_mean.assign(C, 0.0);
    c.batch_var.assign(C, 0.0);
    for (std::size_t ch = 0; ch < C; ++ch) {
      double s = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* src = x.data() + (n * C + ch) * HW;
        for (std::size_t i = 0; i < HW; ++i) s += src[i];
      }
      mean[ch] = s / M;
      double v = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* src = x.data() + (n * C + ch) * HW;
        for (std::size_t i = 0; i < HW; ++i) v += (src[i] - mean[ch]) * (src[i] - mean[ch]);
      }
      var[ch] = v / M;
      c.batch_mean[ch] = mean[ch];
      c.batch_var[ch] = M > 1 ? v / (M - 1) : var[ch];
    }
  } else {
    const Tensor& rm = get_tensor(buffers, path + ".running_mean");
    const Tensor& rv = get_tensor(buffers, path + ".running_var");
    for (std::size_t ch = 0; ch < C; ++ch) {
      mean[ch] = rm[ch];
      var[ch] = rv[ch];
    }
  }
  Tensor y(x.shape());
  c.xhat = Tensor(x.shape());
  c.inv_std.assign(C, 0.0);
  for (std::size_t ch = 0; ch < C; ++ch) {
    const double inv = 1.0 / std::sqrt(var[ch] + eps);
    c.inv_std[ch] = inv;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + ch) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        const double xh = (x[off + i] - mean[ch]) * inv;
        c.xhat[off + i] = xh;
        y[off + i] = gamma[ch] * xh + beta[ch];
      }
    }
  }
  return y;
}

Tensor bn_backward(const TensorMap& p, const std::string& path, const Tensor& dy, const BnCache& c,
                   TensorMap* grads) {
  const Tensor& gamma = get_tensor(p, path + ".gamma");
  const std::size_t N = dy.N(), C = dy.C(), HW = dy.H() * dy.W();
  const double M = static_cast<double>(N * HW);
  Tensor dx(dy.shape());
  Tensor dgamma({C}), dbeta({C});
  for (std::size_t ch = 0; ch < C; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + ch) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        sum_dy += dy[off + i];
        sum_dy_xhat += dy[off + i] * c.xhat[off + i];
      }
    }
    dgamma[ch] = sum_dy_xhat;
    dbeta[ch] = sum_dy;
    const double g = gamma[ch] * c.inv_std[ch];
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + ch) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        if (c.training)
          dx[off + i] = g * (dy[off + i] - sum_dy / M - c.xhat[off + i] * sum_dy_xhat / M);
        else
          dx[off + i] = g * dy[off + i];
      }
    }
  }
  if (grads) {
    accumulate(*grads, path + ".gamma", dgamma);
    accumulate(*grads, path + ".beta", dbeta);
  }
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.storage()) v = v > 0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& dy, const Tensor& out) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(out[i] > 0)) dx[i] = 0.0;
  return dx;
}

Tensor maxpool_forward(const Tensor& x, int k, int stride, int pad, PoolCache* cache) {
  const long N = x.N(), C = x.C(), H = x.H(), W = x.W();
  const long OH = (H + 2 * pad - k) / stride + 1, OW = (W + 2 * pad - k) / stride + 1;
  Tensor y({std::size_t(N), std::size_t(C), std::size_t(OH), std::size_t(OW)});
  if (cache) {
    cache->in_shape = x.shape();
    cache->argmax.assign(y.size(), 0);
  }
  for (long nc = 0; nc < N * C; ++nc) {
    const double* in = x.data() + nc * H * W;
    for (long oh = 0; oh < OH; ++oh)
      for (long ow = 0; ow < OW; ++ow) {
        double best = -std::numeric_limits<double>::infinity();
        long best_i = -1;
        for (long kh = 0; kh < k; ++kh)
          for (long kw = 0; kw < k; ++kw) {
            const long ih = oh * stride - pad + kh, iw = ow * stride - pad + kw;
            if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
            if (in[ih * W + iw] > best) {
              best = in[ih * W + iw];
              best_i = ih * W + iw;
            }
          }
        const std::size_t o = (nc * OH + oh) * OW + ow;
        y[o] = best;
        if (cache) cache->argmax[o] = nc * H * W + best_i;
      }
  }
  return y;
}

Tensor maxpool_backward(const Tensor& dy, const PoolCache& cache) {
  Tensor dx(cache.in_shape);
  for (std::size_t o = 0; o < dy.size(); ++o) dx[cache.argmax[o]] += dy[o];
  return dx;
}

Tensor global_avg_pool(const Tensor& x) {
  const std::size_t N = x.N(), C = x.C(), HW = x.H() * x.W();
  Tensor y({N, C});
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    double s = 0.0;
    for (std::size_t i = 0; i < HW; ++i) s += x[nc * HW + i];
    y[nc] = s / static_cast<double>(HW);
  }
  return y;
}

Tensor global_avg_pool_backward(const Tensor& dy, const std::vector<std::size_t>& in_shape) {
  Tensor dx(in_shape);
  const std::size_t HW = in_shape[2] * in_shape[3];
  for (std::size_t nc = 0; nc < dy.size(); ++nc)
    for (std::size_t i = 0; i < HW; ++i) dx[nc * HW + i] = dy[nc] / static_cast<double>(HW);
  return dx;
}

Tensor linear_forward(const TensorMap& p, const std::string& path, const Tensor& x) {
  const Tensor& w = get_tensor(p, path + ".weight");
  const Tensor& b = get_tensor(p, path + ".bias");
  const std::size_t N = x.dim(0), in = w.dim(1), out = w.dim(0);
  if (x.size() != N * in)
    throw ShapeError(path + ": input " + shape_string(x.shape()) + " does not match weight " +
                     shape_string(w.shape()));
  Tensor y({N, out});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[n * in + i];
      y[n * out + o] = acc;
    }
  return y;
}

Tensor linear_backward(const TensorMap& p, const std::string& path, const Tensor& dy, const Tensor& x,
                       TensorMap* grads) {
  const Tensor& w = get_tensor(p, path + ".weight");
  const std::size_t N = dy.dim(0), in = w.dim(1), out = w.dim(0);
  Tensor dx(x.shape());
  Tensor dw(w.shape()), db({out});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < out; ++o) {
      const double d = dy[n * out + o];
      db[o] += d;
      for (std::size_t i = 0; i < in; ++i) {
        dw[o * in + i] += d * x[n * in + i];
        dx[n * in + i] += d * w[o * in + i];
      }
    }
  if (grads) {
    accumulate(*grads, path + ".weight", dw);
    accumulate(*grads, path + ".bias", db);
  }
  return dx;
}

Tensor dropout_forward(const Tensor& x, double p, std::uint64_t seed, Tensor* mask) {
  Tensor m(x.shape(), 1.0);
  if (p > 0.0) {
    Rng rng(seed);
    const double keep = 1.0 / (1.0 - p);
    for (double& v : m.storage()) v = rng.bernoulli(p) ? 0.0 : keep;
  }
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= m[i];
  if (mask) *mask = std::move(m);
  return y;
}

}  // namespace radcls
