#include <algorithm>

#include "radcls/errors.hpp"
#include "radcls/kernels/conv.hpp"

namespace radcls::kernels {

std::size_t conv_out_dim(std::size_t in, std::size_t k, ConvGeometry g) {
  const long span = static_cast<long>(in) + 2L * g.pad - static_cast<long>(k);
  if (span < 0 || g.stride < 1) throw ShapeError("conv: kernel larger than padded input");
  return static_cast<std::size_t>(span / g.stride + 1);
}

namespace omp {

namespace {

// Range of output positions o with 0 <= o*stride - pad + k < in.
inline void valid_range(long in, long out, long k, ConvGeometry g, long& lo, long& hi) {
  const long s = g.stride;
  const long shift = k - g.pad;  // input index = o*s + shift
  lo = shift >= 0 ? 0 : (-shift + s - 1) / s;
  hi = (in - 1 - shift) < 0 ? 0 : (in - 1 - shift) / s + 1;
  hi = std::min(hi, out);
  lo = std::min(lo, hi);
}

void check_conv(const Tensor& x, const Tensor& w) {
  if (x.rank() != 4 || w.rank() != 4) throw ShapeError("conv: expected rank-4 input and weight");
  if (x.C() != w.dim(1))
    throw ShapeError("conv: input has " + std::to_string(x.C()) + " channels, weight expects " +
                     std::to_string(w.dim(1)));
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* bias, ConvGeometry g) {
  check_conv(x, w);
  const long N = x.N(), Ci = x.C(), H = x.H(), W = x.W();
  const long Co = w.dim(0), K = w.dim(2);
  const long OH = conv_out_dim(H, K, g), OW = conv_out_dim(W, K, g);
  Tensor y({std::size_t(N), std::size_t(Co), std::size_t(OH), std::size_t(OW)});
  const double* xd = x.data();
  const double* wd = w.data();
  double* yd = y.data();
  const long s = g.stride;

#pragma omp parallel for schedule(static)
  for (long nc = 0; nc < N * Co; ++nc) {
    const long n = nc / Co, co = nc % Co;
    double* out = yd + nc * OH * OW;
    const double b = bias ? (*bias)[co] : 0.0;
    std::fill(out, out + OH * OW, b);
    for (long ci = 0; ci < Ci; ++ci) {
      const double* in = xd + (n * Ci + ci) * H * W;
      const double* wk = wd + (co * Ci + ci) * K * K;
      for (long kh = 0; kh < K; ++kh) {
        long oh_lo, oh_hi;
        valid_range(H, OH, kh, g, oh_lo, oh_hi);
        for (long kw = 0; kw < K; ++kw) {
          const double wv = wk[kh * K + kw];
          long ow_lo, ow_hi;
          valid_range(W, OW, kw, g, ow_lo, ow_hi);
          for (long oh = oh_lo; oh < oh_hi; ++oh) {
            const double* row = in + (oh * s - g.pad + kh) * W;
            double* orow = out + oh * OW;
            for (long ow = ow_lo; ow < ow_hi; ++ow) orow[ow] += wv * row[ow * s + kw - g.pad];
          }
        }
      }
    }
  }
  return y;
}

Tensor conv2d_backward_input(const Tensor& dy, const Tensor& w, const std::vector<std::size_t>& x_shape,
                             ConvGeometry g) {
  const long N = x_shape[0], Ci = x_shape[1], H = x_shape[2], W = x_shape[3];
  const long Co = w.dim(0), K = w.dim(2);
  const long OH = dy.H(), OW = dy.W();
  Tensor dx(x_shape);
  const double* dyd = dy.data();
  const double* wd = w.data();
  double* dxd = dx.data();
  const long s = g.stride;

#pragma omp parallel for schedule(static)
  for (long nc = 0; nc < N * Ci; ++nc) {
    const long n = nc / Ci, ci = nc % Ci;
    double* din = dxd + nc * H * W;
    for (long co = 0; co < Co; ++co) {
      const double* dout = dyd + (n * Co + co) * OH * OW;
      const double* wk = wd + (co * Ci + ci) * K * K;
      for (long kh = 0; kh < K; ++kh) {
        long oh_lo, oh_hi;
        valid_range(H, OH, kh, g, oh_lo, oh_hi);
        for (long kw = 0; kw < K; ++kw) {
          const double wv = wk[kh * K + kw];
          long ow_lo, ow_hi;
          valid_range(W, OW, kw, g, ow_lo, ow_hi);
          for (long oh = oh_lo; oh < oh_hi; ++oh) {
            double* row = din + (oh * s - g.pad + kh) * W;
            const double* drow = dout + oh * OW;
            for (long ow = ow_lo; ow < ow_hi; ++ow) row[ow * s + kw - g.pad] += wv * drow[ow];
          }
        }
      }
    }
  }
  return dx;
}

void conv2d_backward_weight(const Tensor& dy, const Tensor& x, ConvGeometry g, Tensor& dw, Tensor* db) {
  const long N = x.N(), Ci = x.C(), H = x.H(), W = x.W();
  const long Co = dw.dim(0), K = dw.dim(2);
  const long OH = dy.H(), OW = dy.W();
  const double* dyd = dy.data();
  const double* xd = x.data();
  double* dwd = dw.data();
  const long s = g.stride;

#pragma omp parallel for schedule(static)
  for (long co = 0; co < Co; ++co) {
    for (long ci = 0; ci < Ci; ++ci) {
      for (long kh = 0; kh < K; ++kh) {
        long oh_lo, oh_hi;
        valid_range(H, OH, kh, g, oh_lo, oh_hi);
        for (long kw = 0; kw < K; ++kw) {
          long ow_lo, ow_hi;
          valid_range(W, OW, kw, g, ow_lo, ow_hi);
          double acc = 0.0;
          for (long n = 0; n < N; ++n) {
            const double* in = xd + (n * Ci + ci) * H * W;
            const double* dout = dyd + (n * Co + co) * OH * OW;
            for (long oh = oh_lo; oh < oh_hi; ++oh) {
              const double* row = in + (oh * s - g.pad + kh) * W;
              const double* drow = dout + oh * OW;
              for (long ow = ow_lo; ow < ow_hi; ++ow) acc += drow[ow] * row[ow * s + kw - g.pad];
            }
          }
          dwd[((co * Ci + ci) * K + kh) * K + kw] = acc;
        }
      }
    }
    if (db) {
      double acc = 0.0;
      for (long n = 0; n < N; ++n) {
        const double* dout = dyd + (n * Co + co) * OH * OW;
        for (long i = 0; i < OH * OW; ++i) acc += dout[i];
      }
      (*db)[co] = acc;
    }
  }
}

}  // namespace omp
}  // namespace radcls::kernels
