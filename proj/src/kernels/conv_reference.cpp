#include "radcls/errors.hpp"
#include "radcls/kernels/conv.hpp"

namespace radcls::kernels::reference {

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* bias, ConvGeometry g) {
  if (x.C() != w.dim(1)) throw ShapeError("conv: channel mismatch");
  const long N = x.N(), Ci = x.C(), H = x.H(), W = x.W();
  const long Co = w.dim(0), K = w.dim(2);
  const long OH = conv_out_dim(H, K, g), OW = conv_out_dim(W, K, g);
  Tensor y({std::size_t(N), std::size_t(Co), std::size_t(OH), std::size_t(OW)});
  for (long n = 0; n < N; ++n)
    for (long co = 0; co < Co; ++co)
      for (long oh = 0; oh < OH; ++oh)
        for (long ow = 0; ow < OW; ++ow) {
          double acc = bias ? (*bias)[co] : 0.0;
          for (long ci = 0; ci < Ci; ++ci)
            for (long kh = 0; kh < K; ++kh)
              for (long kw = 0; kw < K; ++kw) {
                const long ih = oh * g.stride - g.pad + kh;
                const long iw = ow * g.stride - g.pad + kw;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += w.at(co, ci, kh, kw) * x.at(n, ci, ih, iw);
              }
          y.at(n, co, oh, ow) = acc;
        }
  return y;
}

Tensor conv2d_backward_input(const Tensor& dy, const Tensor& w, const std::vector<std::size_t>& x_shape,
                             ConvGeometry g) {
  const long N = x_shape[0], Ci = x_shape[1], H = x_shape[2], W = x_shape[3];
  const long Co = w.dim(0), K = w.dim(2);
  Tensor dx(x_shape);
  for (long n = 0; n < N; ++n)
    for (long co = 0; co < Co; ++co)
      for (long oh = 0; oh < long(dy.H()); ++oh)
        for (long ow = 0; ow < long(dy.W()); ++ow)
          for (long ci = 0; ci < Ci; ++ci)
            for (long kh = 0; kh < K; ++kh)
              for (long kw = 0; kw < K; ++kw) {
                const long ih = oh * g.stride - g.pad + kh;
                const long iw = ow * g.stride - g.pad + kw;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                dx.at(n, ci, ih, iw) += w.at(co, ci, kh, kw) * dy.at(n, co, oh, ow);
              }
  return dx;
}

void conv2d_backward_weight(const Tensor& dy, const Tensor& x, ConvGeometry g, Tensor& dw, Tensor* db) {
  const long N = x.N(), Ci = x.C(), H = x.H(), W = x.W();
  const long Co = dw.dim(0), K = dw.dim(2);
  dw.fill(0.0);
  if (db) db->fill(0.0);
  for (long n = 0; n < N; ++n)
    for (long co = 0; co < Co; ++co)
      for (long oh = 0; oh < long(dy.H()); ++oh)
        for (long ow = 0; ow < long(dy.W()); ++ow) {
          const double d = dy.at(n, co, oh, ow);
          if (db) (*db)[co] += d;
          for (long ci = 0; ci < Ci; ++ci)
            for (long kh = 0; kh < K; ++kh)
              for (long kw = 0; kw < K; ++kw) {
                const long ih = oh * g.stride - g.pad + kh;
                const long iw = ow * g.stride - g.pad + kw;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                dw.at(co, ci, kh, kw) += d * x.at(n, ci, ih, iw);
              }
        }
}

}  // namespace radcls::kernels::reference
