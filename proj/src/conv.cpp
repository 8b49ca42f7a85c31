#include "hsiseg/conv.hpp"

#include <stdexcept>

namespace hsiseg {

ConvParams make_conv(int oc, int ic, int kh, int kw) {
  if (oc < 1 || ic < 1 || kh < 1 || kw < 1) {
    throw std::invalid_argument("make_conv: all dimensions must be >= 1");
  }
  ConvParams p;
  p.weight = Tensor(oc, ic, kh, kw);
  p.bias.assign(static_cast<size_t>(oc), 0.0);
  return p;
}

void he_init(ConvParams& p, Rng& rng, double scale) {
  const double fan_in = static_cast<double>(p.ic()) * p.kh() * p.kw();
  const double stddev = std::sqrt(2.0 / fan_in) * scale;
  for (double& x : p.weight.v) x = rng.normal() * stddev;
  for (double& b : p.bias) b = 0.0;
}

int conv_out_dim(int in, int k, int stride, int pad) {
  if (in + 2 * pad < k) {
    throw std::invalid_argument("conv: input smaller than kernel");
  }
  return (in + 2 * pad - k) / stride + 1;
}

namespace {

// Output index range [lo, hi] for which in = out*stride - pad + k lies inside
// [0, in_dim).  hi may be < lo (empty range).
inline int range_lo(int pad, int k, int stride) {
  const int num = pad - k;
  if (num <= 0) return 0;
  return (num + stride - 1) / stride;
}
inline int range_hi(int in_dim, int pad, int k, int stride, int out_dim) {
  const int num = in_dim - 1 + pad - k;
  if (num < 0) return -1;
  const int hi = num / stride;
  return hi < out_dim - 1 ? hi : out_dim - 1;
}

void check_input(const ConvParams& p, const Tensor& x, int stride, int pad) {
  if (stride < 1) throw std::invalid_argument("conv: stride must be >= 1");
  if (pad < 0) throw std::invalid_argument("conv: pad must be >= 0");
  if (x.c != p.ic()) {
    throw std::invalid_argument("conv: input channels " + std::to_string(x.c) +
                                " != weight in_channels " + std::to_string(p.ic()));
  }
  if (x.n < 1) throw std::invalid_argument("conv: empty batch");
}

}  // namespace

Tensor conv2d(const ConvParams& p, const Tensor& x, int stride, int pad) {
  check_input(p, x, stride, pad);
  const int oh = conv_out_dim(x.h, p.kh(), stride, pad);
  const int ow = conv_out_dim(x.w, p.kw(), stride, pad);
  Tensor y(x.n, p.oc(), oh, ow);

  for (int n = 0; n < x.n; ++n) {
    for (int oc = 0; oc < p.oc(); ++oc) {
      double* yp = y.chan(n, oc);
      const double b = p.bias[static_cast<size_t>(oc)];
      for (size_t i = 0; i < y.plane(); ++i) yp[i] = b;
      for (int ic = 0; ic < p.ic(); ++ic) {
        const double* xp = x.chan(n, ic);
        for (int ky = 0; ky < p.kh(); ++ky) {
          const int oy_lo = range_lo(pad, ky, stride);
          const int oy_hi = range_hi(x.h, pad, ky, stride, oh);
          for (int kx = 0; kx < p.kw(); ++kx) {
            const double wv = p.weight.at(oc, ic, ky, kx);
            if (wv == 0.0) continue;
            const int ox_lo = range_lo(pad, kx, stride);
            const int ox_hi = range_hi(x.w, pad, kx, stride, ow);
            const int shift = kx - pad;
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
              const int iy = oy * stride - pad + ky;
              double* __restrict yr = yp + static_cast<size_t>(oy) * ow;
              const double* __restrict xr = xp + static_cast<size_t>(iy) * x.w;
              if (stride == 1) {
                for (int ox = ox_lo; ox <= ox_hi; ++ox) yr[ox] += wv * xr[ox + shift];
              } else {
                for (int ox = ox_lo; ox <= ox_hi; ++ox) yr[ox] += wv * xr[ox * stride + shift];
              }
            }
          }
        }
      }
    }
  }
  return y;
}

Tensor conv2d_backward(const ConvParams& p, const Tensor& x, const Tensor& dy,
                       int stride, int pad, ConvParams* grad) {
  check_input(p, x, stride, pad);
  const int oh = conv_out_dim(x.h, p.kh(), stride, pad);
  const int ow = conv_out_dim(x.w, p.kw(), stride, pad);
  if (dy.n != x.n || dy.c != p.oc() || dy.h != oh || dy.w != ow) {
    throw std::invalid_argument("conv backward: dy shape " + dy.shape_str() +
                                " does not match output");
  }
  if (grad && (!grad->weight.same_shape(p.weight) || grad->bias.size() != p.bias.size())) {
    throw std::invalid_argument("conv backward: grad holder shape mismatch");
  }

  Tensor dx(x.n, x.c, x.h, x.w);
  for (int n = 0; n < x.n; ++n) {
    for (int oc = 0; oc < p.oc(); ++oc) {
      const double* dyp = dy.chan(n, oc);
      if (grad) {
        double s = 0.0;
        for (size_t i = 0; i < dy.plane(); ++i) s += dyp[i];
        grad->bias[static_cast<size_t>(oc)] += s;
      }
      for (int ic = 0; ic < p.ic(); ++ic) {
        const double* xp = x.chan(n, ic);
        double* dxp = dx.chan(n, ic);
        for (int ky = 0; ky < p.kh(); ++ky) {
          const int oy_lo = range_lo(pad, ky, stride);
          const int oy_hi = range_hi(x.h, pad, ky, stride, oh);
          for (int kx = 0; kx < p.kw(); ++kx) {
            const int ox_lo = range_lo(pad, kx, stride);
            const int ox_hi = range_hi(x.w, pad, kx, stride, ow);
            const double wv = p.weight.at(oc, ic, ky, kx);
            const int shift = kx - pad;
            double acc = 0.0;
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
              const int iy = oy * stride - pad + ky;
              const double* __restrict dyr = dyp + static_cast<size_t>(oy) * ow;
              const double* __restrict xr = xp + static_cast<size_t>(iy) * x.w;
              double* __restrict dxr = dxp + static_cast<size_t>(iy) * x.w;
              if (stride == 1) {
                for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                  acc += dyr[ox] * xr[ox + shift];
                  dxr[ox + shift] += wv * dyr[ox];
                }
              } else {
                for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                  const int ix = ox * stride + shift;
                  acc += dyr[ox] * xr[ix];
                  dxr[ix] += wv * dyr[ox];
                }
              }
            }
            if (grad) grad->weight.at(oc, ic, ky, kx) += acc;
          }
        }
      }
    }
  }
  return dx;
}

}  // namespace hsiseg
