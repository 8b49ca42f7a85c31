#pragma once

#include "hsiseg/rng.hpp"
#include "hsiseg/tensor.hpp"

namespace hsiseg {

// 2-D convolution parameters.  weight is [out_channels, in_channels, kh, kw]
// stored as a Tensor; bias is one value per output channel.  The same struct
// doubles as a gradient holder (same shapes).
struct ConvParams {
  Tensor weight;
  std::vector<double> bias;

  int oc() const { return weight.n; }
  int ic() const { return weight.c; }
  int kh() const { return weight.h; }
  int kw() const { return weight.w; }
  size_t param_count() const { return weight.size() + bias.size(); }
};

ConvParams make_conv(int oc, int ic, int kh, int kw);

// He fan-in initialisation: weights ~ N(0, 2 / (ic*kh*kw)) * scale, bias 0.
// Draw order is fixed (flat weight order) so results are reproducible.
void he_init(ConvParams& p, Rng& rng, double scale = 1.0);

int conv_out_dim(int in, int k, int stride, int pad);

// Standard cross-correlation with zero padding and floor output semantics:
// out = (in + 2*pad - k) / stride + 1.
Tensor conv2d(const ConvParams& p, const Tensor& x, int stride, int pad);

// Backward pass.  Returns the gradient w.r.t. x; if grad is non-null the
// weight/bias gradients are accumulated into it (caller zeroes beforehand).
Tensor conv2d_backward(const ConvParams& p, const Tensor& x, const Tensor& dy,
                       int stride, int pad, ConvParams* grad);

}  // namespace hsiseg
