#pragma once

#include "hsiseg/cbrn.hpp"
#include "hsiseg/conv.hpp"

namespace hsiseg {

// A convolution duplicated into a frozen "rigidity" branch and a trainable
// "plasticity" branch that share one continual-renormalization state.  The
// two branch outputs are normalized separately and averaged; at inference or
// after merging this is arithmetically the mean of the two convolutions
// normalized by the shared running statistics.
struct DualConvBlock {
  ConvParams rigidity;    // frozen at duplication time
  ConvParams plasticity;  // receives gradient updates
  CBRNState state;        // shared by both branches
  int stride = 1;
  int pad = 0;
};

// Start a new stage from an inherited convolution: both branches are exact
// copies of it and share the given continual state.
DualConvBlock duplicate_from(const ConvParams& conv, const CBRNState& state,
                             int stride, int pad);

struct DualTrainCache {
  Tensor input;
  NormCache rig, plas;  // per-branch normalization caches (stats included)
};

// Train mode: out = (BRN_r(conv_r(z)) + BRN_p(conv_p(z))) / 2 using each
// branch's batch statistics against the shared state.  Does not mutate the
// block; batch statistics land in the cache for a later explicit commit.
Tensor dual_forward_train(const DualConvBlock& block, const Tensor& z,
                          DualTrainCache* cache);

// Inference mode: out = (conv_r(z) - mu_c) / (2 sigma_c)
//                     + (conv_p(z) - mu_c) / (2 sigma_c).
Tensor dual_forward_eval(const DualConvBlock& block, const Tensor& z);

Tensor dual_forward(const DualConvBlock& block, const Tensor& z, Mode mode,
                    DualTrainCache* cache = nullptr);

// Gradient w.r.t. z for the train-mode output.  Plasticity weight/bias
// gradients are accumulated into plasticity_grad when non-null; the rigidity
// branch propagates to the input but its parameters receive no gradient.
Tensor dual_backward(const DualConvBlock& block, const DualTrainCache& cache,
                     const Tensor& dy, ConvParams* plasticity_grad);

// Re-parameterized single convolution: W = (W_r + W_p)/2, b = (b_r + b_p)/2,
// followed at inference by (z - mu_c) / sigma_c with the shared state.
struct MergedConv {
  ConvParams conv;
  CBRNState state;
  int stride = 1;
  int pad = 0;
};

MergedConv merge(const DualConvBlock& block);

Tensor merged_forward_eval(const MergedConv& m, const Tensor& z);

}  // namespace hsiseg
