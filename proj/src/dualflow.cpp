#include "hsiseg/dualflow.hpp"

#include <stdexcept>

namespace hsiseg {

DualConvBlock duplicate_from(const ConvParams& conv, const CBRNState& state,
                             int stride, int pad) {
  if (static_cast<size_t>(conv.oc()) != state.channels()) {
    throw std::invalid_argument("duplicate_from: state channels != conv out channels");
  }
  DualConvBlock b;
  b.rigidity = conv;
  b.plasticity = conv;
  b.state = state;
  b.stride = stride;
  b.pad = pad;
  return b;
}

Tensor dual_forward_train(const DualConvBlock& block, const Tensor& z,
                          DualTrainCache* cache) {
  const Tensor zr = conv2d(block.rigidity, z, block.stride, block.pad);
  const Tensor zp = conv2d(block.plasticity, z, block.stride, block.pad);
  const BatchStats sr = compute_batch_stats(zr);
  const BatchStats sp = compute_batch_stats(zp);
  NormCache cr, cp;
  Tensor nr = brn_normalize_train(zr, sr, block.state, cache ? &cr : nullptr);
  Tensor np = brn_normalize_train(zp, sp, block.state, cache ? &cp : nullptr);
  Tensor out = zeros_like(nr);
  for (size_t i = 0; i < out.size(); ++i) out.v[i] = 0.5 * (nr.v[i] + np.v[i]);
  if (cache) {
    cache->input = z;
    cache->rig = std::move(cr);
    cache->plas = std::move(cp);
  }
  return out;
}

Tensor dual_forward_eval(const DualConvBlock& block, const Tensor& z) {
  const Tensor zr = conv2d(block.rigidity, z, block.stride, block.pad);
  const Tensor zp = conv2d(block.plasticity, z, block.stride, block.pad);
  const Tensor nr = brn_normalize_eval(zr, block.state);
  const Tensor np = brn_normalize_eval(zp, block.state);
  Tensor out = zeros_like(nr);
  for (size_t i = 0; i < out.size(); ++i) out.v[i] = 0.5 * (nr.v[i] + np.v[i]);
  return out;
}

Tensor dual_forward(const DualConvBlock& block, const Tensor& z, Mode mode,
                    DualTrainCache* cache) {
  return mode == Mode::Train ? dual_forward_train(block, z, cache)
                             : dual_forward_eval(block, z);
}

Tensor dual_backward(const DualConvBlock& block, const DualTrainCache& cache,
                     const Tensor& dy, ConvParams* plasticity_grad) {
  Tensor half = zeros_like(dy);
  for (size_t i = 0; i < dy.size(); ++i) half.v[i] = 0.5 * dy.v[i];
  const Tensor d_zr = norm_backward(cache.rig, half);
  const Tensor d_zp = norm_backward(cache.plas, half);
  // Rigidity parameters are frozen: propagate to the input only.
  Tensor dx = conv2d_backward(block.rigidity, cache.input, d_zr, block.stride,
                              block.pad, nullptr);
  const Tensor dxp = conv2d_backward(block.plasticity, cache.input, d_zp,
                                     block.stride, block.pad, plasticity_grad);
  for (size_t i = 0; i < dx.size(); ++i) dx.v[i] += dxp.v[i];
  return dx;
}

MergedConv merge(const DualConvBlock& block) {
  if (!block.rigidity.weight.same_shape(block.plasticity.weight)) {
    throw std::invalid_argument("merge: branch shapes differ");
  }
  MergedConv m;
  m.conv = make_conv(block.rigidity.oc(), block.rigidity.ic(),
                     block.rigidity.kh(), block.rigidity.kw());
  for (size_t i = 0; i < m.conv.weight.size(); ++i) {
    m.conv.weight.v[i] = 0.5 * (block.rigidity.weight.v[i] + block.plasticity.weight.v[i]);
  }
  for (size_t i = 0; i < m.conv.bias.size(); ++i) {
    m.conv.bias[i] = 0.5 * (block.rigidity.bias[i] + block.plasticity.bias[i]);
  }
  m.state = block.state;
  m.stride = block.stride;
  m.pad = block.pad;
  return m;
}

Tensor merged_forward_eval(const MergedConv& m, const Tensor& z) {
  const Tensor y = conv2d(m.conv, z, m.stride, m.pad);
  return brn_normalize_eval(y, m.state);
}

}  // namespace hsiseg
