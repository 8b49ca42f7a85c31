#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hsiseg/cbrn.hpp"
#include "hsiseg/conv.hpp"

namespace hsiseg {

struct NetworkConfig {
  int in_channels = 1;
  int base_width = 16;
  int depth = 2;           // number of encoder levels (downsamplings)
  int num_categories = 2;  // output channels: background + structures so far
  double bn_momentum = 0.1;
  double norm_eps = 1e-5;
  double cbrn_eta = 0.01;

  void validate() const;
};

enum class NormKind { None, BatchNorm, Continual };

// One convolution layer of the backbone.  When `rigidity` is engaged the
// layer runs as a dual-branch block (frozen rigidity copy + trainable
// `weights` branch) whose normalized outputs are averaged; otherwise
// `weights` is an ordinary convolution.  Exactly one of bn/cbrn is live,
// selected by norm_kind (the head uses NormKind::None).
struct Layer {
  std::string path;
  int stride = 1;
  int pad = 1;
  bool relu = true;
  NormKind norm_kind = NormKind::BatchNorm;
  ConvParams weights;
  std::optional<ConvParams> rigidity;
  BNState bn;
  CBRNState cbrn;

  bool dual() const { return rigidity.has_value(); }
};

struct Step {
  enum class Kind { Conv, Upsample, Concat, SaveSkip };
  Kind kind;
  int arg = 0;  // layer index for Conv; skip slot for SaveSkip/Concat
};

// U-shaped encoder/decoder: per level two 3x3 convs and a stride-2 3x3
// downsampling conv, a two-conv bottleneck, then per level a nearest 2x
// upsample, skip concatenation and two 3x3 convs; a plain 1x1 head conv
// (no normalization, no activation) maps to category logits.
struct Network {
  NetworkConfig config;
  std::vector<Layer> layers;
  std::vector<Step> plan;
  int head_index = -1;

  bool dual() const;
  Layer& head() { return layers[static_cast<size_t>(head_index)]; }
  const Layer& head() const { return layers[static_cast<size_t>(head_index)]; }
};

Network build_network(const NetworkConfig& config, uint64_t seed);

struct LayerCache {
  Tensor input;
  NormCache norm1;  // single branch, or the rigidity branch when dual
  NormCache norm2;  // plasticity branch (dual only)
  Tensor relu_out;  // post-activation output, for the ReLU mask
};

struct ForwardTrace {
  std::vector<LayerCache> layer;     // by layer index
  std::vector<Tensor> skips;         // by skip slot
  std::vector<int> concat_front;     // by plan step: channel split point
};

// Runs the network.  Never mutates `net`: train-mode batch statistics are
// recorded in the trace and only folded into the running states by an
// explicit commit_stat_updates call.
Tensor forward(const Network& net, const Tensor& images, Mode mode,
               ForwardTrace* trace = nullptr);

// Apply the deferred normalization-statistics updates gathered during one
// train-mode forward pass.
void commit_stat_updates(Network& net, const ForwardTrace& trace);

struct NetGrads {
  std::vector<ConvParams> layer;  // aligned with net.layers; grads for `weights`
};

NetGrads make_grads(const Network& net);
void zero_grads(NetGrads& g);

// Backpropagate dlogits through the traced forward pass, accumulating
// gradients for every layer's trainable branch.  Rigidity branches receive
// no parameter gradient.
void backward(const Network& net, const ForwardTrace& trace,
              const Tensor& dlogits, NetGrads& grads);

void sgd_step(Network& net, const NetGrads& grads, double lr);

// Classical momentum: velocity = momentum * velocity + grads, in place.
// Pass the result to sgd_step.  Shapes must match.
void momentum_update(NetGrads& velocity, const NetGrads& grads, double momentum);

// L2 regularization: grads.weight += decay * net trainable weights.  Biases
// are left alone, as is the frozen branch (it receives no updates anyway).
void add_weight_decay(NetGrads& grads, const Network& net, double decay);

// Grow the 1x1 head by k_new output channels.  Existing channel parameters
// are preserved bit-for-bit; new rows get a fresh He-scale draw and zero
// bias.  In dual form both branches receive identical new rows.  k_new == 0
// is an error.
void expand_head(Network& net, int k_new, uint64_t seed);

// Duplicate every convolution into a frozen rigidity branch plus a trainable
// plasticity branch.  With to_continual (the default) BatchNorm layers
// convert to continual renormalization seeded from their running statistics;
// layers already carrying continual state keep it (that state persists
// across stages).  With to_continual = false layers keep plain batch norm
// and the branches share its running statistics.  Fails if the network is
// already in dual form.
Network rebuild_as_dual(const Network& single, double eta, bool to_continual = true);

// Collapse every dual layer back to a single convolution by branch averaging.
// Normalization states are untouched.
void merge_network(Network& net);

// Switch every BatchNorm layer to continual renormalization seeded from its
// running statistics, leaving the convolutions single-branch.  Layers already
// continual keep their state (only eta is refreshed).
void convert_norms_to_continual(Network& net, double eta);

// Parameter bookkeeping.
size_t count_conv_params(const Network& net, bool include_rigidity);
size_t count_stat_values(const Network& net);

// Flat views over trainable parameters (deterministic order), used by the
// optimizer tests and finite-difference checks.
std::vector<double*> param_refs(Network& net);

// Elementwise helpers shared across the project.
Tensor relu(const Tensor& x);
Tensor upsample2_nearest(const Tensor& x);
Tensor upsample2_backward(const Tensor& dy);
Tensor concat_channels(const Tensor& a, const Tensor& b);

// Per-pixel argmax over the channel dimension (ties -> lowest index).
IntTensor argmax_channels(const Tensor& logits);

}  // namespace hsiseg
