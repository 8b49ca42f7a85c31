#pragma once

#include <cstdint>
#include <vector>

#include "hsiseg/tensor.hpp"

namespace hsiseg {

// Training-time schedules for the distillation stage.
struct ScheduleParams {
  double lambda0 = 1.0;  // initial old-model mixing weight (momentum term)
  double k = 5.0;        // decay steepness of the normalized exponential rule
  double alpha0 = 10.0;  // initial self-entropy weight
  bool raw_decay = false;  // use lambda0 * exp(-iter) instead of the
                           // iteration-normalized exponent
};

// Momentum mixing weight at `iter` of `iter_max` total iterations:
//   lambda = lambda0 * exp(-k * iter / iter_max)        (default)
//   lambda = lambda0 * exp(-iter)                       (raw_decay)
// lambda(0) == lambda0 and the value decreases strictly with iter.
double momentum_lambda(const ScheduleParams& sp, int64_t iter, int64_t iter_max);

// Linear ramp alpha0 * (iter_max - iter) / iter_max.
double alpha_schedule(double alpha0, int64_t iter, int64_t iter_max);

// Per-pixel soft training target.  soft is [N, C, H, W] with rows summing to
// one; source tags each pixel with how the target was produced.
struct PseudoLabel {
  Tensor soft;
  std::vector<uint8_t> source;  // 0 = old/new mixture, 1 = new ground truth
};

inline constexpr uint8_t kSourceMixed = 0;
inline constexpr uint8_t kSourceNewGt = 1;

// Builds the distillation target.  Pixels labeled in new_gt (id >= 0) become
// one-hot; everywhere else the old categories get
//   lambda * old_probs + (1 - lambda) * renorm(new_probs[0..C_old))
// and the new categories zero.  renorm rescales the first C_old new-model
// probabilities to sum to one.  old_probs is [N, C_old, H, W], new_probs
// [N, C_new, H, W] with C_old <= C_new; both must be valid distributions.
PseudoLabel build_pseudo_label(const Tensor& old_probs, const Tensor& new_probs,
                               const IntTensor& new_gt, double lambda);

// Channel softmax with max-shift for stability.
Tensor softmax_channels(const Tensor& logits);

// Soft-target cross entropy, averaged over pixels and summed over channels:
//   L = -mean_pix sum_c target * log p.
// If dlogits is non-null it receives (p - target) / Npix.
double cross_entropy_soft(const Tensor& logits, const Tensor& target, Tensor* dlogits);

// Mean per-pixel prediction entropy -sum_c p log p (minimizing it sharpens
// predictions).  dlogits receives -p_c (log p_c + H_pix) / Npix.
double self_entropy(const Tensor& logits, Tensor* dlogits);

struct TotalLoss {
  double total = 0.0;
  double ce = 0.0;
  double se = 0.0;
  double alpha = 0.0;
};

// total = ce + alpha * se; gradients are accumulated into the same layout.
TotalLoss total_loss(const Tensor& logits, const PseudoLabel& pl, double alpha,
                     Tensor* dlogits);

// One-hot encoding of integer labels; every label must lie in [0, C).
Tensor one_hot(const IntTensor& labels, int num_categories);

}  // namespace hsiseg
