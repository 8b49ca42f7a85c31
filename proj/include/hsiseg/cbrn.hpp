#pragma once

#include <vector>

#include "hsiseg/tensor.hpp"

namespace hsiseg {

// Per-channel first/second moments of a feature batch.  sigma is the biased
// (population) standard deviation over N*H*W values.
struct BatchStats {
  std::vector<double> mu, sigma;
};

BatchStats compute_batch_stats(const Tensor& feature);

// Continual renormalization state: running population estimates shared across
// training stages and, in dual-branch layers, across both branches.
struct CBRNState {
  std::vector<double> mu_c, sigma_c;
  double eta = 0.01;   // moving-average rate
  double eps = 1e-5;   // divisor floor
  double r_max = 0.0;  // correction clip; <= 0 disables (default)
  double d_max = 0.0;

  size_t channels() const { return mu_c.size(); }
};

// Seed the continual state from plain batch-norm running statistics:
// mu_c = running_mean, sigma_c = sqrt(running_var + eps).
CBRNState init_from_bn(const std::vector<double>& running_mean,
                       const std::vector<double>& running_var, double eta,
                       double eps);

// Moving-average update with the two branch batch statistics averaged first:
//   mu_c    <- (1 - eta) * mu_c    + eta * (mu_r + mu_p) / 2
//   sigma_c <- (1 - eta) * sigma_c + eta * (sigma_r + sigma_p) / 2
// Single-branch layers pass the same stats twice.
void update_continual_stats(CBRNState& state, const BatchStats& rigidity,
                            const BatchStats& plasticity);

// Everything the normalization backward pass needs.  Shared between the
// renormalized path (scale = r, divisor = batch sigma) and plain batch norm
// (scale = 1, divisor = sqrt(var + eps)).
struct NormCache {
  BatchStats stats;
  std::vector<double> scale;    // per channel; treated as constant in backward
  std::vector<double> divisor;  // per channel
  std::vector<uint8_t> floored; // divisor hit the eps floor -> constant w.r.t. input
  Tensor xhat;
};

// Train-mode renormalization: xhat = (a - mu_B) / max(sigma_B, eps), output
// xhat * r + d with r = max(sigma_B, eps) / max(sigma_c, eps) and
// d = (mu_B - mu_c) / max(sigma_c, eps); r and d carry no gradient.
// In exact arithmetic the output equals (a - mu_c) / sigma_c.
Tensor brn_normalize_train(const Tensor& a, const BatchStats& stats,
                           const CBRNState& state, NormCache* cache);

// Inference-mode normalization: (a - mu_c) / max(sigma_c, eps).
Tensor brn_normalize_eval(const Tensor& a, const CBRNState& state);

// Gradient w.r.t. the input for either normalization flavour.
Tensor norm_backward(const NormCache& cache, const Tensor& dy);

// Plain batch norm (no learnable affine), used by the variant that disables
// continual renormalization and by freshly built single-branch networks.
struct BNState {
  std::vector<double> mean, var;
  double momentum = 0.1;
  double eps = 1e-5;

  size_t channels() const { return mean.size(); }
};

BNState make_bn(int channels, double momentum, double eps);

Tensor bn_normalize_train(const Tensor& a, const BatchStats& stats,
                          const BNState& state, NormCache* cache);
Tensor bn_normalize_eval(const Tensor& a, const BNState& state);

// Running-average update, mean/var convexly blended toward the batch moments.
void bn_update_running(BNState& state, const BatchStats& stats);

}  // namespace hsiseg
