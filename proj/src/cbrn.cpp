#include "hsiseg/cbrn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hsiseg {

BatchStats compute_batch_stats(const Tensor& feature) {
  if (feature.n < 1 || feature.plane() == 0) {
    throw std::invalid_argument("compute_batch_stats: empty feature batch");
  }
  const int C = feature.c;
  const double count = static_cast<double>(feature.n) * feature.plane();
  BatchStats s;
  s.mu.assign(C, 0.0);
  s.sigma.assign(C, 0.0);
  for (int c = 0; c < C; ++c) {
    double sum = 0.0;
    for (int n = 0; n < feature.n; ++n) {
      const double* p = feature.chan(n, c);
      for (size_t i = 0; i < feature.plane(); ++i) sum += p[i];
    }
    const double mu = sum / count;
    double sq = 0.0;
    for (int n = 0; n < feature.n; ++n) {
      const double* p = feature.chan(n, c);
      for (size_t i = 0; i < feature.plane(); ++i) {
        const double d = p[i] - mu;
        sq += d * d;
      }
    }
    s.mu[c] = mu;
    s.sigma[c] = std::sqrt(sq / count);
  }
  return s;
}

CBRNState init_from_bn(const std::vector<double>& running_mean,
                       const std::vector<double>& running_var, double eta,
                       double eps) {
  if (running_mean.size() != running_var.size()) {
    throw std::invalid_argument("init_from_bn: mean/var size mismatch");
  }
  if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("init_from_bn: eta outside [0,1]");
  if (eps <= 0.0) throw std::invalid_argument("init_from_bn: eps must be > 0");
  CBRNState st;
  st.eta = eta;
  st.eps = eps;
  st.mu_c = running_mean;
  st.sigma_c.resize(running_var.size());
  for (size_t i = 0; i < running_var.size(); ++i) {
    if (running_var[i] < 0.0) throw std::invalid_argument("init_from_bn: negative variance");
    st.sigma_c[i] = std::sqrt(running_var[i] + eps);
  }
  return st;
}

void update_continual_stats(CBRNState& state, const BatchStats& rigidity,
                            const BatchStats& plasticity) {
  const size_t C = state.channels();
  if (rigidity.mu.size() != C || plasticity.mu.size() != C) {
    throw std::invalid_argument("update_continual_stats: channel mismatch");
  }
  const double eta = state.eta;
  for (size_t c = 0; c < C; ++c) {
    const double mu_b = 0.5 * (rigidity.mu[c] + plasticity.mu[c]);
    const double sg_b = 0.5 * (rigidity.sigma[c] + plasticity.sigma[c]);
    state.mu_c[c] = (1.0 - eta) * state.mu_c[c] + eta * mu_b;
    state.sigma_c[c] = (1.0 - eta) * state.sigma_c[c] + eta * sg_b;
  }
}

namespace {

void check_channels(const Tensor& a, size_t c, const char* who) {
  if (static_cast<size_t>(a.c) != c) {
    throw std::invalid_argument(std::string(who) + ": channel count mismatch");
  }
}

// out[c] = xhat[c] * scale[c] + shift[c]
Tensor affine_from_xhat(const Tensor& xhat, const std::vector<double>& scale,
                        const std::vector<double>& shift) {
  Tensor out = zeros_like(xhat);
  for (int n = 0; n < xhat.n; ++n) {
    for (int c = 0; c < xhat.c; ++c) {
      const double sc = scale[c], sh = shift[c];
      const double* xp = xhat.chan(n, c);
      double* op = out.chan(n, c);
      for (size_t i = 0; i < xhat.plane(); ++i) op[i] = xp[i] * sc + sh;
    }
  }
  return out;
}

}  // namespace

Tensor brn_normalize_train(const Tensor& a, const BatchStats& stats,
                           const CBRNState& state, NormCache* cache) {
  check_channels(a, state.channels(), "brn_normalize_train");
  if (stats.mu.size() != state.channels()) {
    throw std::invalid_argument("brn_normalize_train: stats channel mismatch");
  }
  const int C = a.c;
  Tensor xhat = zeros_like(a);
  std::vector<double> scale(C), divisor(C), shift(C);
  std::vector<uint8_t> floored(C, 0);
  for (int c = 0; c < C; ++c) {
    const double s_b = std::max(stats.sigma[c], state.eps);
    const double s_c = std::max(state.sigma_c[c], state.eps);
    floored[c] = stats.sigma[c] <= state.eps ? 1 : 0;
    double r = s_b / s_c;
    double d = (stats.mu[c] - state.mu_c[c]) / s_c;
    if (state.r_max > 0.0) r = std::clamp(r, 1.0 / state.r_max, state.r_max);
    if (state.d_max > 0.0) d = std::clamp(d, -state.d_max, state.d_max);
    scale[c] = r;
    divisor[c] = s_b;
    shift[c] = d;
    const double mu = stats.mu[c], inv = 1.0 / s_b;
    for (int n = 0; n < a.n; ++n) {
      const double* ap = a.chan(n, c);
      double* xp = xhat.chan(n, c);
      for (size_t i = 0; i < a.plane(); ++i) xp[i] = (ap[i] - mu) * inv;
    }
  }
  Tensor out = affine_from_xhat(xhat, scale, shift);
  if (cache) {
    cache->stats = stats;
    cache->scale = std::move(scale);
    cache->divisor = std::move(divisor);
    cache->floored = std::move(floored);
    cache->xhat = std::move(xhat);
  }
  return out;
}

Tensor brn_normalize_eval(const Tensor& a, const CBRNState& state) {
  check_channels(a, state.channels(), "brn_normalize_eval");
  Tensor out = zeros_like(a);
  for (int c = 0; c < a.c; ++c) {
    const double mu = state.mu_c[c];
    const double inv = 1.0 / std::max(state.sigma_c[c], state.eps);
    for (int n = 0; n < a.n; ++n) {
      const double* ap = a.chan(n, c);
      double* op = out.chan(n, c);
      for (size_t i = 0; i < a.plane(); ++i) op[i] = (ap[i] - mu) * inv;
    }
  }
  return out;
}

Tensor norm_backward(const NormCache& cache, const Tensor& dy) {
  const Tensor& xhat = cache.xhat;
  if (!dy.same_shape(xhat)) {
    throw std::invalid_argument("norm_backward: dy shape mismatch");
  }
  const double count = static_cast<double>(dy.n) * dy.plane();
  Tensor dx = zeros_like(dy);
  for (int c = 0; c < dy.c; ++c) {
    const double r = cache.scale[c];
    const double inv_s = 1.0 / cache.divisor[c];
    // g = dy * r; the scale and shift carry no gradient.
    double m1 = 0.0, m2 = 0.0;
    for (int n = 0; n < dy.n; ++n) {
      const double* dp = dy.chan(n, c);
      const double* xp = xhat.chan(n, c);
      for (size_t i = 0; i < dy.plane(); ++i) {
        const double g = dp[i] * r;
        m1 += g;
        m2 += g * xp[i];
      }
    }
    m1 /= count;
    m2 /= count;
    const bool fl = cache.floored[c] != 0;
    for (int n = 0; n < dy.n; ++n) {
      const double* dp = dy.chan(n, c);
      const double* xp = xhat.chan(n, c);
      double* op = dx.chan(n, c);
      for (size_t i = 0; i < dy.plane(); ++i) {
        const double g = dp[i] * r;
        op[i] = fl ? (g - m1) * inv_s : (g - m1 - xp[i] * m2) * inv_s;
      }
    }
  }
  return dx;
}

BNState make_bn(int channels, double momentum, double eps) {
  if (channels < 1) throw std::invalid_argument("make_bn: channels must be >= 1");
  BNState st;
  st.momentum = momentum;
  st.eps = eps;
  st.mean.assign(channels, 0.0);
  st.var.assign(channels, 1.0);
  return st;
}

Tensor bn_normalize_train(const Tensor& a, const BatchStats& stats,
                          const BNState& state, NormCache* cache) {
  check_channels(a, state.channels(), "bn_normalize_train");
  const int C = a.c;
  Tensor xhat = zeros_like(a);
  std::vector<double> scale(C, 1.0), divisor(C), shift(C, 0.0);
  for (int c = 0; c < C; ++c) {
    const double s = std::sqrt(stats.sigma[c] * stats.sigma[c] + state.eps);
    divisor[c] = s;
    const double mu = stats.mu[c], inv = 1.0 / s;
    for (int n = 0; n < a.n; ++n) {
      const double* ap = a.chan(n, c);
      double* xp = xhat.chan(n, c);
      for (size_t i = 0; i < a.plane(); ++i) xp[i] = (ap[i] - mu) * inv;
    }
  }
  if (cache) {
    cache->stats = stats;
    cache->scale = scale;
    cache->divisor = divisor;
    cache->floored.assign(C, 0);  // sqrt(var+eps) never floors and stays differentiable
    cache->xhat = xhat;
  }
  return xhat;
}

Tensor bn_normalize_eval(const Tensor& a, const BNState& state) {
  check_channels(a, state.channels(), "bn_normalize_eval");
  Tensor out = zeros_like(a);
  for (int c = 0; c < a.c; ++c) {
    const double mu = state.mean[c];
    const double inv = 1.0 / std::sqrt(state.var[c] + state.eps);
    for (int n = 0; n < a.n; ++n) {
      const double* ap = a.chan(n, c);
      double* op = out.chan(n, c);
      for (size_t i = 0; i < a.plane(); ++i) op[i] = (ap[i] - mu) * inv;
    }
  }
  return out;
}

void bn_update_running(BNState& state, const BatchStats& stats) {
  if (stats.mu.size() != state.channels()) {
    throw std::invalid_argument("bn_update_running: channel mismatch");
  }
  const double m = state.momentum;
  for (size_t c = 0; c < state.channels(); ++c) {
    state.mean[c] = (1.0 - m) * state.mean[c] + m * stats.mu[c];
    state.var[c] = (1.0 - m) * state.var[c] + m * stats.sigma[c] * stats.sigma[c];
  }
}

}  // namespace hsiseg
