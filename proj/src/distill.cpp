#include "hsiseg/distill.hpp"

#include <cmath>
#include "hsiseg/errors.hpp"

namespace hsiseg {

namespace {

void check_iter(int64_t iter, int64_t iter_max, const char* who) {
  if (iter_max < 1) throw ConfigError(std::string(who) + ": iter_max must be >= 1");
  if (iter < 0 || iter > iter_max) {
    throw ConfigError(std::string(who) + ": iter outside [0, iter_max]");
  }
}

constexpr double kLogFloor = 1e-300;  // keeps log() finite for underflowed probs

void check_distribution(const Tensor& probs, const char* who) {
  for (int n = 0; n < probs.n; ++n) {
    for (size_t i = 0; i < probs.plane(); ++i) {
      double s = 0.0;
      for (int c = 0; c < probs.c; ++c) {
        const double p = probs.chan(n, c)[i];
        if (p < -1e-9) throw ConfigError(std::string(who) + ": negative probability");
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-4) {
        throw ConfigError(std::string(who) + ": probabilities sum to " +
                                    std::to_string(s) + ", expected 1");
      }
    }
  }
}

}  // namespace

double momentum_lambda(const ScheduleParams& sp, int64_t iter, int64_t iter_max) {
  check_iter(iter, iter_max, "momentum_lambda");
  if (sp.lambda0 <= 0.0 || sp.lambda0 > 1.0) {
    throw ConfigError("momentum_lambda: lambda0 outside (0,1]");
  }
  if (!sp.raw_decay && sp.k <= 0.0) {
    throw ConfigError("momentum_lambda: decay steepness must be > 0");
  }
  const double it = static_cast<double>(iter);
  return sp.raw_decay
             ? sp.lambda0 * std::exp(-it)
             : sp.lambda0 * std::exp(-sp.k * it / static_cast<double>(iter_max));
}

double alpha_schedule(double alpha0, int64_t iter, int64_t iter_max) {
  check_iter(iter, iter_max, "alpha_schedule");
  if (alpha0 < 0.0) throw ConfigError("alpha_schedule: alpha0 must be >= 0");
  return alpha0 * static_cast<double>(iter_max - iter) / static_cast<double>(iter_max);
}

PseudoLabel build_pseudo_label(const Tensor& old_probs, const Tensor& new_probs,
                               const IntTensor& new_gt, double lambda) {
  if (lambda <= 0.0 || lambda > 1.0) {
    throw ConfigError("build_pseudo_label: lambda outside (0,1]");
  }
  if (old_probs.n != new_probs.n || old_probs.h != new_probs.h ||
      old_probs.w != new_probs.w) {
    throw ConfigError("build_pseudo_label: old/new spatial shape mismatch");
  }
  if (old_probs.c > new_probs.c) {
    throw ConfigError("build_pseudo_label: old model has more categories than new");
  }
  if (new_gt.n != new_probs.n || new_gt.h != new_probs.h || new_gt.w != new_probs.w) {
    throw ConfigError("build_pseudo_label: ground-truth shape mismatch");
  }
  check_distribution(old_probs, "build_pseudo_label(old)");
  check_distribution(new_probs, "build_pseudo_label(new)");

  const int c_old = old_probs.c;
  const int c_new = new_probs.c;
  PseudoLabel pl;
  pl.soft = Tensor(new_probs.n, c_new, new_probs.h, new_probs.w);
  pl.source.assign(static_cast<size_t>(new_gt.n) * new_gt.plane(), kSourceMixed);

  const double keep = 1.0 - lambda;
  for (int n = 0; n < new_probs.n; ++n) {
    for (size_t i = 0; i < new_probs.plane(); ++i) {
      const int32_t g = new_gt.sample(n)[i];
      if (g >= 0) {
        if (g >= c_new) {
          throw ConfigError("build_pseudo_label: label " + std::to_string(g) +
                                      " outside [0," + std::to_string(c_new) + ")");
        }
        pl.soft.chan(n, g)[i] = 1.0;
        pl.source[static_cast<size_t>(n) * new_gt.plane() + i] = kSourceNewGt;
        continue;
      }
      if (keep == 0.0) {
        // Pure momentum: the old distribution padded with zero on new channels.
        for (int c = 0; c < c_old; ++c) {
          pl.soft.chan(n, c)[i] = old_probs.chan(n, c)[i];
        }
        continue;
      }
      double new_sum = 0.0;
      for (int c = 0; c < c_old; ++c) new_sum += new_probs.chan(n, c)[i];
      for (int c = 0; c < c_old; ++c) {
        const double renorm = new_sum > 1e-12
                                  ? new_probs.chan(n, c)[i] / new_sum
                                  : 1.0 / static_cast<double>(c_old);
        pl.soft.chan(n, c)[i] =
            lambda * old_probs.chan(n, c)[i] + keep * renorm;
      }
    }
  }
  return pl;
}

Tensor softmax_channels(const Tensor& logits) {
  if (logits.c < 1) throw ConfigError("softmax_channels: no channels");
  Tensor p = zeros_like(logits);
  for (int n = 0; n < logits.n; ++n) {
    for (size_t i = 0; i < logits.plane(); ++i) {
      double mx = logits.chan(n, 0)[i];
      for (int c = 1; c < logits.c; ++c) mx = std::max(mx, logits.chan(n, c)[i]);
      double sum = 0.0;
      for (int c = 0; c < logits.c; ++c) {
        const double e = std::exp(logits.chan(n, c)[i] - mx);
        p.chan(n, c)[i] = e;
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (int c = 0; c < logits.c; ++c) p.chan(n, c)[i] *= inv;
    }
  }
  return p;
}

double cross_entropy_soft(const Tensor& logits, const Tensor& target, Tensor* dlogits) {
  if (!logits.same_shape(target)) {
    throw ConfigError("cross_entropy_soft: logits/target shape mismatch");
  }
  if (dlogits && !dlogits->same_shape(logits)) {
    throw ConfigError("cross_entropy_soft: dlogits shape mismatch");
  }
  const Tensor p = softmax_channels(logits);
  const double npix = static_cast<double>(logits.n) * logits.plane();
  const double inv_npix = 1.0 / npix;
  double loss = 0.0;
  for (int n = 0; n < logits.n; ++n) {
    for (int c = 0; c < logits.c; ++c) {
      const double* tp = target.chan(n, c);
      const double* pp = p.chan(n, c);
      double acc = 0.0;
      for (size_t i = 0; i < logits.plane(); ++i) {
        if (tp[i] != 0.0) acc += tp[i] * std::log(std::max(pp[i], kLogFloor));
      }
      loss -= acc;
      if (dlogits) {
        double* dp = dlogits->chan(n, c);
        for (size_t i = 0; i < logits.plane(); ++i) {
          dp[i] += (pp[i] - tp[i]) * inv_npix;
        }
      }
    }
  }
  return loss * inv_npix;
}

double self_entropy(const Tensor& logits, Tensor* dlogits) {
  if (dlogits && !dlogits->same_shape(logits)) {
    throw ConfigError("self_entropy: dlogits shape mismatch");
  }
  const Tensor p = softmax_channels(logits);
  const double npix = static_cast<double>(logits.n) * logits.plane();
  const double inv_npix = 1.0 / npix;
  double total = 0.0;
  std::vector<double> hpix(logits.plane());
  for (int n = 0; n < logits.n; ++n) {
    std::fill(hpix.begin(), hpix.end(), 0.0);
    for (int c = 0; c < logits.c; ++c) {
      const double* pp = p.chan(n, c);
      for (size_t i = 0; i < logits.plane(); ++i) {
        if (pp[i] > 0.0) hpix[i] -= pp[i] * std::log(std::max(pp[i], kLogFloor));
      }
    }
    for (size_t i = 0; i < logits.plane(); ++i) total += hpix[i];
    if (dlogits) {
      for (int c = 0; c < logits.c; ++c) {
        const double* pp = p.chan(n, c);
        double* dp = dlogits->chan(n, c);
        for (size_t i = 0; i < logits.plane(); ++i) {
          const double lp = std::log(std::max(pp[i], kLogFloor));
          dp[i] += -pp[i] * (lp + hpix[i]) * inv_npix;
        }
      }
    }
  }
  return total * inv_npix;
}

TotalLoss total_loss(const Tensor& logits, const PseudoLabel& pl, double alpha,
                     Tensor* dlogits) {
  if (alpha < 0.0) throw ConfigError("total_loss: alpha must be >= 0");
  if (!pl.soft.same_shape(logits)) {
    throw ConfigError("total_loss: pseudo-label shape mismatch");
  }
  TotalLoss out;
  out.alpha = alpha;
  out.ce = cross_entropy_soft(logits, pl.soft, dlogits);
  if (alpha > 0.0) {
    Tensor dse;
    Tensor* dse_ptr = nullptr;
    if (dlogits) {
      dse = zeros_like(logits);
      dse_ptr = &dse;
    }
    out.se = self_entropy(logits, dse_ptr);
    if (dlogits) {
      for (size_t i = 0; i < dlogits->size(); ++i) dlogits->v[i] += alpha * dse.v[i];
    }
  } else {
    out.se = self_entropy(logits, nullptr);
  }
  out.total = out.ce + alpha * out.se;
  return out;
}

Tensor one_hot(const IntTensor& labels, int num_categories) {
  if (num_categories < 1) throw ConfigError("one_hot: need >= 1 categories");
  Tensor t(labels.n, num_categories, labels.h, labels.w);
  for (int n = 0; n < labels.n; ++n) {
    for (size_t i = 0; i < labels.plane(); ++i) {
      const int32_t g = labels.sample(n)[i];
      if (g < 0 || g >= num_categories) {
        throw ConfigError("one_hot: label " + std::to_string(g) +
                                    " outside [0," + std::to_string(num_categories) + ")");
      }
      t.chan(n, g)[i] = 1.0;
    }
  }
  return t;
}

}  // namespace hsiseg
