#include "hsiseg/network.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace hsiseg {

void NetworkConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("config: in_channels must be >= 1");
  if (base_width < 1) throw std::invalid_argument("config: base_width must be >= 1");
  if (depth < 1) throw std::invalid_argument("config: depth must be >= 1");
  if (num_categories < 2) throw std::invalid_argument("config: num_categories must be >= 2");
  if (bn_momentum <= 0.0 || bn_momentum > 1.0) {
    throw std::invalid_argument("config: bn_momentum outside (0,1]");
  }
  if (norm_eps <= 0.0) throw std::invalid_argument("config: norm_eps must be > 0");
  if (cbrn_eta < 0.0 || cbrn_eta > 1.0) throw std::invalid_argument("config: cbrn_eta outside [0,1]");
}

bool Network::dual() const {
  for (const Layer& l : layers) {
    if (l.dual()) return true;
  }
  return false;
}

namespace {

int width_at(const NetworkConfig& c, int level) { return c.base_width << level; }

Layer make_layer(const std::string& path, int in_c, int out_c, int k, int stride,
                 bool relu, NormKind nk, const NetworkConfig& cfg, Rng& rng) {
  Layer L;
  L.path = path;
  L.stride = stride;
  L.pad = k / 2;
  L.relu = relu;
  L.norm_kind = nk;
  L.weights = make_conv(out_c, in_c, k, k);
  he_init(L.weights, rng);
  if (nk == NormKind::BatchNorm) L.bn = make_bn(out_c, cfg.bn_momentum, cfg.norm_eps);
  return L;
}

}  // namespace

Network build_network(const NetworkConfig& config, uint64_t seed) {
  config.validate();
  Network net;
  net.config = config;
  Rng rng(seed);
  const int D = config.depth;
  auto add = [&](Layer l) {
    net.layers.push_back(std::move(l));
    net.plan.push_back({Step::Kind::Conv, static_cast<int>(net.layers.size()) - 1});
  };

  for (int l = 0; l < D; ++l) {
    const int w = width_at(config, l);
    const int in0 = l == 0 ? config.in_channels : w;
    const std::string p = "enc" + std::to_string(l);
    add(make_layer(p + "/conv0", in0, w, 3, 1, true, NormKind::BatchNorm, config, rng));
    add(make_layer(p + "/conv1", w, w, 3, 1, true, NormKind::BatchNorm, config, rng));
    net.plan.push_back({Step::Kind::SaveSkip, l});
    add(make_layer(p + "/down", w, width_at(config, l + 1), 3, 2, true,
                   NormKind::BatchNorm, config, rng));
  }
  const int wb = width_at(config, D);
  add(make_layer("bottleneck/conv0", wb, wb, 3, 1, true, NormKind::BatchNorm, config, rng));
  add(make_layer("bottleneck/conv1", wb, wb, 3, 1, true, NormKind::BatchNorm, config, rng));
  for (int l = D - 1; l >= 0; --l) {
    const int w = width_at(config, l);
    const std::string p = "dec" + std::to_string(l);
    net.plan.push_back({Step::Kind::Upsample, 0});
    net.plan.push_back({Step::Kind::Concat, l});
    add(make_layer(p + "/conv0", width_at(config, l + 1) + w, w, 3, 1, true,
                   NormKind::BatchNorm, config, rng));
    add(make_layer(p + "/conv1", w, w, 3, 1, true, NormKind::BatchNorm, config, rng));
  }
  add(make_layer("head", config.base_width, config.num_categories, 1, 1, false,
                 NormKind::None, config, rng));
  net.head_index = static_cast<int>(net.layers.size()) - 1;
  return net;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.v) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor upsample2_nearest(const Tensor& x) {
  Tensor y(x.n, x.c, x.h * 2, x.w * 2);
  for (int n = 0; n < x.n; ++n) {
    for (int c = 0; c < x.c; ++c) {
      const double* xp = x.chan(n, c);
      double* yp = y.chan(n, c);
      for (int i = 0; i < x.h; ++i) {
        for (int j = 0; j < x.w; ++j) {
          const double v = xp[static_cast<size_t>(i) * x.w + j];
          double* row0 = yp + static_cast<size_t>(2 * i) * y.w + 2 * j;
          double* row1 = row0 + y.w;
          row0[0] = row0[1] = row1[0] = row1[1] = v;
        }
      }
    }
  }
  return y;
}

Tensor upsample2_backward(const Tensor& dy) {
  if (dy.h % 2 != 0 || dy.w % 2 != 0) {
    throw std::invalid_argument("upsample2_backward: odd output size");
  }
  Tensor dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
  for (int n = 0; n < dy.n; ++n) {
    for (int c = 0; c < dy.c; ++c) {
      const double* gp = dy.chan(n, c);
      double* dp = dx.chan(n, c);
      for (int i = 0; i < dx.h; ++i) {
        for (int j = 0; j < dx.w; ++j) {
          const double* row0 = gp + static_cast<size_t>(2 * i) * dy.w + 2 * j;
          const double* row1 = row0 + dy.w;
          dp[static_cast<size_t>(i) * dx.w + j] = row0[0] + row0[1] + row1[0] + row1[1];
        }
      }
    }
  }
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    throw std::invalid_argument("concat_channels: spatial/batch mismatch");
  }
  Tensor y(a.n, a.c + b.c, a.h, a.w);
  for (int n = 0; n < a.n; ++n) {
    for (int c = 0; c < a.c; ++c) {
      std::memcpy(y.chan(n, c), a.chan(n, c), a.plane() * sizeof(double));
    }
    for (int c = 0; c < b.c; ++c) {
      std::memcpy(y.chan(n, a.c + c), b.chan(n, c), b.plane() * sizeof(double));
    }
  }
  return y;
}

IntTensor argmax_channels(const Tensor& logits) {
  IntTensor out(logits.n, logits.h, logits.w);
  for (int n = 0; n < logits.n; ++n) {
    for (size_t i = 0; i < logits.plane(); ++i) {
      int best = 0;
      double bv = logits.chan(n, 0)[i];
      for (int c = 1; c < logits.c; ++c) {
        const double v = logits.chan(n, c)[i];
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      out.sample(n)[i] = best;
    }
  }
  return out;
}

namespace {

Tensor average(const Tensor& a, const Tensor& b) {
  Tensor y = zeros_like(a);
  for (size_t i = 0; i < y.size(); ++i) y.v[i] = 0.5 * (a.v[i] + b.v[i]);
  return y;
}

Tensor norm_train(const Layer& L, const Tensor& pre, NormCache* nc) {
  const BatchStats st = compute_batch_stats(pre);
  return L.norm_kind == NormKind::Continual
             ? brn_normalize_train(pre, st, L.cbrn, nc)
             : bn_normalize_train(pre, st, L.bn, nc);
}

Tensor norm_eval(const Layer& L, const Tensor& pre) {
  return L.norm_kind == NormKind::Continual ? brn_normalize_eval(pre, L.cbrn)
                                            : bn_normalize_eval(pre, L.bn);
}

Tensor layer_forward(const Layer& L, const Tensor& x, Mode mode, LayerCache* cache) {
  if (cache) cache->input = x;
  Tensor normed;
  if (!L.dual()) {
    Tensor pre = conv2d(L.weights, x, L.stride, L.pad);
    if (L.norm_kind == NormKind::None) {
      normed = std::move(pre);
    } else if (mode == Mode::Train) {
      normed = norm_train(L, pre, cache ? &cache->norm1 : nullptr);
    } else {
      normed = norm_eval(L, pre);
    }
  } else {
    Tensor zr = conv2d(*L.rigidity, x, L.stride, L.pad);
    Tensor zp = conv2d(L.weights, x, L.stride, L.pad);
    if (L.norm_kind == NormKind::None) {
      normed = average(zr, zp);
    } else if (mode == Mode::Train) {
      normed = average(norm_train(L, zr, cache ? &cache->norm1 : nullptr),
                       norm_train(L, zp, cache ? &cache->norm2 : nullptr));
    } else {
      normed = average(norm_eval(L, zr), norm_eval(L, zp));
    }
  }
  Tensor out = L.relu ? relu(normed) : std::move(normed);
  if (cache && L.relu) cache->relu_out = out;
  return out;
}

Tensor layer_backward(const Layer& L, const LayerCache& cache, Tensor dy,
                      ConvParams* grad) {
  if (L.relu) {
    const Tensor& m = cache.relu_out;
    for (size_t i = 0; i < dy.size(); ++i) {
      if (m.v[i] <= 0.0) dy.v[i] = 0.0;
    }
  }
  if (!L.dual()) {
    Tensor dpre = L.norm_kind == NormKind::None ? std::move(dy)
                                                : norm_backward(cache.norm1, dy);
    return conv2d_backward(L.weights, cache.input, dpre, L.stride, L.pad, grad);
  }
  Tensor half = zeros_like(dy);
  for (size_t i = 0; i < dy.size(); ++i) half.v[i] = 0.5 * dy.v[i];
  const Tensor dzr = L.norm_kind == NormKind::None ? half : norm_backward(cache.norm1, half);
  const Tensor dzp = L.norm_kind == NormKind::None ? half : norm_backward(cache.norm2, half);
  Tensor dx = conv2d_backward(*L.rigidity, cache.input, dzr, L.stride, L.pad, nullptr);
  const Tensor dxp = conv2d_backward(L.weights, cache.input, dzp, L.stride, L.pad, grad);
  for (size_t i = 0; i < dx.size(); ++i) dx.v[i] += dxp.v[i];
  return dx;
}

}  // namespace

Tensor forward(const Network& net, const Tensor& images, Mode mode,
               ForwardTrace* trace) {
  if (net.layers.empty()) throw std::logic_error("forward: network not built");
  if (images.c != net.config.in_channels) {
    throw std::invalid_argument("forward: input has " + std::to_string(images.c) +
                                " channels, expected " +
                                std::to_string(net.config.in_channels));
  }
  const int div = 1 << net.config.depth;
  if (images.h % div != 0 || images.w % div != 0 || images.h < div || images.w < div) {
    throw std::invalid_argument("forward: spatial size " + images.shape_str() +
                                " not divisible by " + std::to_string(div));
  }
  if (trace) {
    trace->layer.assign(net.layers.size(), LayerCache{});
    trace->concat_front.assign(net.plan.size(), 0);
  }
  std::vector<Tensor> skips(static_cast<size_t>(net.config.depth));
  Tensor cur = images;
  for (size_t si = 0; si < net.plan.size(); ++si) {
    const Step& st = net.plan[si];
    switch (st.kind) {
      case Step::Kind::Conv:
        cur = layer_forward(net.layers[static_cast<size_t>(st.arg)], cur, mode,
                            trace ? &trace->layer[static_cast<size_t>(st.arg)] : nullptr);
        break;
      case Step::Kind::SaveSkip:
        skips[static_cast<size_t>(st.arg)] = cur;
        break;
      case Step::Kind::Upsample:
        cur = upsample2_nearest(cur);
        break;
      case Step::Kind::Concat:
        if (trace) trace->concat_front[si] = cur.c;
        cur = concat_channels(cur, skips[static_cast<size_t>(st.arg)]);
        break;
    }
  }
  return cur;
}

void commit_stat_updates(Network& net, const ForwardTrace& trace) {
  if (trace.layer.size() != net.layers.size()) {
    throw std::invalid_argument("commit_stat_updates: trace does not match network");
  }
  for (size_t i = 0; i < net.layers.size(); ++i) {
    Layer& L = net.layers[i];
    if (L.norm_kind == NormKind::None) continue;
    const NormCache& n1 = trace.layer[i].norm1;
    if (n1.stats.mu.empty()) {
      throw std::invalid_argument("commit_stat_updates: trace lacks train statistics");
    }
    if (L.norm_kind == NormKind::Continual) {
      const BatchStats& n2 = L.dual() ? trace.layer[i].norm2.stats : n1.stats;
      update_continual_stats(L.cbrn, n1.stats, n2);
    } else {
      if (L.dual()) {
        const BatchStats& s2 = trace.layer[i].norm2.stats;
        BatchStats avg;
        avg.mu.resize(n1.stats.mu.size());
        avg.sigma.resize(n1.stats.mu.size());
        for (size_t c = 0; c < avg.mu.size(); ++c) {
          avg.mu[c] = 0.5 * (n1.stats.mu[c] + s2.mu[c]);
          avg.sigma[c] = std::sqrt(0.5 * (n1.stats.sigma[c] * n1.stats.sigma[c] +
                                          s2.sigma[c] * s2.sigma[c]));
        }
        bn_update_running(L.bn, avg);
      } else {
        bn_update_running(L.bn, n1.stats);
      }
    }
  }
}

NetGrads make_grads(const Network& net) {
  NetGrads g;
  g.layer.reserve(net.layers.size());
  for (const Layer& L : net.layers) {
    g.layer.push_back(make_conv(L.weights.oc(), L.weights.ic(), L.weights.kh(),
                                L.weights.kw()));
  }
  return g;
}

void zero_grads(NetGrads& g) {
  for (ConvParams& p : g.layer) {
    std::fill(p.weight.v.begin(), p.weight.v.end(), 0.0);
    std::fill(p.bias.begin(), p.bias.end(), 0.0);
  }
}

void backward(const Network& net, const ForwardTrace& trace, const Tensor& dlogits,
              NetGrads& grads) {
  if (trace.layer.size() != net.layers.size() || grads.layer.size() != net.layers.size()) {
    throw std::invalid_argument("backward: trace/grads do not match network");
  }
  std::vector<Tensor> dskips(static_cast<size_t>(net.config.depth));
  Tensor dcur = dlogits;
  for (size_t k = net.plan.size(); k-- > 0;) {
    const Step& st = net.plan[k];
    switch (st.kind) {
      case Step::Kind::Conv: {
        const size_t li = static_cast<size_t>(st.arg);
        dcur = layer_backward(net.layers[li], trace.layer[li], std::move(dcur),
                              &grads.layer[li]);
        break;
      }
      case Step::Kind::SaveSkip: {
        const Tensor& ds = dskips[static_cast<size_t>(st.arg)];
        if (ds.size() > 0) {
          if (!ds.same_shape(dcur)) throw std::logic_error("backward: skip shape mismatch");
          for (size_t i = 0; i < dcur.size(); ++i) dcur.v[i] += ds.v[i];
        }
        break;
      }
      case Step::Kind::Upsample:
        dcur = upsample2_backward(dcur);
        break;
      case Step::Kind::Concat: {
        const int front = trace.concat_front[k];
        Tensor dfront(dcur.n, front, dcur.h, dcur.w);
        Tensor dback(dcur.n, dcur.c - front, dcur.h, dcur.w);
        for (int n = 0; n < dcur.n; ++n) {
          for (int c = 0; c < front; ++c) {
            std::memcpy(dfront.chan(n, c), dcur.chan(n, c), dcur.plane() * sizeof(double));
          }
          for (int c = front; c < dcur.c; ++c) {
            std::memcpy(dback.chan(n, c - front), dcur.chan(n, c),
                        dcur.plane() * sizeof(double));
          }
        }
        dskips[static_cast<size_t>(st.arg)] = std::move(dback);
        dcur = std::move(dfront);
        break;
      }
    }
  }
}

void sgd_step(Network& net, const NetGrads& grads, double lr) {
  if (grads.layer.size() != net.layers.size()) {
    throw std::invalid_argument("sgd_step: grads do not match network");
  }
  for (size_t i = 0; i < net.layers.size(); ++i) {
    ConvParams& w = net.layers[i].weights;
    const ConvParams& g = grads.layer[i];
    if (!g.weight.same_shape(w.weight)) {
      throw std::invalid_argument("sgd_step: grad shape mismatch at " + net.layers[i].path);
    }
    for (size_t j = 0; j < w.weight.size(); ++j) w.weight.v[j] -= lr * g.weight.v[j];
    for (size_t j = 0; j < w.bias.size(); ++j) w.bias[j] -= lr * g.bias[j];
  }
}

void momentum_update(NetGrads& velocity, const NetGrads& grads, double momentum) {
  if (velocity.layer.size() != grads.layer.size()) {
    throw std::invalid_argument("momentum_update: velocity does not match grads");
  }
  for (size_t i = 0; i < velocity.layer.size(); ++i) {
    ConvParams& v = velocity.layer[i];
    const ConvParams& g = grads.layer[i];
    if (!g.weight.same_shape(v.weight)) {
      throw std::invalid_argument("momentum_update: shape mismatch in layer grads");
    }
    for (size_t j = 0; j < v.weight.size(); ++j) {
      v.weight.v[j] = momentum * v.weight.v[j] + g.weight.v[j];
    }
    for (size_t j = 0; j < v.bias.size(); ++j) {
      v.bias[j] = momentum * v.bias[j] + g.bias[j];
    }
  }
}

void add_weight_decay(NetGrads& grads, const Network& net, double decay) {
  if (decay == 0.0) return;
  if (grads.layer.size() != net.layers.size()) {
    throw std::invalid_argument("add_weight_decay: grads do not match network");
  }
  for (size_t i = 0; i < net.layers.size(); ++i) {
    ConvParams& g = grads.layer[i];
    const ConvParams& w = net.layers[i].weights;
    if (!g.weight.same_shape(w.weight)) {
      throw std::invalid_argument("add_weight_decay: shape mismatch in layer grads");
    }
    for (size_t j = 0; j < g.weight.size(); ++j) {
      g.weight.v[j] += decay * w.weight.v[j];
    }
  }
}

void expand_head(Network& net, int k_new, uint64_t seed) {
  if (k_new <= 0) throw std::invalid_argument("expand_head: k_new must be >= 1");
  Layer& H = net.head();
  const int ic = H.weights.ic();
  ConvParams fresh = make_conv(k_new, ic, H.weights.kh(), H.weights.kw());
  Rng rng(seed);
  // Full He scale: a new category's row must start statistically like a fresh
  // layer, or its logits never catch up with the trained incumbents.
  he_init(fresh, rng, 1.0);

  auto grow = [&](ConvParams& p) {
    ConvParams bigger = make_conv(p.oc() + k_new, ic, p.kh(), p.kw());
    std::memcpy(bigger.weight.v.data(), p.weight.v.data(),
                p.weight.size() * sizeof(double));
    std::memcpy(bigger.weight.v.data() + p.weight.size(), fresh.weight.v.data(),
                fresh.weight.size() * sizeof(double));
    for (int c = 0; c < p.oc(); ++c) bigger.bias[static_cast<size_t>(c)] = p.bias[static_cast<size_t>(c)];
    p = std::move(bigger);
  };
  grow(H.weights);
  if (H.rigidity) grow(*H.rigidity);
  net.config.num_categories += k_new;
}

Network rebuild_as_dual(const Network& single, double eta, bool to_continual) {
  if (single.dual()) throw std::invalid_argument("rebuild_as_dual: network already dual");
  Network net = single;
  for (Layer& L : net.layers) L.rigidity = L.weights;
  if (to_continual) convert_norms_to_continual(net, eta);
  return net;
}

void convert_norms_to_continual(Network& net, double eta) {
  net.config.cbrn_eta = eta;
  for (Layer& L : net.layers) {
    if (L.norm_kind == NormKind::BatchNorm) {
      L.cbrn = init_from_bn(L.bn.mean, L.bn.var, eta, L.bn.eps);
      L.norm_kind = NormKind::Continual;
      L.bn = BNState{};
    } else if (L.norm_kind == NormKind::Continual) {
      L.cbrn.eta = eta;
    }
  }
}

void merge_network(Network& net) {
  for (Layer& L : net.layers) {
    if (!L.dual()) continue;
    for (size_t i = 0; i < L.weights.weight.size(); ++i) {
      L.weights.weight.v[i] = 0.5 * (L.weights.weight.v[i] + L.rigidity->weight.v[i]);
    }
    for (size_t i = 0; i < L.weights.bias.size(); ++i) {
      L.weights.bias[i] = 0.5 * (L.weights.bias[i] + L.rigidity->bias[i]);
    }
    L.rigidity.reset();
  }
}

size_t count_conv_params(const Network& net, bool include_rigidity) {
  size_t total = 0;
  for (const Layer& L : net.layers) {
    total += L.weights.param_count();
    if (include_rigidity && L.rigidity) total += L.rigidity->param_count();
  }
  return total;
}

size_t count_stat_values(const Network& net) {
  size_t total = 0;
  for (const Layer& L : net.layers) {
    if (L.norm_kind == NormKind::Continual) {
      total += L.cbrn.mu_c.size() + L.cbrn.sigma_c.size();
    } else if (L.norm_kind == NormKind::BatchNorm) {
      total += L.bn.mean.size() + L.bn.var.size();
    }
  }
  return total;
}

std::vector<double*> param_refs(Network& net) {
  std::vector<double*> refs;
  for (Layer& L : net.layers) {
    for (double& v : L.weights.weight.v) refs.push_back(&v);
    for (double& v : L.weights.bias) refs.push_back(&v);
  }
  return refs;
}

}  // namespace hsiseg
