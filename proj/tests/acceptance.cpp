// End-to-end acceptance checks.  Prints one [PASS]/[FAIL] line per criterion
// and exits nonzero if any criterion fails.  Progress chatter goes to stderr
// so stdout stays a clean list of verdicts.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "acceptance_fixtures.hpp"
#include "hsiseg/baselines.hpp"
#include "hsiseg/checkpoint.hpp"
#include "hsiseg/distill.hpp"
#include "hsiseg/dualflow.hpp"
#include "hsiseg/experiment.hpp"
#include "hsiseg/hash.hpp"
#include "hsiseg/metrics.hpp"
#include "hsiseg/network.hpp"
#include "hsiseg/rng.hpp"
#include "hsiseg/stagerunner.hpp"
#include "hsiseg/synthdata.hpp"

using namespace hsiseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome ok(std::string detail) { return {true, std::move(detail)}; }
Outcome bad(std::string detail) { return {false, std::move(detail)}; }

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// Shared heavy state: the desk-scale benchmark and its four protocol runs.

struct BigRun {
  bool attempted = false;
  bool ok = false;
  std::string error;
  double elapsed_seconds = 0.0;
  std::string data_dir;
  std::map<std::string, ProtocolResult> results;
  std::map<std::string, std::string> run_dirs;
};

BenchmarkSpec acceptance_benchmark() {
  BenchmarkSpec b;
  b.domains = default_domains();
  b.phantom.image_size = fixtures::kImageSize;
  b.phantom.center_jitter = fixtures::kCenterJitter;
  b.phantom.axis1_min = fixtures::kAxis1Min;
  b.phantom.axis1_max = fixtures::kAxis1Max;
  b.phantom.axis2_min = fixtures::kAxis2Min;
  b.phantom.axis2_max = fixtures::kAxis2Max;
  b.train_per_stage = fixtures::kTrainPerStage;
  b.val_per_stage = fixtures::kValPerStage;
  b.test_per_domain = fixtures::kTestPerDomain;
  b.master_seed = fixtures::kDataSeed;
  return b;
}

ProtocolSettings acceptance_protocol() {
  ProtocolSettings ps;
  ps.network.in_channels = 1;
  ps.network.base_width = fixtures::kWidth;
  ps.network.depth = fixtures::kDepth;
  ps.network.num_categories = 2;
  ps.train.epochs = fixtures::kEpochs;
  ps.train.batch_size = fixtures::kBatchSize;
  ps.train.lr = fixtures::kLearningRate;
  ps.train.momentum = fixtures::kMomentum;
  ps.train.weight_decay = fixtures::kWeightDecay;
  ps.schedule.alpha0 = fixtures::kAlpha0;
  ps.master_seed = fixtures::kRunSeed;
  return ps;
}

const BigRun& big_run() {
  static BigRun br;
  if (br.attempted) return br;
  br.attempted = true;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    br.data_dir = "acceptance_scratch/data";
    fs::create_directories("acceptance_scratch");
    generate_benchmark(acceptance_benchmark(), br.data_dir, false, std::cerr);

    const char* methods[] = {"hsi", "finetune", "si_only", "joint_static"};
    for (const char* m : methods) {
      const std::string out = std::string("acceptance_scratch/runs/") + m;
      fs::remove_all(out);
      ProtocolSettings ps = acceptance_protocol();
      if (std::strcmp(m, "hsi") != 0 && std::strcmp(m, "joint_static") != 0) {
        ps.stage0_from = br.run_dirs.at("hsi") + "/stage_0.ckpt";
      }
      std::fprintf(stderr, "[info] running protocol: %s\n", m);
      br.results.emplace(m, run_protocol(find_variant(m), br.data_dir, out, ps,
                                         std::cerr));
      br.run_dirs[m] = out;
    }
    br.ok = true;
  } catch (const std::exception& e) {
    br.error = e.what();
  }
  br.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return br;
}

// Mean Dice at the final stage over a category subset (macro over categories).
double final_stage_dice(const ProtocolResult& pr, const std::set<int>& cats) {
  int last = 0;
  for (const StageOutcome& so : pr.stages) last = std::max(last, so.stage_index);
  std::vector<MetricRow> rows;
  for (const MetricRow& r : pr.rows) {
    if (r.stage == last && cats.count(r.category)) rows.push_back(r);
  }
  return aggregate(rows).dice_macro_mean;
}

// ---------------------------------------------------------------------------
// Criterion 1: dual eval and merged eval agree elementwise.

Outcome criterion1() {
  Rng rng(20240501);
  double worst = 0.0;
  for (int block_i = 0; block_i < 100; ++block_i) {
    const int ic = 1 + static_cast<int>(rng.below(8));
    const int oc = 1 + static_cast<int>(rng.below(8));
    const int k = rng.below(2) == 0 ? 1 : 3;
    ConvParams base = make_conv(oc, ic, k, k);
    for (double& v : base.weight.v) v = rng.normal();
    for (double& v : base.bias) v = rng.normal();
    CBRNState st;
    st.mu_c.resize(static_cast<size_t>(oc));
    st.sigma_c.resize(static_cast<size_t>(oc));
    for (int c = 0; c < oc; ++c) {
      st.mu_c[static_cast<size_t>(c)] = rng.normal();
      st.sigma_c[static_cast<size_t>(c)] = rng.uniform(0.3, 3.0);
    }
    DualConvBlock block = duplicate_from(base, st, 1, k / 2);
    for (double& v : block.plasticity.weight.v) v += rng.normal();
    for (double& v : block.plasticity.bias) v += rng.normal();
    const MergedConv m = merge(block);
    for (int input_i = 0; input_i < 100; ++input_i) {
      Tensor z(1, ic, 6, 6);
      for (double& v : z.v) v = rng.normal();
      const Tensor yd = dual_forward_eval(block, z);
      const Tensor ym = merged_forward_eval(m, z);
      for (size_t i = 0; i < yd.size(); ++i) {
        worst = std::max(worst, std::abs(yd.v[i] - ym.v[i]));
      }
    }
  }
  if (worst > 1e-6) return bad(fmt("max |dual - merged| = %.3e exceeds 1e-6", worst));
  return ok(fmt("100 blocks x 100 inputs, max |dual - merged| = %.3e", worst));
}

// ---------------------------------------------------------------------------
// Criterion 2: merged checkpoints add only head parameters.

Outcome criterion2() {
  const BigRun& br = big_run();
  if (!br.ok) return bad("benchmark run failed: " + br.error);
  const std::string dir = br.run_dirs.at("hsi");
  const Checkpoint s0 = load_checkpoint(dir + "/stage_0.ckpt");
  const size_t base = count_conv_params(s0.net, false);
  const size_t per_category =
      static_cast<size_t>(s0.net.config.base_width) + 1;  // 1x1 row + bias
  std::string detail;
  for (int t = 1; t <= 2; ++t) {
    const Checkpoint ck =
        load_checkpoint(dir + "/stage_" + std::to_string(t) + ".ckpt");
    if (ck.net.dual()) return bad(fmt("stage %d checkpoint is not merged", t));
    const size_t got = count_conv_params(ck.net, true);
    const size_t want = base + static_cast<size_t>(t) * per_category;
    if (got != want) {
      return bad(fmt("stage %d params %zu != stage-0 %zu + head growth %zu", t, got,
                     base, static_cast<size_t>(t) * per_category));
    }
    detail += fmt("stage %d: %zu ", t, got);
  }
  return ok(fmt("stage 0: %zu, %shead-only growth", base, detail.c_str()));
}

// ---------------------------------------------------------------------------
// Criterion 3: continual-statistics arithmetic.

Outcome criterion3() {
  Rng rng(7321);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double mu0 = rng.normal(), s0 = rng.uniform(0.05, 4.0);
    const double eta = rng.uniform(0.0, 1.0);
    const double mr = rng.normal(), sr = rng.uniform(0.0, 4.0);
    const double mp = rng.normal(), sp = rng.uniform(0.0, 4.0);
    CBRNState st;
    st.mu_c = {mu0};
    st.sigma_c = {s0};
    st.eta = eta;
    update_continual_stats(st, BatchStats{{mr}, {sr}}, BatchStats{{mp}, {sp}});
    worst = std::max(worst, std::abs(st.mu_c[0] - (mu0 - eta * mu0 + eta * 0.5 * (mr + mp))));
    worst = std::max(worst, std::abs(st.sigma_c[0] - (s0 - eta * s0 + eta * 0.5 * (sr + sp))));
  }
  if (worst > 1e-12) return bad(fmt("closed-form deviation %.3e exceeds 1e-12", worst));

  // Geometric convergence under constant batch statistics.
  CBRNState st;
  st.mu_c = {8.0};
  st.sigma_c = {6.0};
  st.eta = 0.01;
  const BatchStats r{{1.0}, {0.5}};
  const BatchStats p{{3.0}, {1.5}};
  const double mu_star = 2.0, sigma_star = 1.0;
  const double gap_mu = st.mu_c[0] - mu_star;
  const double gap_sg = st.sigma_c[0] - sigma_star;
  double worst_rel = 0.0;
  for (int k = 1; k <= 500; ++k) {
    update_continual_stats(st, r, p);
    const double want_mu = std::pow(0.99, k) * gap_mu;
    const double want_sg = std::pow(0.99, k) * gap_sg;
    worst_rel = std::max(worst_rel,
                         std::abs((st.mu_c[0] - mu_star) - want_mu) / std::abs(want_mu));
    worst_rel = std::max(worst_rel, std::abs((st.sigma_c[0] - sigma_star) - want_sg) /
                                        std::abs(want_sg));
  }
  if (worst_rel > 1e-9) {
    return bad(fmt("geometric decay off by relative %.3e", worst_rel));
  }
  return ok(fmt("closed form to %.1e, 500-step decay relative error %.1e", worst,
                worst_rel));
}

// ---------------------------------------------------------------------------
// Criterion 4: schedule shapes.

Outcome criterion4() {
  ScheduleParams sp;  // lambda0 1, k 5, alpha0 10
  const int64_t imax = 1000;
  if (momentum_lambda(sp, 0, imax) != 1.0) return bad("lambda(0) != 1");
  double prev = 2.0;
  for (int64_t i = 0; i <= imax; ++i) {
    const double l = momentum_lambda(sp, i, imax);
    if (!(l < prev)) return bad(fmt("lambda not strictly decreasing at %lld",
                                    static_cast<long long>(i)));
    prev = l;
  }
  if (alpha_schedule(10.0, 0, imax) != 10.0) return bad("alpha(0) != 10");
  if (alpha_schedule(10.0, imax, imax) != 0.0) return bad("alpha(I_max) != 0");
  const double bow =
      std::abs(alpha_schedule(10.0, 0, imax) - 2.0 * alpha_schedule(10.0, imax / 2, imax) +
               alpha_schedule(10.0, imax, imax));
  if (bow > 1e-12) return bad(fmt("alpha not collinear: %.3e", bow));
  return ok(fmt("lambda(0)=1 strictly decreasing to %.3e; alpha 10 -> 0 linear",
                momentum_lambda(sp, imax, imax)));
}

// ---------------------------------------------------------------------------
// Criterion 5: pseudo-label boundary behaviour.

Outcome criterion5() {
  Rng rng(5150);
  const int n = 1, h = 20, w = 25, c_old = 3, c_new = 4;
  Tensor old_probs(n, c_old, h, w), new_probs(n, c_new, h, w);
  auto fill_dist = [&](Tensor& t) {
    for (size_t k = 0; k < t.plane(); ++k) {
      double sum = 0.0;
      for (int ch = 0; ch < t.c; ++ch) {
        const double v = rng.uniform(0.02, 1.0);
        t.chan(0, ch)[k] = v;
        sum += v;
      }
      for (int ch = 0; ch < t.c; ++ch) t.chan(0, ch)[k] /= sum;
    }
  };
  fill_dist(old_probs);
  fill_dist(new_probs);
  IntTensor gt(n, h, w);
  for (size_t i = 0; i < gt.v.size(); ++i) gt.v[i] = (rng.below(4) == 0) ? 3 : -1;

  double worst_keep = 0.0, worst_fresh = 0.0, worst_onehot = 0.0;
  const PseudoLabel keep = build_pseudo_label(old_probs, new_probs, gt, 1.0);
  const PseudoLabel fresh = build_pseudo_label(old_probs, new_probs, gt, 1e-9);
  const PseudoLabel mid = build_pseudo_label(old_probs, new_probs, gt, 0.37);
  for (size_t k = 0; k < keep.soft.plane(); ++k) {
    if (gt.v[k] >= 0) {
      for (const PseudoLabel* pl : {&keep, &fresh, &mid}) {
        for (int ch = 0; ch < c_new; ++ch) {
          const double want = (ch == gt.v[k]) ? 1.0 : 0.0;
          worst_onehot = std::max(worst_onehot,
                                  std::abs(pl->soft.chan(0, ch)[k] - want));
        }
      }
      continue;
    }
    double renorm_sum = 0.0;
    for (int ch = 0; ch < c_old; ++ch) renorm_sum += new_probs.chan(0, ch)[k];
    for (int ch = 0; ch < c_old; ++ch) {
      worst_keep = std::max(worst_keep, std::abs(keep.soft.chan(0, ch)[k] -
                                                 old_probs.chan(0, ch)[k]));
      const double renorm = new_probs.chan(0, ch)[k] / renorm_sum;
      worst_fresh = std::max(worst_fresh, std::abs(fresh.soft.chan(0, ch)[k] - renorm));
    }
  }
  if (worst_keep > 1e-6) return bad(fmt("lambda=1 deviates by %.3e", worst_keep));
  if (worst_fresh > 1e-6) return bad(fmt("lambda->0 deviates by %.3e", worst_fresh));
  if (worst_onehot > 0.0) return bad(fmt("ground-truth pixels not one-hot: %.3e",
                                         worst_onehot));
  return ok(fmt("lambda=1 dev %.1e, lambda->0 dev %.1e, ground truth exactly one-hot",
                worst_keep, worst_fresh));
}

// ---------------------------------------------------------------------------
// Criterion 6: loss gradients against central finite differences.

Outcome criterion6() {
  NetworkConfig cfg;
  cfg.in_channels = 1;
  cfg.base_width = 3;
  cfg.depth = 1;
  cfg.num_categories = 3;
  Network net = build_network(cfg, 61);
  Tensor x(2, 1, 8, 8);
  Rng rng(62);
  for (double& v : x.v) v = rng.uniform(0.0, 1.0);

  IntTensor labels(2, 8, 8);
  for (int32_t& v : labels.v) v = static_cast<int32_t>(rng.below(3));
  PseudoLabel pl;
  pl.soft = one_hot(labels, 3);
  pl.source.assign(labels.v.size(), kSourceNewGt);
  // Soften half the pixels so the soft-target path is exercised too.
  for (int i = 0; i < 2; ++i) {
    for (size_t k = 0; k < pl.soft.plane(); k += 2) {
      double sum = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double v = rng.uniform(0.05, 1.0);
        pl.soft.chan(i, c)[k] = v;
        sum += v;
      }
      for (int c = 0; c < 3; ++c) pl.soft.chan(i, c)[k] /= sum;
    }
  }
  const double alpha = 1.3;

  auto loss_value = [&]() {
    ForwardTrace trace;
    const Tensor logits = forward(net, x, Mode::Train, &trace);
    return total_loss(logits, pl, alpha, nullptr).total;
  };

  ForwardTrace trace;
  const Tensor logits = forward(net, x, Mode::Train, &trace);
  Tensor dlogits = zeros_like(logits);
  total_loss(logits, pl, alpha, &dlogits);
  NetGrads grads = make_grads(net);
  zero_grads(grads);
  backward(net, trace, dlogits, grads);

  std::vector<double> flat;
  for (size_t li = 0; li < net.layers.size(); ++li) {
    for (double g : grads.layer[li].weight.v) flat.push_back(g);
    for (double g : grads.layer[li].bias) flat.push_back(g);
  }
  std::vector<double*> refs = param_refs(net);
  if (refs.size() != flat.size()) return bad("parameter view misaligned");

  Rng pick(63);
  const double h = 1e-5;
  int checked = 0;
  double worst_rel = 0.0;
  std::set<size_t> used;
  for (int s = 0; s < 400 && checked < 260; ++s) {
    const size_t i = static_cast<size_t>(pick.below(refs.size()));
    if (!used.insert(i).second) continue;
    const double keep = *refs[i];
    *refs[i] = keep + h;
    const double lp = loss_value();
    *refs[i] = keep - h;
    const double lm = loss_value();
    *refs[i] = keep;
    const double fd = (lp - lm) / (2 * h);
    const double an = flat[i];
    if (std::abs(fd) < 1e-9 && std::abs(an) < 1e-9) continue;
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-9});
    worst_rel = std::max(worst_rel, rel);
    ++checked;
  }
  if (checked < 200) return bad(fmt("only %d informative parameters sampled", checked));
  if (worst_rel > 1e-3) {
    return bad(fmt("worst relative gradient error %.3e over %d parameters", worst_rel,
                   checked));
  }
  return ok(fmt("%d parameters, worst relative error %.2e", checked, worst_rel));
}

// ---------------------------------------------------------------------------
// Criterion 7: rigidity parameters stay byte-identical through a stage.

Outcome criterion7() {
  const BigRun& br = big_run();
  if (!br.ok) return bad("benchmark run failed: " + br.error);
  const std::string dir = br.run_dirs.at("hsi");
  for (int t = 1; t <= 2; ++t) {
    const Checkpoint prev =
        load_checkpoint(dir + "/stage_" + std::to_string(t - 1) + ".ckpt");
    const Checkpoint dual =
        load_checkpoint(dir + "/stage_" + std::to_string(t) + ".dual.ckpt");
    if (!dual.net.dual()) return bad(fmt("stage %d dual checkpoint not dual", t));

    // Reconstruct the rigidity branch exactly as the stage set it up.
    const uint64_t stage_seed =
        Rng::mix(fixtures::kRunSeed, 0xA0 + static_cast<uint64_t>(t));
    Network expect = rebuild_as_dual(prev.net, prev.net.config.cbrn_eta, true);
    expand_head(expect, 1, Rng::mix(stage_seed, 3));

    if (expect.layers.size() != dual.net.layers.size()) {
      return bad(fmt("stage %d layer count mismatch", t));
    }
    for (size_t li = 0; li < expect.layers.size(); ++li) {
      const ConvParams& want = *expect.layers[li].rigidity;
      const ConvParams& got = *dual.net.layers[li].rigidity;
      if (want.weight.v.size() != got.weight.v.size() ||
          std::memcmp(want.weight.v.data(), got.weight.v.data(),
                      want.weight.v.size() * sizeof(double)) != 0 ||
          std::memcmp(want.bias.data(), got.bias.data(),
                      want.bias.size() * sizeof(double)) != 0) {
        return bad(fmt("stage %d rigidity drifted in layer %s", t,
                       expect.layers[li].path.c_str()));
      }
    }
  }
  return ok("rigidity byte-identical across both incremental stages");
}

// ---------------------------------------------------------------------------
// Criterion 8: metric implementations against brute-force oracles.

double dice_reference(const Mask& p, const Mask& g) {
  int inter = 0, sp = 0, sg = 0;
  for (size_t i = 0; i < p.v.size(); ++i) {
    inter += (p.v[i] && g.v[i]) ? 1 : 0;
    sp += p.v[i] ? 1 : 0;
    sg += g.v[i] ? 1 : 0;
  }
  if (sp + sg == 0) return 1.0;
  return 2.0 * inter / static_cast<double>(sp + sg);
}

std::optional<double> hausdorff_reference(const Mask& a, const Mask& b) {
  const Mask ba = boundary_4(a), bb = boundary_4(b);
  std::vector<std::pair<int, int>> pa, pb;
  for (int y = 0; y < ba.h; ++y) {
    for (int x = 0; x < ba.w; ++x) {
      if (ba.at(y, x)) pa.emplace_back(y, x);
      if (bb.at(y, x)) pb.emplace_back(y, x);
    }
  }
  if (pa.empty() || pb.empty()) return std::nullopt;
  auto directed = [](const std::vector<std::pair<int, int>>& from,
                     const std::vector<std::pair<int, int>>& to) {
    double worst = 0.0;
    for (const auto& [fy, fx] : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [ty, tx] : to) {
        best = std::min(best, double(fy - ty) * (fy - ty) + double(fx - tx) * (fx - tx));
      }
      worst = std::max(worst, best);
    }
    return std::sqrt(worst);
  };
  return std::max(directed(pa, pb), directed(pb, pa));
}

Outcome criterion8() {
  // Exhaustive 3x3: every mask pair.
  std::vector<Mask> all;
  all.reserve(512);
  for (int bits = 0; bits < 512; ++bits) {
    Mask m(3, 3);
    for (int i = 0; i < 9; ++i) m.v[static_cast<size_t>(i)] = (bits >> i) & 1;
    all.push_back(std::move(m));
  }
  for (size_t i = 0; i < all.size(); ++i) {
    for (size_t j = 0; j < all.size(); ++j) {
      const double want = dice_reference(all[i], all[j]);
      if (dice(all[i], all[j]) != want) {
        return bad(fmt("dice mismatch on 3x3 pair %zu/%zu", i, j));
      }
      const auto got_hd = hausdorff(all[i], all[j]);
      const auto want_hd = hausdorff_reference(all[i], all[j]);
      if (got_hd.has_value() != want_hd.has_value()) {
        return bad(fmt("hausdorff definedness mismatch on 3x3 pair %zu/%zu", i, j));
      }
      if (got_hd && std::abs(*got_hd - *want_hd) > 1e-12) {
        return bad(fmt("hausdorff mismatch on 3x3 pair %zu/%zu: %f vs %f", i, j,
                       *got_hd, *want_hd));
      }
    }
  }
  // 100 random 16x16 pairs.
  Rng rng(888);
  for (int trial = 0; trial < 100; ++trial) {
    Mask a(16, 16), b(16, 16);
    const double da = rng.uniform(0.05, 0.5), db = rng.uniform(0.05, 0.5);
    for (auto& v : a.v) v = rng.uniform01() < da;
    for (auto& v : b.v) v = rng.uniform01() < db;
    if (dice(a, b) != dice_reference(a, b)) {
      return bad(fmt("dice mismatch on random pair %d", trial));
    }
    const auto got = hausdorff(a, b);
    const auto want = hausdorff_reference(a, b);
    if (got.has_value() != want.has_value() ||
        (got && std::abs(*got - *want) > 1e-12)) {
      return bad(fmt("hausdorff mismatch on random pair %d", trial));
    }
  }
  return ok("512x512 exhaustive 3x3 pairs and 100 random 16x16 pairs all exact");
}

// ---------------------------------------------------------------------------
// Criterion 9: the desk-scale forgetting experiment.

Outcome criterion9() {
  const BigRun& br = big_run();
  if (!br.ok) return bad("benchmark run failed: " + br.error);

  const double hsi_old = final_stage_dice(br.results.at("hsi"), {1, 2});
  const double ft_old = final_stage_dice(br.results.at("finetune"), {1, 2});
  const double hsi_s1 = final_stage_dice(br.results.at("hsi"), {1});
  const double si_s1 = final_stage_dice(br.results.at("si_only"), {1});
  const double hsi_macro = final_stage_dice(br.results.at("hsi"), {1, 2, 3});
  const double joint_macro = final_stage_dice(br.results.at("joint_static"), {1, 2, 3});

  const std::string numbers =
      fmt("old hsi %.4f vs finetune %.4f; s1 hsi %.4f vs si_only %.4f; "
          "macro joint %.4f vs hsi %.4f; %.0f s",
          hsi_old, ft_old, hsi_s1, si_s1, joint_macro, hsi_macro, br.elapsed_seconds);

  if (br.elapsed_seconds >= 1800.0) {
    return bad("exceeded the 30-minute budget: " + numbers);
  }
  if (hsi_old - ft_old < 0.05) {
    return bad("old-structure gap below 5 points: " + numbers);
  }
  if (joint_macro < hsi_macro) {
    return bad("joint upper bound below the incremental method: " + numbers);
  }
  if (hsi_s1 < si_s1) {
    return bad("decayed mixing does not beat the static teacher on s1: " + numbers);
  }
  struct Pin { double ref; double got; const char* name; };
  const Pin pins[] = {
      {fixtures::kRefHsiOldDice, hsi_old, "hsi old"},
      {fixtures::kRefFinetuneOldDice, ft_old, "finetune old"},
      {fixtures::kRefHsiS1Dice, hsi_s1, "hsi s1"},
      {fixtures::kRefSiOnlyS1Dice, si_s1, "si_only s1"},
      {fixtures::kRefHsiMacro, hsi_macro, "hsi macro"},
      {fixtures::kRefJointMacro, joint_macro, "joint macro"},
  };
  for (const Pin& p : pins) {
    if (p.ref < 0.0) continue;  // not pinned yet
    if (std::abs(p.got - p.ref) > fixtures::kSlack) {
      return bad(fmt("%s = %.4f drifted beyond %.4f +/- %.2f: ", p.name, p.got, p.ref,
                     fixtures::kSlack) + numbers);
    }
  }
  return ok(numbers);
}

// ---------------------------------------------------------------------------
// Criterion 10: bit-stable determinism of the full protocol.

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome criterion10() {
  // A complete three-stage protocol at a small budget, run twice end to end
  // (data generation, training, evaluation, report), compared byte for byte.
  BenchmarkSpec bench;
  bench.domains = default_domains();
  bench.phantom.image_size = 32;
  bench.phantom.center_jitter = 3.0;
  bench.phantom.axis1_min = 4.0;
  bench.phantom.axis1_max = 6.0;
  bench.phantom.axis2_min = 3.5;
  bench.phantom.axis2_max = 5.5;
  bench.train_per_stage = 8;
  bench.val_per_stage = 3;
  bench.test_per_domain = 3;
  bench.preview_count = 1;
  bench.master_seed = 4321;

  ExperimentConfig cfg = default_experiment_config();
  cfg.data = bench;
  cfg.network.base_width = 4;
  cfg.network.depth = 2;
  cfg.training.epochs = 2;
  cfg.training.batch_size = 4;
  cfg.training.lr = 0.01;  // value-free here: only bit-stability matters
  cfg.run_seed = 99;

  fs::create_directories("acceptance_scratch/determinism");
  const std::string config_path = "acceptance_scratch/determinism/config.json";
  {
    std::ofstream f(config_path, std::ios::binary);
    f << experiment_config_to_json(cfg);
  }
  std::ostringstream sink;
  const std::string data_a = "acceptance_scratch/determinism/data_a";
  const std::string data_b = "acceptance_scratch/determinism/data_b";
  fs::remove_all(data_a);
  fs::remove_all(data_b);
  generate_benchmark(bench, data_a, false, sink);
  generate_benchmark(bench, data_b, false, sink);

  std::vector<std::string> reports;
  for (const char* tag : {"a", "b"}) {
    const std::string data = std::string("acceptance_scratch/determinism/data_") + tag;
    const std::string run = std::string("acceptance_scratch/determinism/run_") + tag;
    const std::string rep = std::string("acceptance_scratch/determinism/report_") + tag;
    fs::remove_all(run);
    fs::remove_all(rep);
    cmd_run(config_path, "hsi", data, run, std::nullopt, "", sink);
    cmd_report({run}, rep, sink);
    reports.push_back(rep);
  }
  const std::string run_a = "acceptance_scratch/determinism/run_a";
  const std::string run_b = "acceptance_scratch/determinism/run_b";
  for (const char* f : {"rows.json", "stage_0.ckpt", "stage_1.ckpt", "stage_2.ckpt",
                        "stage_1.dual.ckpt", "stage_2.dual.ckpt", "train_log.txt"}) {
    if (fnv1a64_file(run_a + "/" + f) != fnv1a64_file(run_b + "/" + f)) {
      return bad(fmt("run artifact differs between identical runs: %s", f));
    }
  }
  for (const char* f : {"report.json", "report.txt", "dice_vs_stage.svg"}) {
    if (slurp(reports[0] + "/" + f) != slurp(reports[1] + "/" + f)) {
      return bad(fmt("report artifact differs between identical runs: %s", f));
    }
  }
  return ok("two full protocol runs produced bit-identical artifacts and reports");
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    Outcome (*fn)();
  };
  const Entry entries[] = {
      {"merge equivalence", criterion1},
      {"deployment parameter parity", criterion2},
      {"continual statistics arithmetic", criterion3},
      {"schedule correctness", criterion4},
      {"pseudo-label boundary fidelity", criterion5},
      {"gradient oracle", criterion6},
      {"rigidity freeze", criterion7},
      {"metric oracles", criterion8},
      {"forgetting experiment", criterion9},
      {"determinism", criterion10},
  };
  int failures = 0;
  for (size_t i = 0; i < sizeof(entries) / sizeof(entries[0]); ++i) {
    Outcome o;
    try {
      o = entries[i].fn();
    } catch (const std::exception& e) {
      o = bad(std::string("exception: ") + e.what());
    }
    if (!o.pass) ++failures;
    std::printf("[%s] criterion %zu: %s (%s)\n", o.pass ? "PASS" : "FAIL", i + 1,
                entries[i].name, o.detail.c_str());
    std::fflush(stdout);
  }
  if (failures != 0) {
    std::printf("%d of 10 criteria failed\n", failures);
    return 1;
  }
  std::printf("all 10 criteria passed\n");
  return 0;
}
