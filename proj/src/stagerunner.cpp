#include "hsiseg/stagerunner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "hsiseg/rng.hpp"

namespace fs = std::filesystem;

namespace hsiseg {

void TrainSettings::validate() const {
  if (epochs < 1) throw ConfigError("training: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("training: batch_size must be >= 1");
  if (lr <= 0.0) throw ConfigError("training: lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ConfigError("training: momentum outside [0,1)");
  }
  if (weight_decay < 0.0) throw ConfigError("training: weight_decay must be >= 0");
}

Tensor batch_images(const Dataset& ds, const std::vector<size_t>& idx) {
  if (idx.empty()) throw std::invalid_argument("batch_images: empty batch");
  const Sample& first = ds.samples.at(idx[0]);
  Tensor x(static_cast<int>(idx.size()), 1, first.h, first.w);
  for (size_t i = 0; i < idx.size(); ++i) {
    const Sample& s = ds.samples.at(idx[i]);
    if (s.h != first.h || s.w != first.w) {
      throw DataError("batch_images: inconsistent sample sizes");
    }
    std::memcpy(x.chan(static_cast<int>(i), 0), s.image.data(),
                s.image.size() * sizeof(double));
  }
  return x;
}

IntTensor batch_masks(const Dataset& ds, const std::vector<size_t>& idx, bool full) {
  if (idx.empty()) throw std::invalid_argument("batch_masks: empty batch");
  const Sample& first = ds.samples.at(idx[0]);
  IntTensor y(static_cast<int>(idx.size()), first.h, first.w);
  for (size_t i = 0; i < idx.size(); ++i) {
    const Sample& s = ds.samples.at(idx[i]);
    const std::vector<int32_t>& src = full ? s.full_mask : s.mask;
    std::memcpy(y.sample(static_cast<int>(i)), src.data(), src.size() * sizeof(int32_t));
  }
  return y;
}

namespace {

std::vector<std::vector<size_t>> make_batches(size_t n, int batch_size, Rng& rng) {
  std::vector<size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  rng.shuffle(perm);
  std::vector<std::vector<size_t>> batches;
  for (size_t b = 0; b < n; b += static_cast<size_t>(batch_size)) {
    const size_t hi = std::min(n, b + static_cast<size_t>(batch_size));
    batches.emplace_back(perm.begin() + static_cast<ptrdiff_t>(b),
                         perm.begin() + static_cast<ptrdiff_t>(hi));
  }
  return batches;
}

void check_finite_loss(double loss, int stage, int64_t iter) {
  if (!std::isfinite(loss)) {
    throw NumericalError("non-finite loss at stage " + std::to_string(stage) +
                         " iteration " + std::to_string(iter));
  }
}

// Map category ids in a mask batch to network channel indices; -1 passes
// through as "unlabeled".
IntTensor ids_to_channels(const IntTensor& ids, const std::vector<int>& label_space) {
  std::map<int32_t, int32_t> to_chan;
  for (size_t c = 0; c < label_space.size(); ++c) {
    to_chan[label_space[c]] = static_cast<int32_t>(c);
  }
  IntTensor out(ids.n, ids.h, ids.w);
  for (size_t i = 0; i < ids.v.size(); ++i) {
    const int32_t g = ids.v[i];
    if (g < 0) {
      out.v[i] = -1;
      continue;
    }
    auto it = to_chan.find(g);
    if (it == to_chan.end()) {
      throw DataError("mask contains category id " + std::to_string(g) +
                      " outside the label space");
    }
    out.v[i] = it->second;
  }
  return out;
}

void log_iter(std::ostream& log, int stage, int64_t iter, int64_t iter_max,
              const TotalLoss& tl, double lambda) {
  char line[192];
  std::snprintf(line, sizeof(line),
                "stage %d iter %lld/%lld loss %.9g ce %.9g se %.9g lambda %.6g alpha %.6g\n",
                stage, static_cast<long long>(iter + 1), static_cast<long long>(iter_max),
                tl.total, tl.ce, tl.se, lambda, tl.alpha);
  log << line;
}

void log_epoch(std::ostream& log, int stage, int epoch, int epochs, double mean_loss,
               double val_dice) {
  char line[160];
  std::snprintf(line, sizeof(line),
                "stage %d epoch %d/%d mean_loss %.9g val_dice %.6f\n", stage,
                epoch + 1, epochs, mean_loss, val_dice);
  log << line;
}

}  // namespace

double mean_dice(const Network& net, const Dataset& ds, int eval_batch) {
  if (ds.samples.empty()) throw std::invalid_argument("mean_dice: empty dataset");
  double sum = 0.0;
  size_t count = 0;
  std::vector<size_t> idx;
  for (size_t b = 0; b < ds.samples.size(); b += static_cast<size_t>(eval_batch)) {
    idx.clear();
    for (size_t i = b; i < std::min(ds.samples.size(), b + static_cast<size_t>(eval_batch)); ++i) {
      idx.push_back(i);
    }
    const Tensor logits = forward(net, batch_images(ds, idx), Mode::Eval);
    const IntTensor pred = argmax_channels(logits);
    const IntTensor gt = batch_masks(ds, idx, true);
    for (int n = 0; n < pred.n; ++n) {
      for (int c = 1; c < net.config.num_categories; ++c) {
        sum += dice(mask_of_category(pred, n, c), mask_of_category(gt, n, c));
        ++count;
      }
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

Checkpoint train_supervised(const NetworkConfig& config, const Dataset& train,
                            const Dataset& val, const std::vector<int>& label_space,
                            bool use_full_masks, const TrainSettings& ts,
                            uint64_t seed, int stage_index, std::ostream& log,
                            std::vector<double>* epoch_losses) {
  ts.validate();
  if (label_space.size() < 2) {
    throw std::invalid_argument("train_supervised: label space needs >= 2 categories");
  }
  if (train.samples.empty()) throw DataError("train_supervised: empty training set");
  NetworkConfig cfg = config;
  cfg.num_categories = static_cast<int>(label_space.size());
  Network net = build_network(cfg, Rng::mix(seed, 1));
  Rng shuffle_rng(Rng::mix(seed, 2));

  const int C = cfg.num_categories;
  NetGrads grads = make_grads(net);
  NetGrads velocity = make_grads(net);  // zero-initialized momentum buffers
  int64_t iter = 0;
  const int64_t iters_per_epoch =
      static_cast<int64_t>((train.samples.size() + static_cast<size_t>(ts.batch_size) - 1) /
                           static_cast<size_t>(ts.batch_size));
  const int64_t iter_max = iters_per_epoch * ts.epochs;

  for (int epoch = 0; epoch < ts.epochs; ++epoch) {
    double loss_sum = 0.0;
    int64_t loss_n = 0;
    for (const auto& idx : make_batches(train.samples.size(), ts.batch_size, shuffle_rng)) {
      const Tensor x = batch_images(train, idx);
      IntTensor y = ids_to_channels(batch_masks(train, idx, use_full_masks), label_space);
      for (int32_t& v : y.v) {
        if (v < 0) {
          throw DataError("train_supervised: unlabeled pixel in supervised data");
        }
      }
      ForwardTrace trace;
      const Tensor logits = forward(net, x, Mode::Train, &trace);
      const Tensor targets = one_hot(y, C);
      Tensor dlogits = zeros_like(logits);
      TotalLoss tl;
      tl.ce = cross_entropy_soft(logits, targets, &dlogits);
      tl.total = tl.ce;
      check_finite_loss(tl.total, stage_index, iter);
      zero_grads(grads);
      backward(net, trace, dlogits, grads);
      add_weight_decay(grads, net, ts.weight_decay);
      momentum_update(velocity, grads, ts.momentum);
      sgd_step(net, velocity, ts.lr);
      commit_stat_updates(net, trace);
      log_iter(log, stage_index, iter, iter_max, tl, 0.0);
      loss_sum += tl.total;
      ++loss_n;
      ++iter;
    }
    const double mean_loss = loss_sum / static_cast<double>(loss_n);
    if (epoch_losses) epoch_losses->push_back(mean_loss);
    log_epoch(log, stage_index, epoch, ts.epochs, mean_loss,
              val.samples.empty() ? 0.0 : mean_dice(net, val));
  }

  Checkpoint ck;
  ck.net = std::move(net);
  ck.label_space = label_space;
  ck.stage_index = stage_index;
  ck.seed = seed;
  return ck;
}

StageResult run_stage(const Checkpoint& prev, const std::vector<int>& new_categories,
                      const Dataset& train, const Dataset& val,
                      const MethodVariant& variant, const ScheduleParams& schedule,
                      const TrainSettings& ts, uint64_t seed, std::ostream& log) {
  ts.validate();
  if (prev.net.dual()) {
    throw std::invalid_argument("run_stage: previous checkpoint must be in merged form");
  }
  if (new_categories.empty()) {
    throw std::invalid_argument("run_stage: a stage must introduce >= 1 category");
  }
  if (variant.joint) {
    throw std::invalid_argument("run_stage: the joint baseline has no incremental stages");
  }
  if (train.samples.empty()) throw DataError("run_stage: empty training set");

  const int stage_index = prev.stage_index + 1;
  const double eta = prev.net.config.cbrn_eta;
  const Network& old_net = prev.net;  // frozen previous-stage model

  Network net;
  if (variant.use_dual) {
    net = rebuild_as_dual(prev.net, eta, variant.use_cbrn);
  } else {
    net = prev.net;
    if (variant.use_cbrn) convert_norms_to_continual(net, eta);
  }
  expand_head(net, static_cast<int>(new_categories.size()), Rng::mix(seed, 3));

  std::vector<int> label_space = prev.label_space;
  label_space.insert(label_space.end(), new_categories.begin(), new_categories.end());
  const int C = static_cast<int>(label_space.size());
  if (net.config.num_categories != C) {
    throw std::logic_error("run_stage: head growth disagrees with label space");
  }

  Rng shuffle_rng(Rng::mix(seed, 2));
  NetGrads grads = make_grads(net);
  NetGrads velocity = make_grads(net);  // zero-initialized momentum buffers
  const int64_t iters_per_epoch =
      static_cast<int64_t>((train.samples.size() + static_cast<size_t>(ts.batch_size) - 1) /
                           static_cast<size_t>(ts.batch_size));
  const int64_t iter_max = iters_per_epoch * ts.epochs;
  int64_t iter = 0;

  StageResult result;
  for (int epoch = 0; epoch < ts.epochs; ++epoch) {
    double loss_sum = 0.0;
    int64_t loss_n = 0;
    for (const auto& idx : make_batches(train.samples.size(), ts.batch_size, shuffle_rng)) {
      const Tensor x = batch_images(train, idx);
      const IntTensor gt = ids_to_channels(batch_masks(train, idx, false), label_space);

      const double lambda = variant.use_mmd
                                ? momentum_lambda(schedule, iter, iter_max)
                                : schedule.lambda0;
      const double alpha = variant.use_self_entropy
                               ? alpha_schedule(schedule.alpha0, iter, iter_max)
                               : 0.0;

      ForwardTrace trace;
      const Tensor logits = forward(net, x, Mode::Train, &trace);
      Tensor dlogits = zeros_like(logits);
      TotalLoss tl;
      if (variant.use_pseudo_labels) {
        const Tensor old_probs = softmax_channels(forward(old_net, x, Mode::Eval));
        const Tensor new_probs = softmax_channels(logits);
        const PseudoLabel pl = build_pseudo_label(old_probs, new_probs, gt, lambda);
        tl = total_loss(logits, pl, alpha, &dlogits);
      } else {
        // Plain fine-tuning: unlabeled pixels are treated as background.
        IntTensor y = gt;
        for (int32_t& v : y.v) {
          if (v < 0) v = 0;
        }
        PseudoLabel pl;
        pl.soft = one_hot(y, C);
        tl = total_loss(logits, pl, alpha, &dlogits);
      }
      check_finite_loss(tl.total, stage_index, iter);
      zero_grads(grads);
      backward(net, trace, dlogits, grads);
      add_weight_decay(grads, net, ts.weight_decay);
      momentum_update(velocity, grads, ts.momentum);
      sgd_step(net, velocity, ts.lr);
      commit_stat_updates(net, trace);
      log_iter(log, stage_index, iter, iter_max,
               tl, variant.use_pseudo_labels ? lambda : 0.0);
      loss_sum += tl.total;
      ++loss_n;
      ++iter;
    }
    const double mean_loss = loss_sum / static_cast<double>(loss_n);
    result.epoch_loss.push_back(mean_loss);
    log_epoch(log, stage_index, epoch, ts.epochs, mean_loss,
              val.samples.empty() ? 0.0 : mean_dice(net, val));
  }

  if (net.dual()) {
    Checkpoint dual;
    dual.net = net;
    dual.label_space = label_space;
    dual.stage_index = stage_index;
    dual.seed = seed;
    result.dual_form = std::move(dual);
  }
  merge_network(net);
  result.checkpoint.net = std::move(net);
  result.checkpoint.label_space = label_space;
  result.checkpoint.stage_index = stage_index;
  result.checkpoint.seed = seed;
  return result;
}

std::vector<MetricRow> evaluate_checkpoint(const Checkpoint& ck, const Dataset& test,
                                           const std::string& method,
                                           const HausdorffOptions& hd_opt,
                                           int eval_batch) {
  if (test.samples.empty()) throw DataError("evaluate_checkpoint: empty test set");
  std::vector<MetricRow> rows;
  std::vector<size_t> idx;
  for (size_t b = 0; b < test.samples.size(); b += static_cast<size_t>(eval_batch)) {
    idx.clear();
    for (size_t i = b; i < std::min(test.samples.size(), b + static_cast<size_t>(eval_batch)); ++i) {
      idx.push_back(i);
    }
    const Tensor logits = forward(ck.net, batch_images(test, idx), Mode::Eval);
    const IntTensor pred = argmax_channels(logits);
    const IntTensor gt = batch_masks(test, idx, true);
    for (size_t i = 0; i < idx.size(); ++i) {
      const Sample& s = test.samples[idx[i]];
      for (size_t c = 1; c < ck.label_space.size(); ++c) {
        const int id = ck.label_space[c];
        const Mask pm = mask_of_category(pred, static_cast<int>(i), static_cast<int>(c));
        const Mask gm = mask_of_category(gt, static_cast<int>(i), id);
        MetricRow r;
        r.method = method;
        r.stage = ck.stage_index;
        r.domain = s.domain_id;
        r.category = id;
        r.dice = dice(pm, gm);
        r.hd = hausdorff(pm, gm, hd_opt);
        rows.push_back(std::move(r));
      }
    }
  }
  return rows;
}

ProtocolResult run_protocol(const MethodVariant& variant, const std::string& data_dir,
                            const std::string& out_dir, const ProtocolSettings& ps,
                            std::ostream& log) {
  ps.train.validate();
  verify_benchmark(data_dir);

  // Recover the benchmark shape from its manifest.
  std::ifstream mf(fs::path(data_dir) / "manifest.json");
  nlohmann::json mj = nlohmann::json::parse(mf);
  const BenchmarkSpec bench = benchmark_spec_from_json(mj.at("spec").dump());

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir + ": " + ec.message());
  std::ofstream tlog(fs::path(out_dir) / "train_log.txt", std::ios::trunc);
  if (!tlog) throw DataError("cannot open train_log.txt under " + out_dir);

  auto stage_path = [&](int t, bool dual) {
    return (fs::path(out_dir) /
            ("stage_" + std::to_string(t) + (dual ? ".dual.ckpt" : ".ckpt")))
        .string();
  };
  auto load_split = [&](const std::string& name) {
    return load_dataset((fs::path(data_dir) / name).string());
  };

  const Dataset test = load_split("test.bin");
  ProtocolResult result;
  result.method = variant.name;

  auto record_stage = [&](const Checkpoint& ck, const StageResult* sr) {
    save_checkpoint(ck, stage_path(ck.stage_index, false));
    StageOutcome out;
    out.stage_index = ck.stage_index;
    out.checkpoint_path = stage_path(ck.stage_index, false);
    if (sr) {
      out.epoch_loss = sr->epoch_loss;
      if (sr->dual_form) {
        out.dual_checkpoint_path = stage_path(ck.stage_index, true);
        save_checkpoint(*sr->dual_form, out.dual_checkpoint_path);
      }
    }
    std::vector<MetricRow> rows =
        evaluate_checkpoint(ck, test, variant.name, ps.hd);
    out.test_dice_macro = aggregate(rows).dice_macro_mean;
    char line[128];
    std::snprintf(line, sizeof(line), "%s stage %d test dice (macro) %.6f\n",
                  variant.name.c_str(), ck.stage_index, out.test_dice_macro);
    log << line;
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
    result.stages.push_back(std::move(out));
  };

  if (variant.joint) {
    std::vector<Dataset> trains, vals;
    for (int t = 0; t < bench.stages; ++t) {
      trains.push_back(load_split("stage" + std::to_string(t) + "_train.bin"));
      vals.push_back(load_split("stage" + std::to_string(t) + "_val.bin"));
    }
    std::vector<double> losses;
    Checkpoint ck = joint_static_train(trains, vals, bench.stages, ps.network, ps.train,
                                       Rng::mix(ps.master_seed, 11), bench.stages - 1,
                                       tlog, &losses);
    StageResult sr;
    sr.epoch_loss = losses;
    record_stage(ck, &sr);
    return result;
  }

  // Stage 0: fully supervised over {background, structure 1}.
  Checkpoint prev;
  const std::vector<int> stage0_labels = {0, 1};
  if (!ps.stage0_from.empty()) {
    prev = load_checkpoint(ps.stage0_from);
    NetworkConfig want = ps.network;
    want.num_categories = 2;
    if (prev.label_space != stage0_labels ||
        network_config_to_json(prev.net.config) != network_config_to_json(want) ||
        prev.net.dual()) {
      throw ConfigError("stage0_from checkpoint does not match this protocol");
    }
    log << variant.name << " reusing stage-0 checkpoint " << ps.stage0_from << "\n";
  } else {
    prev = train_supervised(ps.network, load_split("stage0_train.bin"),
                            load_split("stage0_val.bin"), stage0_labels, false,
                            ps.train, Rng::mix(ps.master_seed, 10), 0, tlog);
  }
  record_stage(prev, nullptr);

  for (int t = 1; t < bench.stages; ++t) {
    StageResult sr = run_stage(prev, {t + 1}, load_split("stage" + std::to_string(t) + "_train.bin"),
                               load_split("stage" + std::to_string(t) + "_val.bin"),
                               variant, ps.schedule, ps.train,
                               Rng::mix(ps.master_seed, 0xA0 + static_cast<uint64_t>(t)),
                               tlog);
    record_stage(sr.checkpoint, &sr);
    prev = std::move(sr.checkpoint);
  }
  return result;
}

}  // namespace hsiseg
