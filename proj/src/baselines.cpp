#include "hsiseg/baselines.hpp"

#include "hsiseg/errors.hpp"
#include "hsiseg/stagerunner.hpp"

namespace hsiseg {

const std::vector<MethodVariant>& variant_catalog() {
  static const std::vector<MethodVariant> catalog = [] {
    std::vector<MethodVariant> v;

    MethodVariant hsi;
    hsi.name = "hsi";
    hsi.description = "full method: dual branches, continual renorm, "
                      "decayed pseudo-label mixing, self-entropy";
    v.push_back(hsi);

    MethodVariant no_mmd = hsi;
    no_mmd.name = "hsi_no_mmd";
    no_mmd.use_mmd = false;
    no_mmd.description = "ablation: mixing weight pinned to its initial value";
    v.push_back(no_mmd);

    MethodVariant no_d3f = hsi;
    no_d3f.name = "hsi_no_d3f";
    no_d3f.use_dual = false;
    no_d3f.description = "ablation: single trainable branch, no frozen copies";
    v.push_back(no_d3f);

    MethodVariant no_cbrn = hsi;
    no_cbrn.name = "hsi_no_cbrn";
    no_cbrn.use_cbrn = false;
    no_cbrn.description = "ablation: plain batch norm instead of continual renorm";
    v.push_back(no_cbrn);

    MethodVariant si_only;
    si_only.name = "si_only";
    si_only.use_dual = false;
    si_only.use_cbrn = false;
    si_only.use_mmd = false;
    si_only.description = "static-teacher distillation with self-entropy only";
    v.push_back(si_only);

    MethodVariant finetune;
    finetune.name = "finetune";
    finetune.use_dual = false;
    finetune.use_cbrn = false;
    finetune.use_mmd = false;
    finetune.use_pseudo_labels = false;
    finetune.use_self_entropy = false;
    finetune.description = "naive fine-tuning on the new annotations only";
    v.push_back(finetune);

    MethodVariant joint;
    joint.name = "joint_static";
    joint.use_dual = false;
    joint.use_cbrn = false;
    joint.use_mmd = false;
    joint.use_pseudo_labels = false;
    joint.use_self_entropy = false;
    joint.joint = true;
    joint.description = "upper bound: supervised on all stages' data at once";
    v.push_back(joint);

    return v;
  }();
  return catalog;
}

const MethodVariant& find_variant(const std::string& name) {
  for (const MethodVariant& v : variant_catalog()) {
    if (v.name == name) return v;
  }
  std::string known;
  for (const MethodVariant& v : variant_catalog()) {
    if (!known.empty()) known += ", ";
    known += v.name;
  }
  throw ConfigError("unknown method '" + name + "' (expected one of: " + known + ")");
}

PseudoLabel si_only_pseudo_label(const Tensor& old_probs, const Tensor& new_probs,
                                 const IntTensor& new_gt) {
  return build_pseudo_label(old_probs, new_probs, new_gt, 1.0);
}

Checkpoint joint_static_train(const std::vector<Dataset>& stage_trains,
                              const std::vector<Dataset>& stage_vals, int stages,
                              const NetworkConfig& config, const TrainSettings& ts,
                              uint64_t seed, int stage_index, std::ostream& log,
                              std::vector<double>* epoch_losses) {
  if (stage_trains.empty()) throw DataError("joint_static_train: no training data");
  Dataset train_union, val_union;
  auto append = [](Dataset& dst, const Dataset& src) {
    if (dst.image_size == 0) dst.image_size = src.image_size;
    if (dst.image_size != src.image_size) {
      throw DataError("joint_static_train: datasets disagree on image size");
    }
    dst.samples.insert(dst.samples.end(), src.samples.begin(), src.samples.end());
  };
  for (const Dataset& d : stage_trains) append(train_union, d);
  for (const Dataset& d : stage_vals) append(val_union, d);
  train_union.split = "train";
  val_union.split = "val";

  std::vector<int> label_space;
  for (int c = 0; c <= stages; ++c) label_space.push_back(c);
  return train_supervised(config, train_union, val_union, label_space,
                          /*use_full_masks=*/true, ts, seed, stage_index, log,
                          epoch_losses);
}

}  // namespace hsiseg
