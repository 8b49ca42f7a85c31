#pragma once

#include <string>
#include <vector>

#include "hsiseg/distill.hpp"

namespace hsiseg {

// Switchboard describing how one method differs from the full approach.
// Every training-path decision in the stage runner keys off these flags, so
// ablations differ from the full method in exactly one mechanism.
struct MethodVariant {
  std::string name;
  bool use_dual = true;           // frozen/trainable branch pairs per conv
  bool use_cbrn = true;           // continual renormalization (else plain BN)
  bool use_mmd = true;            // exponential decay of the mixing weight
  bool use_pseudo_labels = true;  // distillation targets from the old model
  bool use_self_entropy = true;   // sharpening regularizer
  bool joint = false;             // one supervised run over all stages' data
  std::string description;
};

// The seven supported methods: the full approach, three single-mechanism
// ablations, the static-teacher variant, naive fine-tuning and the jointly
// trained upper bound.
const std::vector<MethodVariant>& variant_catalog();

// Throws ConfigError for unknown names.
const MethodVariant& find_variant(const std::string& name);

// Static-teacher pseudo-label: the old-model distribution taken as-is
// (mixing weight pinned to 1) plus the new ground truth.
PseudoLabel si_only_pseudo_label(const Tensor& old_probs, const Tensor& new_probs,
                                 const IntTensor& new_gt);

}  // namespace hsiseg
