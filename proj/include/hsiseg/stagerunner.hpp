#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hsiseg/baselines.hpp"
#include "hsiseg/checkpoint.hpp"
#include "hsiseg/distill.hpp"
#include "hsiseg/errors.hpp"
#include "hsiseg/metrics.hpp"
#include "hsiseg/synthdata.hpp"

namespace hsiseg {

struct TrainSettings {
  int epochs = 20;
  int batch_size = 8;
  double lr = 0.01;
  double momentum = 0.0;       // classical SGD momentum; 0 keeps plain SGD
  double weight_decay = 5e-4;  // L2 added to gradients before the update

  void validate() const;
};

// Assemble a batch from dataset samples.  Masks come from `mask` (stage
// labels) or `full_mask`.
Tensor batch_images(const Dataset& ds, const std::vector<size_t>& idx);
IntTensor batch_masks(const Dataset& ds, const std::vector<size_t>& idx, bool full);

// Mean foreground Dice of a network over a dataset against the full masks,
// restricted to the categories it can predict.  Used for validation logging.
double mean_dice(const Network& net, const Dataset& ds, int eval_batch = 16);

// Fully supervised training from scratch (protocol stage 0, and the joint
// upper bound when use_full_masks is set).  label_space lists the category
// id of every output channel.
Checkpoint train_supervised(const NetworkConfig& config, const Dataset& train,
                            const Dataset& val, const std::vector<int>& label_space,
                            bool use_full_masks, const TrainSettings& ts,
                            uint64_t seed, int stage_index, std::ostream& log,
                            std::vector<double>* epoch_losses = nullptr);

struct StageResult {
  Checkpoint checkpoint;                 // merged single-branch form
  std::optional<Checkpoint> dual_form;   // pre-merge snapshot (dual variants)
  std::vector<double> epoch_loss;
};

// One incremental stage: inherit the previous checkpoint, grow the head by
// the new categories, train with the variant's mechanism set on data where
// only the new structure is annotated, then merge back to single form.
StageResult run_stage(const Checkpoint& prev, const std::vector<int>& new_categories,
                      const Dataset& train, const Dataset& val,
                      const MethodVariant& variant, const ScheduleParams& schedule,
                      const TrainSettings& ts, uint64_t seed, std::ostream& log);

// Per-sample, per-category metrics of a checkpoint on a fully labeled split.
std::vector<MetricRow> evaluate_checkpoint(const Checkpoint& ck, const Dataset& test,
                                           const std::string& method,
                                           const HausdorffOptions& hd_opt,
                                           int eval_batch = 16);

// Upper-bound baseline: one supervised run over the union of every stage's
// training data with complete labels for all structures (ids 1..stages).
Checkpoint joint_static_train(const std::vector<Dataset>& stage_trains,
                              const std::vector<Dataset>& stage_vals, int stages,
                              const NetworkConfig& config, const TrainSettings& ts,
                              uint64_t seed, int stage_index, std::ostream& log,
                              std::vector<double>* epoch_losses = nullptr);

struct ProtocolSettings {
  NetworkConfig network;      // num_categories is derived from the label space
  TrainSettings train;
  ScheduleParams schedule;
  HausdorffOptions hd;
  uint64_t master_seed = 1234;
  std::string stage0_from;    // optional path to a reusable stage-0 checkpoint
};

struct StageOutcome {
  int stage_index = 0;
  std::string checkpoint_path;
  std::string dual_checkpoint_path;  // empty when the variant trains single-branch
  std::vector<double> epoch_loss;
  double test_dice_macro = 0.0;
};

struct ProtocolResult {
  std::string method;
  std::vector<StageOutcome> stages;
  std::vector<MetricRow> rows;  // evaluation rows of every stage checkpoint
};

// Full protocol for one method over a generated benchmark directory.
// Writes stage checkpoints and train_log.txt under out_dir and returns the
// evaluation rows.  Data problems raise DataError, numerical blowups
// NumericalError.
ProtocolResult run_protocol(const MethodVariant& variant, const std::string& data_dir,
                            const std::string& out_dir, const ProtocolSettings& ps,
                            std::ostream& log);

}  // namespace hsiseg
