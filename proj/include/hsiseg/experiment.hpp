#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hsiseg/stagerunner.hpp"

namespace hsiseg {

// Everything a full run needs, loaded from one JSON file.  The data section
// carries its own seed (the benchmark identity); run_seed drives training.
struct ExperimentConfig {
  BenchmarkSpec data;
  NetworkConfig network;
  TrainSettings training;
  ScheduleParams schedule;
  HausdorffOptions metrics;
  uint64_t run_seed = 1234;
};

ExperimentConfig default_experiment_config();

std::string experiment_config_to_json(const ExperimentConfig& c);

// Strict parser: unknown or missing keys anywhere raise ConfigError.
ExperimentConfig experiment_config_from_json(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

// Command implementations behind the CLI (and directly callable in tests).
// All of them throw ConfigError / DataError / NumericalError; the CLI maps
// those to exit codes 2 / 3 / 4.

// Write a default config file; refuses to overwrite unless force.
void cmd_init(const std::string& config_path, bool force, std::ostream& log);

// Generate (or validate) the benchmark under data_dir.
void cmd_generate_data(const std::string& config_path, const std::string& data_dir,
                       bool force, std::ostream& log);

// Run one method end to end; writes config echo, checkpoints, logs and
// rows.json under out_dir.
void cmd_run(const std::string& config_path, const std::string& method,
             const std::string& data_dir, const std::string& out_dir,
             std::optional<uint64_t> seed_override, const std::string& stage0_from,
             std::ostream& log);

// Evaluate a checkpoint against the benchmark test split.
void cmd_evaluate(const std::string& checkpoint_path, const std::string& data_dir,
                  const std::string& out_path, double hd_percentile, double spacing,
                  std::ostream& log);

// Check dual/merged equivalence, either of a dual-form checkpoint or of
// randomly generated blocks.  Throws NumericalError when the deviation
// exceeds tol.
void cmd_verify_merge(const std::string& checkpoint_path, uint64_t seed, int trials,
                      double tol, std::ostream& log);

// Combine several run directories into report.json, report.txt and a Dice
// vs. stage SVG under out_dir.  Output bytes depend only on the inputs.
void cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir,
                std::ostream& log);

}  // namespace hsiseg
