// Command line front end for the incremental segmentation toolkit.
//
// Exit codes: 0 success, 2 configuration / usage error, 3 data or archive
// error, 4 numerical failure during training or verification.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hsiseg/archive.hpp"
#include "hsiseg/errors.hpp"
#include "hsiseg/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"hsiseg: incremental structure segmentation on synthetic phantoms"};
  app.require_subcommand(1);

  std::string config_path = "config.json";
  std::string data_dir = "data";
  std::string out_dir;
  std::string method;
  std::string ckpt_path;
  std::string stage0_from;
  std::string eval_out;
  std::vector<std::string> run_dirs;
  bool force = false;
  std::optional<uint64_t> seed_override;
  uint64_t seed_value = 0;
  uint64_t verify_seed = 7;
  int trials = 32;
  double tol = 1e-5;
  double hd_percentile = 100.0;
  double spacing = 1.0;

  CLI::App* init = app.add_subcommand("init", "write a default configuration file");
  init->add_option("--config", config_path, "path of the config file to create");
  init->add_flag("--force", force, "overwrite an existing file");

  CLI::App* gen = app.add_subcommand("generate-data", "generate the phantom benchmark");
  gen->add_option("--config", config_path, "experiment configuration")->required();
  gen->add_option("--data", data_dir, "output directory for the benchmark");
  gen->add_flag("--force", force, "regenerate even if the directory is up to date");

  CLI::App* run = app.add_subcommand("run", "train one method through all stages");
  run->add_option("--config", config_path, "experiment configuration")->required();
  run->add_option("--method", method, "method name (see README for the catalog)")
      ->required();
  run->add_option("--data", data_dir, "benchmark directory");
  run->add_option("--out", out_dir, "output directory for checkpoints and metrics")
      ->required();
  CLI::Option* seed_opt =
      run->add_option("--seed", seed_value, "override the run seed from the config");
  run->add_option("--stage0-from", stage0_from,
                  "reuse a stage 0 checkpoint instead of training it");

  CLI::App* eval = app.add_subcommand("evaluate", "score a checkpoint on the test set");
  eval->add_option("--ckpt", ckpt_path, "checkpoint to evaluate")->required();
  eval->add_option("--data", data_dir, "benchmark directory");
  eval->add_option("--out", eval_out, "optional JSON output path");
  eval->add_option("--hd-percentile", hd_percentile,
                   "Hausdorff percentile in (0,100]");
  eval->add_option("--spacing", spacing, "pixel spacing multiplier");

  CLI::App* verify = app.add_subcommand(
      "verify-merge", "check that merged convolutions match their dual form");
  verify->add_option("--ckpt", ckpt_path,
                     "dual checkpoint to verify (omit to test random blocks)");
  verify->add_option("--seed", verify_seed, "seed for the random probes");
  verify->add_option("--trials", trials, "number of random trials");
  verify->add_option("--tol", tol, "maximum allowed absolute deviation");

  CLI::App* report = app.add_subcommand("report", "combine finished runs into a report");
  report->add_option("--runs", run_dirs, "run directories containing rows.json")
      ->required()
      ->expected(-1);
  report->add_option("--out", out_dir, "report output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (init->parsed()) {
      hsiseg::cmd_init(config_path, force, std::cout);
    } else if (gen->parsed()) {
      hsiseg::cmd_generate_data(config_path, data_dir, force, std::cout);
    } else if (run->parsed()) {
      if (seed_opt->count() > 0) seed_override = seed_value;
      hsiseg::cmd_run(config_path, method, data_dir, out_dir, seed_override,
                      stage0_from, std::cout);
    } else if (eval->parsed()) {
      hsiseg::cmd_evaluate(ckpt_path, data_dir, eval_out, hd_percentile, spacing,
                           std::cout);
    } else if (verify->parsed()) {
      hsiseg::cmd_verify_merge(ckpt_path, verify_seed, trials, tol, std::cout);
    } else if (report->parsed()) {
      hsiseg::cmd_report(run_dirs, out_dir, std::cout);
    }
  } catch (const hsiseg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const hsiseg::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const hsiseg::ArchiveError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const hsiseg::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
