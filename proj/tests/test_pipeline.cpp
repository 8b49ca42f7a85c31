#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "hsiseg/experiment.hpp"
#include "hsiseg/hash.hpp"
#include "hsiseg/rng.hpp"
#include "hsiseg/stagerunner.hpp"

using namespace hsiseg;
namespace fs = std::filesystem;

namespace {

// Shared miniature benchmark: small images, few samples, short training.
// Built once per process into pipeline_scratch/data.
struct Fixture {
  BenchmarkSpec bench;
  NetworkConfig net;
  TrainSettings train;
  std::string data_dir = "pipeline_scratch/data";
  std::string config_path = "pipeline_scratch/config.json";

  Fixture() {
    bench.phantom.image_size = 32;
    bench.phantom.center_jitter = 3.0;
    bench.phantom.axis1_min = 4.0;
    bench.phantom.axis1_max = 6.0;
    bench.phantom.axis2_min = 3.5;
    bench.phantom.axis2_max = 5.5;
    bench.domains = default_domains();
    bench.train_per_stage = 8;
    bench.val_per_stage = 3;
    bench.test_per_domain = 3;
    bench.preview_count = 1;
    bench.master_seed = 2024;

    net.in_channels = 1;
    net.base_width = 4;
    net.depth = 2;
    net.num_categories = 2;

    train.epochs = 2;
    train.batch_size = 4;
    train.lr = 0.01;

    fs::create_directories("pipeline_scratch");
    std::ostringstream sink;
    generate_benchmark(bench, data_dir, false, sink);

    ExperimentConfig cfg = default_experiment_config();
    cfg.data = bench;
    cfg.network = net;
    cfg.training = train;
    cfg.run_seed = 555;
    std::ofstream f(config_path, std::ios::binary);
    f << experiment_config_to_json(cfg);
  }

  ProtocolSettings protocol() const {
    ProtocolSettings ps;
    ps.network = net;
    ps.train = train;
    ps.master_seed = 555;
    return ps;
  }
};

const Fixture& fixture() {
  static Fixture fx;
  return fx;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("supervised stage-0 training learns something and logs losses") {
  const Fixture& fx = fixture();
  const Dataset train = load_dataset(fx.data_dir + "/stage0_train.bin");
  const Dataset val = load_dataset(fx.data_dir + "/stage0_val.bin");
  std::ostringstream log;
  std::vector<double> losses;
  // The fixture budget (2 epochs) is too short to leave the all-background
  // regime, so this test trains a little longer than the protocol tests do.
  TrainSettings ts = fx.train;
  ts.epochs = 8;
  const Checkpoint ck = train_supervised(fx.net, train, val, {0, 1}, false, ts,
                                         31, 0, log, &losses);
  CHECK(ck.label_space == std::vector<int>{0, 1});
  CHECK(ck.stage_index == 0);
  CHECK_FALSE(ck.net.dual());
  REQUIRE(losses.size() == 8);
  CHECK(losses.back() < losses.front());
  CHECK(log.str().find("epoch") != std::string::npos);
  CHECK(mean_dice(ck.net, val) > 0.0);
}

TEST_CASE("training settings and label spaces are validated") {
  const Fixture& fx = fixture();
  const Dataset train = load_dataset(fx.data_dir + "/stage0_train.bin");
  const Dataset val = load_dataset(fx.data_dir + "/stage0_val.bin");
  std::ostringstream log;
  TrainSettings bad = fx.train;
  bad.epochs = 0;
  CHECK_THROWS_AS(
      train_supervised(fx.net, train, val, {0, 1}, false, bad, 1, 0, log),
      ConfigError);
  // Stage-1 data carries unlabeled pixels, which plain supervision rejects.
  const Dataset s1 = load_dataset(fx.data_dir + "/stage1_train.bin");
  NetworkConfig cfg3 = fx.net;
  cfg3.num_categories = 3;
  CHECK_THROWS_AS(
      train_supervised(cfg3, s1, s1, {0, 1, 2}, false, fx.train, 1, 1, log),
      DataError);
}

TEST_CASE("the method catalog covers the seven methods") {
  const std::vector<MethodVariant>& cat = variant_catalog();
  REQUIRE(cat.size() == 7);
  std::set<std::string> names;
  for (const MethodVariant& v : cat) names.insert(v.name);
  for (const char* want : {"hsi", "hsi_no_mmd", "hsi_no_d3f", "hsi_no_cbrn",
                           "si_only", "finetune", "joint_static"}) {
    CHECK(names.count(want) == 1);
  }
  CHECK(find_variant("hsi").use_dual);
  CHECK_FALSE(find_variant("hsi_no_d3f").use_dual);
  CHECK(find_variant("hsi_no_d3f").use_cbrn);
  CHECK_FALSE(find_variant("hsi_no_cbrn").use_cbrn);
  CHECK(find_variant("hsi_no_cbrn").use_dual);
  CHECK_FALSE(find_variant("hsi_no_mmd").use_mmd);
  CHECK_FALSE(find_variant("finetune").use_pseudo_labels);
  CHECK(find_variant("joint_static").joint);
  CHECK_THROWS_AS(find_variant("nope"), ConfigError);
}

TEST_CASE("an incremental stage freezes rigidity and grows the label space") {
  const Fixture& fx = fixture();
  const Dataset s0t = load_dataset(fx.data_dir + "/stage0_train.bin");
  const Dataset s0v = load_dataset(fx.data_dir + "/stage0_val.bin");
  std::ostringstream log;
  const Checkpoint stage0 =
      train_supervised(fx.net, s0t, s0v, {0, 1}, false, fx.train, 31, 0, log);

  const Dataset s1t = load_dataset(fx.data_dir + "/stage1_train.bin");
  const Dataset s1v = load_dataset(fx.data_dir + "/stage1_val.bin");
  const uint64_t stage_seed = 77;
  const StageResult sr = run_stage(stage0, {2}, s1t, s1v, find_variant("hsi"),
                                   ScheduleParams{}, fx.train, stage_seed, log);

  CHECK(sr.checkpoint.label_space == std::vector<int>{0, 1, 2});
  CHECK(sr.checkpoint.stage_index == stage0.stage_index + 1);
  CHECK_FALSE(sr.checkpoint.net.dual());
  REQUIRE(sr.dual_form.has_value());
  REQUIRE(sr.dual_form->net.dual());
  REQUIRE(sr.epoch_loss.size() == static_cast<size_t>(fx.train.epochs));

  // The rigidity branch must be byte-identical to its construction: the
  // inherited weights plus the deterministic head expansion.
  Network expect = rebuild_as_dual(stage0.net, stage0.net.config.cbrn_eta, true);
  expand_head(expect, 1, Rng::mix(stage_seed, 3));
  const Network& got = sr.dual_form->net;
  REQUIRE(got.layers.size() == expect.layers.size());
  for (size_t li = 0; li < got.layers.size(); ++li) {
    REQUIRE(got.layers[li].rigidity.has_value());
    const std::vector<double>& a = got.layers[li].rigidity->weight.v;
    const std::vector<double>& b = expect.layers[li].rigidity->weight.v;
    REQUIRE(a.size() == b.size());
    REQUIRE(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
    REQUIRE(got.layers[li].rigidity->bias == expect.layers[li].rigidity->bias);
  }
  // Plasticity did move away from the rigidity copy.
  bool moved = false;
  for (const Layer& l : got.layers) {
    if (l.weights.weight.v != l.rigidity->weight.v) moved = true;
  }
  CHECK(moved);
  // Merged checkpoint equals the dual form at eval time.
  Tensor x(1, 1, 32, 32);
  Rng rng(5);
  for (double& v : x.v) v = rng.uniform(0.0, 1.0);
  const Tensor yd = forward(sr.dual_form->net, x, Mode::Eval);
  const Tensor ym = forward(sr.checkpoint.net, x, Mode::Eval);
  for (size_t i = 0; i < yd.size(); ++i) {
    REQUIRE(yd.v[i] == doctest::Approx(ym.v[i]).epsilon(1e-9));
  }
}

TEST_CASE("finetuning trains single-branch with no dual snapshot") {
  const Fixture& fx = fixture();
  const Dataset s0t = load_dataset(fx.data_dir + "/stage0_train.bin");
  const Dataset s0v = load_dataset(fx.data_dir + "/stage0_val.bin");
  std::ostringstream log;
  const Checkpoint stage0 =
      train_supervised(fx.net, s0t, s0v, {0, 1}, false, fx.train, 31, 0, log);
  const Dataset s1t = load_dataset(fx.data_dir + "/stage1_train.bin");
  const Dataset s1v = load_dataset(fx.data_dir + "/stage1_val.bin");
  const StageResult sr = run_stage(stage0, {2}, s1t, s1v, find_variant("finetune"),
                                   ScheduleParams{}, fx.train, 78, log);
  CHECK_FALSE(sr.dual_form.has_value());
  CHECK(sr.checkpoint.label_space == std::vector<int>{0, 1, 2});
  CHECK_FALSE(sr.checkpoint.net.dual());
}

TEST_CASE("evaluation yields one row per sample and foreground category") {
  const Fixture& fx = fixture();
  const Dataset s0t = load_dataset(fx.data_dir + "/stage0_train.bin");
  const Dataset s0v = load_dataset(fx.data_dir + "/stage0_val.bin");
  const Dataset test = load_dataset(fx.data_dir + "/test.bin");
  std::ostringstream log;
  const Checkpoint ck =
      train_supervised(fx.net, s0t, s0v, {0, 1}, false, fx.train, 31, 0, log);
  const std::vector<MetricRow> rows = evaluate_checkpoint(ck, test, "probe", {});
  CHECK(rows.size() == test.samples.size());  // one foreground category
  for (const MetricRow& r : rows) {
    CHECK(r.method == "probe");
    CHECK(r.category == 1);
    CHECK(r.stage == 0);
    CHECK(r.dice >= 0.0);
    CHECK(r.dice <= 1.0);
  }
}

TEST_CASE("the full protocol writes checkpoints, logs and reproducible rows") {
  const Fixture& fx = fixture();
  const std::string out1 = "pipeline_scratch/run_hsi_a";
  const std::string out2 = "pipeline_scratch/run_hsi_b";
  fs::remove_all(out1);
  fs::remove_all(out2);
  std::ostringstream log;
  cmd_run(fx.config_path, "hsi", fx.data_dir, out1, std::nullopt, "", log);
  cmd_run(fx.config_path, "hsi", fx.data_dir, out2, std::nullopt, "", log);

  for (const char* f :
       {"config.json", "rows.json", "train_log.txt", "stage_0.ckpt", "stage_1.ckpt",
        "stage_2.ckpt", "stage_1.dual.ckpt", "stage_2.dual.ckpt"}) {
    CHECK(fs::exists(fs::path(out1) / f));
  }
  // Identical config and seed give bit-identical results.
  CHECK(slurp(out1 + "/rows.json") == slurp(out2 + "/rows.json"));
  CHECK(fnv1a64_file(out1 + "/stage_2.ckpt") == fnv1a64_file(out2 + "/stage_2.ckpt"));

  // Row counts: test samples x (1 + 2 + 3) categories over the three stages.
  const Dataset test = load_dataset(fx.data_dir + "/test.bin");
  const std::string rows_text = slurp(out1 + "/rows.json");
  size_t count = 0;
  for (size_t pos = rows_text.find("\"dice\""); pos != std::string::npos;
       pos = rows_text.find("\"dice\"", pos + 1)) {
    ++count;
  }
  // summaries also mention dice keys; just require at least the row count.
  CHECK(count >= test.samples.size() * 6);

  // Every stage checkpoint loads and carries the right label space.
  const Checkpoint s2 = load_checkpoint(out1 + "/stage_2.ckpt");
  CHECK(s2.label_space == std::vector<int>{0, 1, 2, 3});
  CHECK_FALSE(s2.net.dual());
  const Checkpoint s2d = load_checkpoint(out1 + "/stage_2.dual.ckpt");
  CHECK(s2d.net.dual());
}

TEST_CASE("stage-0 reuse reproduces the from-scratch run exactly") {
  const Fixture& fx = fixture();
  const std::string base = "pipeline_scratch/run_hsi_a";  // from the previous case
  REQUIRE(fs::exists(base + "/stage_0.ckpt"));
  const std::string out = "pipeline_scratch/run_hsi_reuse";
  fs::remove_all(out);
  std::ostringstream log;
  cmd_run(fx.config_path, "hsi", fx.data_dir, out, std::nullopt,
          base + "/stage_0.ckpt", log);
  CHECK(slurp(out + "/rows.json") == slurp(base + "/rows.json"));
  CHECK(fnv1a64_file(out + "/stage_0.ckpt") == fnv1a64_file(base + "/stage_0.ckpt"));

  // A checkpoint from another protocol is rejected.
  CHECK_THROWS_AS(cmd_run(fx.config_path, "hsi", fx.data_dir,
                          "pipeline_scratch/run_bad", std::nullopt,
                          base + "/stage_1.ckpt", log),
                  ConfigError);
}

TEST_CASE("the joint upper bound trains once over all stages") {
  const Fixture& fx = fixture();
  const std::string out = "pipeline_scratch/run_joint";
  fs::remove_all(out);
  std::ostringstream log;
  cmd_run(fx.config_path, "joint_static", fx.data_dir, out, std::nullopt, "", log);
  CHECK(fs::exists(fs::path(out) / "stage_2.ckpt"));
  CHECK_FALSE(fs::exists(fs::path(out) / "stage_0.ckpt"));
  const Checkpoint ck = load_checkpoint(out + "/stage_2.ckpt");
  CHECK(ck.label_space == std::vector<int>{0, 1, 2, 3});
  CHECK(ck.stage_index == 2);
}

TEST_CASE("every ablation variant completes a stage transition") {
  const Fixture& fx = fixture();
  const Dataset s0t = load_dataset(fx.data_dir + "/stage0_train.bin");
  const Dataset s0v = load_dataset(fx.data_dir + "/stage0_val.bin");
  const Dataset s1t = load_dataset(fx.data_dir + "/stage1_train.bin");
  const Dataset s1v = load_dataset(fx.data_dir + "/stage1_val.bin");
  std::ostringstream log;
  TrainSettings fast = fx.train;
  fast.epochs = 1;
  const Checkpoint stage0 =
      train_supervised(fx.net, s0t, s0v, {0, 1}, false, fast, 31, 0, log);
  for (const char* name : {"hsi_no_mmd", "hsi_no_d3f", "hsi_no_cbrn", "si_only"}) {
    const MethodVariant& v = find_variant(name);
    const StageResult sr =
        run_stage(stage0, {2}, s1t, s1v, v, ScheduleParams{}, fast, 80, log);
    CHECK(sr.checkpoint.label_space == std::vector<int>{0, 1, 2});
    CHECK(sr.dual_form.has_value() == v.use_dual);
    for (double l : sr.epoch_loss) CHECK(std::isfinite(l));
  }
}

TEST_CASE("experiment config round-trips strictly") {
  const ExperimentConfig def = default_experiment_config();
  const std::string text = experiment_config_to_json(def);
  const ExperimentConfig back = experiment_config_from_json(text);
  CHECK(experiment_config_to_json(back) == text);
  CHECK(back.network.base_width == def.network.base_width);
  CHECK(back.run_seed == def.run_seed);
  CHECK_THROWS_AS(experiment_config_from_json("{]"), ConfigError);
  CHECK_THROWS_AS(experiment_config_from_json("{}"), ConfigError);
  // Unknown keys anywhere are rejected.
  std::string extra = text;
  extra.insert(extra.find("\"run_seed\""), "\"surprise\": 1, ");
  CHECK_THROWS_AS(experiment_config_from_json(extra), ConfigError);
}

TEST_CASE("init refuses to clobber an existing config") {
  std::ostringstream log;
  const std::string path = "pipeline_scratch/init_config.json";
  fs::remove(path);
  cmd_init(path, false, log);
  CHECK(fs::exists(path));
  CHECK_THROWS_AS(cmd_init(path, false, log), ConfigError);
  cmd_init(path, true, log);  // forced overwrite is fine
  const ExperimentConfig cfg = load_experiment_config(path);
  CHECK(cfg.data.stages == 3);
}

TEST_CASE("evaluate command summarizes a checkpoint and writes json") {
  const Fixture& fx = fixture();
  const std::string ckpt = "pipeline_scratch/run_hsi_a/stage_2.ckpt";
  REQUIRE(fs::exists(ckpt));
  std::ostringstream log;
  const std::string out = "pipeline_scratch/eval.json";
  cmd_evaluate(ckpt, fx.data_dir, out, 95.0, 1.0, log);
  CHECK(log.str().find("macro dice") != std::string::npos);
  CHECK(fs::exists(out));
  CHECK(slurp(out).find("\"rows\"") != std::string::npos);
  CHECK_THROWS(cmd_evaluate(ckpt, fx.data_dir, "", 0.0, 1.0, log));
}

TEST_CASE("verify-merge accepts dual checkpoints and random blocks") {
  std::ostringstream log;
  cmd_verify_merge("", 7, 8, 1e-6, log);  // synthetic blocks
  CHECK(log.str().find("merge equivalence holds") != std::string::npos);

  const std::string dual = "pipeline_scratch/run_hsi_a/stage_2.dual.ckpt";
  REQUIRE(fs::exists(dual));
  std::ostringstream log2;
  cmd_verify_merge(dual, 7, 2, 1e-6, log2);
  CHECK(log2.str().find("merge equivalence holds") != std::string::npos);

  // An impossible tolerance trips the numerical failure path.
  CHECK_THROWS_AS(cmd_verify_merge("", 7, 2, 1e-300, log), NumericalError);
  // Single-branch checkpoints are not verifiable.
  CHECK_THROWS_AS(
      cmd_verify_merge("pipeline_scratch/run_hsi_a/stage_2.ckpt", 7, 2, 1e-6, log),
      ConfigError);
}

TEST_CASE("report merges runs deterministically and checks benchmark identity") {
  const std::string r1 = "pipeline_scratch/run_hsi_a";
  const std::string r2 = "pipeline_scratch/run_joint";
  REQUIRE(fs::exists(r1 + "/rows.json"));
  REQUIRE(fs::exists(r2 + "/rows.json"));

  std::ostringstream log;
  const std::string out1 = "pipeline_scratch/report_a";
  const std::string out2 = "pipeline_scratch/report_b";
  fs::remove_all(out1);
  fs::remove_all(out2);
  cmd_report({r1, r2}, out1, log);
  cmd_report({r2, r1}, out2, log);  // order of run dirs must not matter

  for (const char* f : {"report.json", "report.txt", "dice_vs_stage.svg"}) {
    CHECK(fs::exists(fs::path(out1) / f));
    CHECK(slurp((fs::path(out1) / f).string()) == slurp((fs::path(out2) / f).string()));
  }
  const std::string txt = slurp(out1 + "/report.txt");
  CHECK(txt.find("hsi") != std::string::npos);
  CHECK(txt.find("joint_static") != std::string::npos);
  CHECK(txt.find("== stage 2 ==") != std::string::npos);
  const std::string svg = slurp(out1 + "/dice_vs_stage.svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);

  // Duplicated methods and mismatched benchmarks are rejected.
  CHECK_THROWS_AS(cmd_report({r1, r1}, "pipeline_scratch/report_dup", log), ConfigError);
  const std::string tampered = "pipeline_scratch/run_tampered";
  fs::remove_all(tampered);
  fs::create_directories(tampered);
  std::string rows = slurp(r2 + "/rows.json");
  const size_t pos = rows.find("\"benchmark\": \"");
  REQUIRE(pos != std::string::npos);
  rows[pos + 14] = (rows[pos + 14] == 'a') ? 'b' : 'a';
  std::ofstream(tampered + "/rows.json", std::ios::binary) << rows;
  CHECK_THROWS_AS(cmd_report({r1, tampered}, "pipeline_scratch/report_bad", log),
                  DataError);
}

}  // TEST_SUITE
