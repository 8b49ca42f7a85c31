#include "hsiseg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include "hsiseg/dualflow.hpp"
#include "hsiseg/hash.hpp"
#include "hsiseg/jsonutil.hpp"
#include "hsiseg/rng.hpp"

namespace fs = std::filesystem;

namespace hsiseg {

namespace {

using nlohmann::json;

std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed for " + path);
}

json network_section_to_json(const NetworkConfig& c) {
  json j;
  j["in_channels"] = c.in_channels;
  j["base_width"] = c.base_width;
  j["depth"] = c.depth;
  j["bn_momentum"] = c.bn_momentum;
  j["norm_eps"] = c.norm_eps;
  j["cbrn_eta"] = c.cbrn_eta;
  return j;
}

NetworkConfig network_section_from_json(const json& j) {
  json_require_exact_keys(
      j, {"in_channels", "base_width", "depth", "bn_momentum", "norm_eps", "cbrn_eta"},
      "network");
  NetworkConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.base_width = j.at("base_width").get<int>();
  c.depth = j.at("depth").get<int>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.norm_eps = j.at("norm_eps").get<double>();
  c.cbrn_eta = j.at("cbrn_eta").get<double>();
  c.num_categories = 2;  // grown by the protocol as stages add categories
  c.validate();
  return c;
}

json training_section_to_json(const TrainSettings& t) {
  json j;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["lr"] = t.lr;
  j["momentum"] = t.momentum;
  j["weight_decay"] = t.weight_decay;
  return j;
}

TrainSettings training_section_from_json(const json& j) {
  json_require_exact_keys(j, {"epochs", "batch_size", "lr", "momentum", "weight_decay"},
                          "training");
  TrainSettings t;
  t.epochs = j.at("epochs").get<int>();
  t.batch_size = j.at("batch_size").get<int>();
  t.lr = j.at("lr").get<double>();
  t.momentum = j.at("momentum").get<double>();
  t.weight_decay = j.at("weight_decay").get<double>();
  t.validate();
  return t;
}

json schedule_section_to_json(const ScheduleParams& s) {
  json j;
  j["lambda0"] = s.lambda0;
  j["k"] = s.k;
  j["alpha0"] = s.alpha0;
  j["raw_decay"] = s.raw_decay;
  return j;
}

ScheduleParams schedule_section_from_json(const json& j) {
  json_require_exact_keys(j, {"lambda0", "k", "alpha0", "raw_decay"}, "schedule");
  ScheduleParams s;
  s.lambda0 = j.at("lambda0").get<double>();
  s.k = j.at("k").get<double>();
  s.alpha0 = j.at("alpha0").get<double>();
  s.raw_decay = j.at("raw_decay").get<bool>();
  if (s.lambda0 <= 0.0 || s.lambda0 > 1.0) throw ConfigError("schedule: lambda0 outside (0,1]");
  if (s.k <= 0.0) throw ConfigError("schedule: k must be > 0");
  if (s.alpha0 < 0.0) throw ConfigError("schedule: alpha0 must be >= 0");
  return s;
}

json metrics_section_to_json(const HausdorffOptions& m) {
  json j;
  j["hd_percentile"] = m.percentile;
  j["spacing"] = m.spacing;
  return j;
}

HausdorffOptions metrics_section_from_json(const json& j) {
  json_require_exact_keys(j, {"hd_percentile", "spacing"}, "metrics");
  HausdorffOptions m;
  m.percentile = j.at("hd_percentile").get<double>();
  m.spacing = j.at("spacing").get<double>();
  if (m.percentile <= 0.0 || m.percentile > 100.0) {
    throw ConfigError("metrics: hd_percentile outside (0,100]");
  }
  if (m.spacing <= 0.0) throw ConfigError("metrics: spacing must be > 0");
  return m;
}

}  // namespace

ExperimentConfig default_experiment_config() {
  // The recipe behind the reference benchmark: a 48-pixel phantom and a
  // width-4 network keep a full three-stage protocol under five minutes on
  // one core.  The high plain-SGD rate and the damped self-entropy weight
  // are load-bearing at this scale: the dual-branch average halves the
  // trainable branch's effective step, so incremental stages need far more
  // rate than a plain network, and a full-strength entropy term would pin
  // every unlabeled pixel to the old model's argmax before the new
  // structure can be learned.
  ExperimentConfig c;
  c.data.domains = default_domains();
  c.data.phantom.image_size = 48;
  c.data.phantom.center_jitter = 4.8;
  c.data.phantom.axis1_min = 6.0;
  c.data.phantom.axis1_max = 10.8;
  c.data.phantom.axis2_min = 4.8;
  c.data.phantom.axis2_max = 9.6;
  c.network.base_width = 4;
  c.network.depth = 2;
  c.training.lr = 0.4;
  c.schedule.alpha0 = 0.5;
  return c;
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  json j;
  j["format_version"] = 1;
  j["run_seed"] = c.run_seed;
  j["data"] = json::parse(benchmark_spec_to_json(c.data));
  j["network"] = network_section_to_json(c.network);
  j["training"] = training_section_to_json(c.training);
  j["schedule"] = schedule_section_to_json(c.schedule);
  j["metrics"] = metrics_section_to_json(c.metrics);
  return j.dump(2) + "\n";
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  json_require_exact_keys(
      j, {"format_version", "run_seed", "data", "network", "training", "schedule", "metrics"},
      "config");
  if (j.at("format_version").get<int>() != 1) {
    throw ConfigError("config: unsupported format_version");
  }
  ExperimentConfig c;
  c.run_seed = j.at("run_seed").get<uint64_t>();
  c.data = benchmark_spec_from_json(j.at("data").dump());
  c.network = network_section_from_json(j.at("network"));
  c.training = training_section_from_json(j.at("training"));
  c.schedule = schedule_section_from_json(j.at("schedule"));
  c.metrics = metrics_section_from_json(j.at("metrics"));
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return experiment_config_from_json(text);
}

void cmd_init(const std::string& config_path, bool force, std::ostream& log) {
  std::error_code ec;
  if (!force && fs::exists(config_path, ec)) {
    throw ConfigError("refusing to overwrite existing " + config_path +
                      " (use --force)");
  }
  const fs::path parent = fs::path(config_path).parent_path();
  if (!parent.empty()) fs::create_directories(parent, ec);
  write_file_bytes(config_path, experiment_config_to_json(default_experiment_config()));
  log << "wrote default config to " << config_path << "\n";
}

void cmd_generate_data(const std::string& config_path, const std::string& data_dir,
                       bool force, std::ostream& log) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  generate_benchmark(cfg.data, data_dir, force, log);
}

namespace {

json rows_to_json(const std::vector<MetricRow>& rows) {
  json arr = json::array();
  for (const MetricRow& r : rows) {
    json o;
    o["method"] = r.method;
    o["stage"] = r.stage;
    o["domain"] = r.domain;
    o["category"] = r.category;
    o["dice"] = r.dice;
    if (r.hd.has_value()) {
      o["hd"] = *r.hd;
    } else {
      o["hd"] = nullptr;
    }
    arr.push_back(std::move(o));
  }
  return arr;
}

std::vector<MetricRow> rows_from_json(const json& arr, const std::string& origin) {
  if (!arr.is_array()) throw DataError("rows section is not an array in " + origin);
  std::vector<MetricRow> rows;
  for (const json& o : arr) {
    MetricRow r;
    r.method = o.at("method").get<std::string>();
    r.stage = o.at("stage").get<int>();
    r.domain = o.at("domain").get<int>();
    r.category = o.at("category").get<int>();
    r.dice = o.at("dice").get<double>();
    if (!o.at("hd").is_null()) r.hd = o.at("hd").get<double>();
    rows.push_back(std::move(r));
  }
  return rows;
}

json summary_to_json(const std::string& method, int stage,
                     const std::vector<MetricRow>& rows) {
  const MetricsSummary s = aggregate(rows);
  json o;
  o["method"] = method;
  o["stage"] = stage;
  o["dice_macro_mean"] = s.dice_macro_mean;
  if (s.hd_macro_mean.has_value()) {
    o["hd_macro_mean"] = *s.hd_macro_mean;
  } else {
    o["hd_macro_mean"] = nullptr;
  }
  json cats = json::array();
  for (const CategoryAggregate& a : s.per_category) {
    json c;
    c["category"] = a.category;
    c["count"] = a.count;
    c["dice_mean"] = a.dice_mean;
    if (a.hd_mean.has_value()) {
      c["hd_mean"] = *a.hd_mean;
    } else {
      c["hd_mean"] = nullptr;
    }
    c["hd_defined"] = a.hd_defined;
    c["hd_undefined"] = a.hd_undefined;
    cats.push_back(std::move(c));
  }
  o["categories"] = std::move(cats);
  return o;
}

}  // namespace

void cmd_run(const std::string& config_path, const std::string& method,
             const std::string& data_dir, const std::string& out_dir,
             std::optional<uint64_t> seed_override, const std::string& stage0_from,
             std::ostream& log) {
  std::string config_bytes;
  try {
    config_bytes = read_file_bytes(config_path);
  } catch (const DataError&) {
    throw ConfigError("cannot open config file " + config_path);
  }
  const ExperimentConfig cfg = experiment_config_from_json(config_bytes);
  const MethodVariant& variant = find_variant(method);

  const uint64_t bench_hash = verify_benchmark(data_dir);

  ProtocolSettings ps;
  ps.network = cfg.network;
  ps.train = cfg.training;
  ps.schedule = cfg.schedule;
  ps.hd = cfg.metrics;
  ps.master_seed = seed_override.value_or(cfg.run_seed);
  ps.stage0_from = stage0_from;

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir + ": " + ec.message());
  // Byte-identical echo of the configuration that drove this run.
  write_file_bytes((fs::path(out_dir) / "config.json").string(), config_bytes);

  const ProtocolResult result = run_protocol(variant, data_dir, out_dir, ps, log);

  json j;
  j["format_version"] = 1;
  j["method"] = result.method;
  j["benchmark"] = hash_hex(bench_hash);
  j["run_seed"] = ps.master_seed;
  json stages = json::array();
  std::set<int> stage_ids;
  for (const StageOutcome& so : result.stages) {
    json o;
    o["stage"] = so.stage_index;
    o["checkpoint"] = fs::path(so.checkpoint_path).filename().string();
    o["dual_checkpoint"] = so.dual_checkpoint_path.empty()
                               ? ""
                               : fs::path(so.dual_checkpoint_path).filename().string();
    o["epoch_loss"] = so.epoch_loss;
    o["test_dice_macro"] = so.test_dice_macro;
    stages.push_back(std::move(o));
    stage_ids.insert(so.stage_index);
  }
  j["stages"] = std::move(stages);
  json summaries = json::array();
  for (int st : stage_ids) {
    std::vector<MetricRow> stage_rows;
    for (const MetricRow& r : result.rows) {
      if (r.stage == st) stage_rows.push_back(r);
    }
    summaries.push_back(summary_to_json(result.method, st, stage_rows));
  }
  j["summaries"] = std::move(summaries);
  j["rows"] = rows_to_json(result.rows);
  write_file_bytes((fs::path(out_dir) / "rows.json").string(), j.dump(2) + "\n");
  log << "run complete: " << (fs::path(out_dir) / "rows.json").string() << "\n";
}

void cmd_evaluate(const std::string& checkpoint_path, const std::string& data_dir,
                  const std::string& out_path, double hd_percentile, double spacing,
                  std::ostream& log) {
  HausdorffOptions hd;
  hd.percentile = hd_percentile;
  hd.spacing = spacing;
  if (hd.percentile <= 0.0 || hd.percentile > 100.0) {
    throw ConfigError("evaluate: hd percentile outside (0,100]");
  }
  if (hd.spacing <= 0.0) throw ConfigError("evaluate: spacing must be > 0");

  const Checkpoint ck = load_checkpoint(checkpoint_path);
  verify_benchmark(data_dir);
  const Dataset test = load_dataset((fs::path(data_dir) / "test.bin").string());
  const std::vector<MetricRow> rows =
      evaluate_checkpoint(ck, test, "checkpoint", hd);
  const MetricsSummary s = aggregate(rows);

  char line[160];
  std::snprintf(line, sizeof(line), "stage %d, %zu rows\n", ck.stage_index, rows.size());
  log << "evaluated " << checkpoint_path << ": " << line;
  for (const CategoryAggregate& a : s.per_category) {
    if (a.hd_mean.has_value()) {
      std::snprintf(line, sizeof(line),
                    "  category %d: dice %.6f, hd %.6f (%d undefined)\n", a.category,
                    a.dice_mean, *a.hd_mean, a.hd_undefined);
    } else {
      std::snprintf(line, sizeof(line),
                    "  category %d: dice %.6f, hd undefined on all samples\n",
                    a.category, a.dice_mean);
    }
    log << line;
  }
  std::snprintf(line, sizeof(line), "  macro dice %.6f\n", s.dice_macro_mean);
  log << line;

  if (!out_path.empty()) {
    json j;
    j["format_version"] = 1;
    j["checkpoint"] = fs::path(checkpoint_path).filename().string();
    j["stage"] = ck.stage_index;
    j["summary"] = summary_to_json("checkpoint", ck.stage_index, rows);
    j["rows"] = rows_to_json(rows);
    write_file_bytes(out_path, j.dump(2) + "\n");
    log << "wrote " << out_path << "\n";
  }
}

void cmd_verify_merge(const std::string& checkpoint_path, uint64_t seed, int trials,
                      double tol, std::ostream& log) {
  if (trials < 1) throw ConfigError("verify-merge: trials must be >= 1");
  if (tol <= 0.0) throw ConfigError("verify-merge: tolerance must be > 0");
  Rng rng(seed);
  double worst = 0.0;

  if (!checkpoint_path.empty()) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    if (!ck.net.dual()) {
      throw ConfigError("verify-merge: " + checkpoint_path +
                        " is not a dual-form checkpoint");
    }
    Network merged = ck.net;
    merge_network(merged);
    const int side = 8 << ck.net.config.depth;
    for (int t = 0; t < trials; ++t) {
      Tensor x(2, ck.net.config.in_channels, side, side);
      for (double& v : x.v) v = rng.uniform(0.0, 1.0);
      const Tensor yd = forward(ck.net, x, Mode::Eval);
      const Tensor ym = forward(merged, x, Mode::Eval);
      for (size_t i = 0; i < yd.size(); ++i) {
        worst = std::max(worst, std::abs(yd.v[i] - ym.v[i]));
      }
    }
    log << "checked " << trials << " random batches against " << checkpoint_path << "\n";
  } else {
    for (int t = 0; t < trials; ++t) {
      const int ic = 1 + static_cast<int>(rng.below(8));
      const int oc = 1 + static_cast<int>(rng.below(8));
      const int k = rng.below(2) == 0 ? 1 : 3;
      ConvParams base = make_conv(oc, ic, k, k);
      for (double& v : base.weight.v) v = rng.normal();
      for (double& v : base.bias) v = rng.normal();
      CBRNState state;
      state.mu_c.resize(static_cast<size_t>(oc));
      state.sigma_c.resize(static_cast<size_t>(oc));
      for (int c = 0; c < oc; ++c) {
        state.mu_c[static_cast<size_t>(c)] = rng.normal();
        state.sigma_c[static_cast<size_t>(c)] = rng.uniform(0.5, 2.0);
      }
      DualConvBlock block = duplicate_from(base, state, 1, k / 2);
      for (double& v : block.plasticity.weight.v) v += 0.1 * rng.normal();
      for (double& v : block.plasticity.bias) v += 0.1 * rng.normal();
      const MergedConv m = merge(block);
      for (int rep = 0; rep < 8; ++rep) {
        Tensor x(2, ic, 8, 8);
        for (double& v : x.v) v = rng.normal();
        const Tensor yd = dual_forward_eval(block, x);
        const Tensor ym = merged_forward_eval(m, x);
        for (size_t i = 0; i < yd.size(); ++i) {
          worst = std::max(worst, std::abs(yd.v[i] - ym.v[i]));
        }
      }
    }
    log << "checked " << trials << " randomly generated dual blocks\n";
  }

  char line[96];
  std::snprintf(line, sizeof(line), "max |dual - merged| = %.3e (tolerance %.3e)\n",
                worst, tol);
  log << line;
  if (worst > tol) {
    throw NumericalError("merge equivalence violated: max deviation " +
                         std::to_string(worst));
  }
  log << "merge equivalence holds\n";
}

namespace {

struct RunData {
  std::string method;
  std::string benchmark;
  std::vector<MetricRow> rows;
};

RunData read_run_dir(const std::string& dir) {
  const std::string path = (fs::path(dir) / "rows.json").string();
  json j;
  try {
    j = json::parse(read_file_bytes(path));
  } catch (const json::parse_error& e) {
    throw DataError("corrupt rows.json in " + dir + ": " + e.what());
  }
  RunData rd;
  rd.method = j.at("method").get<std::string>();
  rd.benchmark = j.at("benchmark").get<std::string>();
  rd.rows = rows_from_json(j.at("rows"), path);
  return rd;
}

std::string category_label(int id) { return "s" + std::to_string(id); }

// Fixed-width table of per-category means for one stage.
void append_stage_table(std::string& txt, int stage,
                        const std::vector<std::pair<std::string, MetricsSummary>>& entries,
                        const std::vector<int>& categories) {
  char buf[64];
  txt += "== stage " + std::to_string(stage) + " ==\n";
  txt += "method        | dice: mean";
  for (int c : categories) txt += "     " + category_label(c);
  txt += " | hd: mean";
  for (int c : categories) txt += "      " + category_label(c);
  txt += "\n";
  for (const auto& [method, s] : entries) {
    std::snprintf(buf, sizeof(buf), "%-13s |     ", method.c_str());
    txt += buf;
    std::snprintf(buf, sizeof(buf), "%6.4f", s.dice_macro_mean);
    txt += buf;
    for (int c : categories) {
      bool found = false;
      for (const CategoryAggregate& a : s.per_category) {
        if (a.category == c) {
          std::snprintf(buf, sizeof(buf), " %6.4f", a.dice_mean);
          txt += buf;
          found = true;
          break;
        }
      }
      if (!found) txt += "     --";
    }
    txt += " |  ";
    if (s.hd_macro_mean.has_value()) {
      std::snprintf(buf, sizeof(buf), "%7.3f", *s.hd_macro_mean);
      txt += buf;
    } else {
      txt += "     --";
    }
    for (int c : categories) {
      bool found = false;
      for (const CategoryAggregate& a : s.per_category) {
        if (a.category == c && a.hd_mean.has_value()) {
          std::snprintf(buf, sizeof(buf), " %7.3f", *a.hd_mean);
          txt += buf;
          found = true;
          break;
        }
      }
      if (!found) txt += "      --";
    }
    txt += "\n";
  }
  txt += "\n";
}

std::string render_dice_svg(
    const std::map<std::string, std::map<int, double>>& dice_by_method) {
  static const char* kColors[] = {"#1b6ca8", "#d1495b", "#2e933c", "#8c5383",
                                  "#e09f3e", "#40618f", "#6b7f3b", "#7a4419"};
  int max_stage = 0;
  for (const auto& [m, pts] : dice_by_method) {
    for (const auto& [st, d] : pts) max_stage = std::max(max_stage, st);
  }
  const double x0 = 70.0, x1 = 600.0, y0 = 360.0, y1 = 40.0;
  auto xpos = [&](int stage) {
    return max_stage == 0 ? (x0 + x1) / 2.0
                          : x0 + (x1 - x0) * stage / static_cast<double>(max_stage);
  };
  auto ypos = [&](double dice) { return y0 - (y0 - y1) * dice; };

  std::string svg;
  char buf[256];
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"760\" height=\"420\" "
         "viewBox=\"0 0 760 420\">\n";
  svg += "<rect width=\"760\" height=\"420\" fill=\"white\"/>\n";
  svg += "<text x=\"280\" y=\"20\" font-family=\"monospace\" font-size=\"14\">"
         "mean Dice vs stage</text>\n";
  for (int g = 0; g <= 5; ++g) {
    const double dv = g / 5.0;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                  "stroke=\"#dddddd\"/>\n",
                  x0, ypos(dv), x1, ypos(dv));
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" font-family=\"monospace\" "
                  "font-size=\"11\">%.1f</text>\n",
                  x0 - 34.0, ypos(dv) + 4.0, dv);
    svg += buf;
  }
  for (int st = 0; st <= max_stage; ++st) {
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" font-family=\"monospace\" "
                  "font-size=\"11\">stage %d</text>\n",
                  xpos(st) - 20.0, y0 + 18.0, st);
    svg += buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                "stroke=\"black\"/>\n",
                x0, y0, x1, y0);
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                "stroke=\"black\"/>\n",
                x0, y0, x0, y1);
  svg += buf;

  int color_idx = 0;
  int legend_y = 46;
  for (const auto& [method, pts] : dice_by_method) {
    const char* color = kColors[color_idx % 8];
    ++color_idx;
    std::string poly;
    for (const auto& [st, d] : pts) {
      std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", xpos(st), ypos(d));
      poly += buf;
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"2\" points=\"" + poly + "\"/>\n";
    for (const auto& [st, d] : pts) {
      std::snprintf(buf, sizeof(buf),
                    "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"3\" fill=\"%s\"/>\n",
                    xpos(st), ypos(d), color);
      svg += buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"614\" y=\"%d\" width=\"12\" height=\"12\" fill=\"%s\"/>"
                  "<text x=\"632\" y=\"%d\" font-family=\"monospace\" "
                  "font-size=\"12\">%s</text>\n",
                  legend_y, color, legend_y + 10, method.c_str());
    svg += buf;
    legend_y += 20;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace

void cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir,
                std::ostream& log) {
  if (run_dirs.empty()) throw ConfigError("report: need at least one run directory");
  std::vector<RunData> runs;
  for (const std::string& d : run_dirs) runs.push_back(read_run_dir(d));
  std::sort(runs.begin(), runs.end(),
            [](const RunData& a, const RunData& b) { return a.method < b.method; });
  for (size_t i = 1; i < runs.size(); ++i) {
    if (runs[i].method == runs[i - 1].method) {
      throw ConfigError("report: method '" + runs[i].method + "' appears twice");
    }
    if (runs[i].benchmark != runs[0].benchmark) {
      throw DataError("report: runs come from different benchmarks");
    }
  }

  std::vector<MetricRow> all_rows;
  std::set<int> stages;
  std::set<int> categories_set;
  for (const RunData& rd : runs) {
    for (const MetricRow& r : rd.rows) {
      stages.insert(r.stage);
      categories_set.insert(r.category);
      all_rows.push_back(r);
    }
  }
  std::sort(all_rows.begin(), all_rows.end(), [](const MetricRow& a, const MetricRow& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.stage != b.stage) return a.stage < b.stage;
    if (a.domain != b.domain) return a.domain < b.domain;
    return a.category < b.category;
  });
  const std::vector<int> categories(categories_set.begin(), categories_set.end());

  json j;
  j["format_version"] = 1;
  j["benchmark"] = runs[0].benchmark;
  json methods = json::array();
  for (const RunData& rd : runs) methods.push_back(rd.method);
  j["methods"] = std::move(methods);

  std::string txt;
  txt += "segmentation report (benchmark " + runs[0].benchmark + ")\n\n";
  json summaries = json::array();
  std::map<std::string, std::map<int, double>> dice_by_method;
  for (int st : stages) {
    std::vector<std::pair<std::string, MetricsSummary>> entries;
    for (const RunData& rd : runs) {
      std::vector<MetricRow> rows;
      for (const MetricRow& r : rd.rows) {
        if (r.stage == st) rows.push_back(r);
      }
      if (rows.empty()) continue;
      summaries.push_back(summary_to_json(rd.method, st, rows));
      MetricsSummary s = aggregate(rows);
      dice_by_method[rd.method][st] = s.dice_macro_mean;
      entries.emplace_back(rd.method, std::move(s));
    }
    append_stage_table(txt, st, entries, categories);
  }
  j["summaries"] = std::move(summaries);
  j["rows"] = rows_to_json(all_rows);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create report directory " + out_dir + ": " + ec.message());
  write_file_bytes((fs::path(out_dir) / "report.json").string(), j.dump(2) + "\n");
  write_file_bytes((fs::path(out_dir) / "report.txt").string(), txt);
  write_file_bytes((fs::path(out_dir) / "dice_vs_stage.svg").string(),
                   render_dice_svg(dice_by_method));
  log << "wrote report.json, report.txt and dice_vs_stage.svg under " << out_dir << "\n";
}

}  // namespace hsiseg
