#include "hsiseg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "hsiseg/archive.hpp"
#include "hsiseg/hash.hpp"
#include "hsiseg/jsonutil.hpp"
#include "hsiseg/rng.hpp"

namespace fs = std::filesystem;

namespace hsiseg {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;
}  // namespace

void PhantomSpec::validate() const {
  if (image_size < 16) throw ConfigError("phantom: image_size must be >= 16");
  if (center_jitter < 0.0) throw ConfigError("phantom: center_jitter must be >= 0");
  if (axis1_min < 2.0 || axis1_max < axis1_min || axis2_min < 2.0 || axis2_max < axis2_min) {
    throw ConfigError("phantom: semi-axis ranges must satisfy 2 <= min <= max");
  }
  if (ring_min <= 0.0 || ring_max < ring_min) {
    throw ConfigError("phantom: shell thickness range must satisfy 0 < min <= max");
  }
  if (blob_margin_min <= 0.0 || blob_margin_max < blob_margin_min) {
    throw ConfigError("phantom: blob margin range must satisfy 0 < min <= max");
  }
  if (blob_wobble < 0.0 || blob_wobble >= 1.0) {
    throw ConfigError("phantom: blob_wobble outside [0,1)");
  }
  // Keep the blob strictly outside the shell even at the deepest wobble dip.
  if ((1.0 + blob_margin_min) * (1.0 - blob_wobble) < 1.02) {
    throw ConfigError("phantom: blob margin/wobble combination can break nesting");
  }
  // Even the most favourable draw (centred, smallest axes/ring/margin) must
  // keep the wobbled blob inside the border guard used by the generator;
  // otherwise every attempt would be resampled until the retry cap.
  const double reach_min = (1.0 + blob_margin_min) * (1.0 + ring_min) *
                           std::max(axis1_min, axis2_min) * (1.0 + blob_wobble);
  if (reach_min > image_size / 2.0 - 2.0) {
    throw ConfigError("phantom: structures cannot fit inside the image");
  }
  for (double v : {intensity_bg, intensity_s1, intensity_s2, intensity_s3}) {
    if (v < 0.0 || v > 1.0) throw ConfigError("phantom: intensities must lie in [0,1]");
  }
  if (intensity_jitter < 0.0 || intensity_jitter > 0.2) {
    throw ConfigError("phantom: intensity_jitter outside [0,0.2]");
  }
  if (min_structure_pixels < 1) throw ConfigError("phantom: min_structure_pixels must be >= 1");
  if (retry_cap < 1) throw ConfigError("phantom: retry_cap must be >= 1");
}

void DomainSpec::validate() const {
  if (gamma <= 0.0) throw ConfigError("domain: gamma must be > 0");
  if (contrast <= 0.0) throw ConfigError("domain: contrast must be > 0");
  if (noise_sigma < 0.0) throw ConfigError("domain: noise_sigma must be >= 0");
  if (bias_amplitude < 0.0 || bias_amplitude >= 1.0) {
    throw ConfigError("domain: bias_amplitude outside [0,1)");
  }
}

std::vector<DomainSpec> default_domains() {
  DomainSpec d0;
  d0.domain_id = 0;
  d0.noise_sigma = 0.01;

  DomainSpec d1;
  d1.domain_id = 1;
  d1.gamma = 1.6;
  d1.contrast = 0.85;
  d1.noise_sigma = 0.03;
  d1.bias_amplitude = 0.1;

  DomainSpec d2;
  d2.domain_id = 2;
  d2.gamma = 0.7;
  d2.contrast = 1.25;
  d2.noise_sigma = 0.03;
  d2.bias_amplitude = 0.15;
  return {d0, d1, d2};
}

Phantom generate_phantom(const PhantomSpec& spec, uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const int S = spec.image_size;

  for (int attempt = 0; attempt < spec.retry_cap; ++attempt) {
    const double cx = S / 2.0 + rng.uniform(-spec.center_jitter, spec.center_jitter);
    const double cy = S / 2.0 + rng.uniform(-spec.center_jitter, spec.center_jitter);
    const double a1 = rng.uniform(spec.axis1_min, spec.axis1_max);
    const double a2 = rng.uniform(spec.axis2_min, spec.axis2_max);
    const double theta = rng.uniform(0.0, kPi);
    const double tau = rng.uniform(spec.ring_min, spec.ring_max);
    const double margin = rng.uniform(spec.blob_margin_min, spec.blob_margin_max);
    double harm[3], phase[3];
    for (int k = 0; k < 3; ++k) {
      harm[k] = rng.uniform(-1.0, 1.0);
      phase[k] = rng.uniform(0.0, kTwoPi);
    }
    double jitter[4];
    for (double& j : jitter) j = rng.uniform(-spec.intensity_jitter, spec.intensity_jitter);

    const double r3 = (1.0 + margin) * (1.0 + tau) * std::max(a1, a2);
    const double reach = r3 * (1.0 + spec.blob_wobble);
    if (cx - reach < 1.0 || cx + reach > S - 2.0 || cy - reach < 1.0 ||
        cy + reach > S - 2.0) {
      continue;  // would clip the blob against the border; resample
    }

    Phantom ph;
    ph.size = S;
    ph.image.assign(static_cast<size_t>(S) * S, 0.0);
    ph.mask.assign(static_cast<size_t>(S) * S, 0);
    const double ct = std::cos(theta), st = std::sin(theta);
    int count[4] = {0, 0, 0, 0};
    for (int y = 0; y < S; ++y) {
      for (int x = 0; x < S; ++x) {
        const double dx = x - cx, dy = y - cy;
        const double u = (dx * ct + dy * st) / a1;
        const double v = (-dx * st + dy * ct) / a2;
        const double rho = std::sqrt(u * u + v * v);
        int label = 0;
        if (rho <= 1.0) {
          label = 1;
        } else if (rho <= 1.0 + tau) {
          label = 2;
        } else {
          const double r = std::sqrt(dx * dx + dy * dy);
          const double phi = std::atan2(dy, dx);
          const double wob = spec.blob_wobble *
                             (0.5 * harm[0] * std::sin(phi + phase[0]) +
                              0.3 * harm[1] * std::sin(2.0 * phi + phase[1]) +
                              0.2 * harm[2] * std::sin(3.0 * phi + phase[2]));
          if (r <= r3 * (1.0 + wob)) label = 3;
        }
        ph.mask[static_cast<size_t>(y) * S + x] = label;
        ++count[label];
      }
    }
    if (count[1] < spec.min_structure_pixels || count[2] < spec.min_structure_pixels ||
        count[3] < spec.min_structure_pixels) {
      continue;
    }

    const double base[4] = {
        std::clamp(spec.intensity_bg + jitter[0], 0.0, 1.0),
        std::clamp(spec.intensity_s1 + jitter[1], 0.0, 1.0),
        std::clamp(spec.intensity_s2 + jitter[2], 0.0, 1.0),
        std::clamp(spec.intensity_s3 + jitter[3], 0.0, 1.0)};
    for (size_t i = 0; i < ph.image.size(); ++i) {
      ph.image[i] = base[ph.mask[i]];
    }
    return ph;
  }
  throw DataError("phantom generation failed after " + std::to_string(spec.retry_cap) +
                  " retries (seed " + std::to_string(seed) + ")");
}

void apply_domain(std::vector<double>& image, int size, const DomainSpec& dom,
                  uint64_t seed) {
  dom.validate();
  if (image.size() != static_cast<size_t>(size) * size) {
    throw std::invalid_argument("apply_domain: image size mismatch");
  }
  Rng rng(seed);
  const double fx = rng.uniform(0.5, 1.5);
  const double fy = rng.uniform(0.5, 1.5);
  const double px = rng.uniform(0.0, kTwoPi);
  const double py = rng.uniform(0.0, kTwoPi);

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double v = image[static_cast<size_t>(y) * size + x];
      if (dom.invert) v = 1.0 - v;
      if (dom.gamma != 1.0) v = std::pow(std::max(v, 0.0), dom.gamma);
      if (dom.contrast != 1.0) v = 0.5 + dom.contrast * (v - 0.5);
      if (dom.noise_sigma > 0.0) v += dom.noise_sigma * rng.normal();
      if (dom.bias_amplitude > 0.0) {
        const double g = std::sin(kTwoPi * fx * x / size + px) *
                         std::sin(kTwoPi * fy * y / size + py);
        v *= 1.0 + dom.bias_amplitude * g;
      }
      image[static_cast<size_t>(y) * size + x] = std::clamp(v, 0.0, 1.0);
    }
  }
}

uint64_t stream_id_train(int stage) { return 4ull * static_cast<uint64_t>(stage); }
uint64_t stream_id_val(int stage) { return 4ull * static_cast<uint64_t>(stage) + 1; }
uint64_t stream_id_test(int domain) { return 64ull + static_cast<uint64_t>(domain); }

namespace {

Sample build_sample(const PhantomSpec& spec, const DomainSpec& dom,
                    uint64_t master_seed, uint64_t phantom_seed) {
  const uint64_t seed = Rng::mix(master_seed, phantom_seed);
  Phantom ph = generate_phantom(spec, seed);
  apply_domain(ph.image, spec.image_size, dom, Rng::mix(seed, 0xB1A5F1E1Dull));
  Sample s;
  s.h = s.w = spec.image_size;
  s.image = std::move(ph.image);
  s.full_mask = std::move(ph.mask);
  s.mask = s.full_mask;
  s.domain_id = dom.domain_id;
  s.phantom_seed = phantom_seed;
  return s;
}

}  // namespace

Dataset make_stage_dataset(const PhantomSpec& spec, const std::vector<DomainSpec>& domains,
                           int stage, int count, uint64_t master_seed,
                           uint64_t stream_id) {
  if (stage < 0 || static_cast<size_t>(stage) >= domains.size()) {
    throw std::invalid_argument("make_stage_dataset: stage outside domain list");
  }
  if (count < 1) throw std::invalid_argument("make_stage_dataset: count must be >= 1");
  Dataset ds;
  ds.image_size = spec.image_size;
  ds.stage = stage;
  for (int i = 0; i < count; ++i) {
    const uint64_t ps = (stream_id << 32) | static_cast<uint64_t>(i);
    Sample s = build_sample(spec, domains[static_cast<size_t>(stage)], master_seed, ps);
    const int32_t new_id = stage + 1;
    if (stage == 0) {
      // Fully supervised over {background, structure 1}.
      for (int32_t& m : s.mask) m = m == 1 ? 1 : 0;
    } else {
      // Only the newly introduced structure is annotated.
      for (int32_t& m : s.mask) m = m == new_id ? new_id : -1;
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset make_test_set(const PhantomSpec& spec, const std::vector<DomainSpec>& domains,
                      int count, uint64_t master_seed) {
  if (count < 1) throw std::invalid_argument("make_test_set: count must be >= 1");
  if (domains.empty()) throw std::invalid_argument("make_test_set: no domains");
  Dataset ds;
  ds.image_size = spec.image_size;
  ds.stage = -1;
  ds.split = "test";
  for (size_t d = 0; d < domains.size(); ++d) {
    for (int i = 0; i < count; ++i) {
      const uint64_t ps =
          (stream_id_test(static_cast<int>(d)) << 32) | static_cast<uint64_t>(i);
      ds.samples.push_back(build_sample(spec, domains[d], master_seed, ps));
    }
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  ArchiveWriter w;
  w.put_scalar_i64("meta/format_version", 1);
  w.put_scalar_i64("meta/image_size", ds.image_size);
  w.put_scalar_i64("meta/stage", ds.stage);
  w.put_text("meta/split", ds.split);
  w.put_scalar_i64("meta/count", static_cast<int64_t>(ds.samples.size()));
  char key[64];
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    const uint64_t hw[2] = {static_cast<uint64_t>(s.h), static_cast<uint64_t>(s.w)};
    std::snprintf(key, sizeof(key), "sample/%06zu", i);
    const std::string p(key);
    w.put_f64(p + "/image", {hw[0], hw[1]}, s.image.data(), s.image.size());
    std::vector<int64_t> m(s.mask.begin(), s.mask.end());
    w.put_i64(p + "/mask", {hw[0], hw[1]}, m.data(), m.size());
    std::vector<int64_t> fm(s.full_mask.begin(), s.full_mask.end());
    w.put_i64(p + "/full_mask", {hw[0], hw[1]}, fm.data(), fm.size());
    w.put_scalar_i64(p + "/domain", s.domain_id);
    w.put_scalar_i64(p + "/seed", static_cast<int64_t>(s.phantom_seed));
  }
  w.write_file(path);
}

Dataset load_dataset(const std::string& path) {
  const Archive a = Archive::read_file(path);
  if (a.scalar_i64("meta/format_version") != 1) {
    throw DataError("dataset: unsupported format version in " + path);
  }
  Dataset ds;
  ds.image_size = static_cast<int>(a.scalar_i64("meta/image_size"));
  ds.stage = static_cast<int>(a.scalar_i64("meta/stage"));
  ds.split = a.text("meta/split");
  const int64_t count = a.scalar_i64("meta/count");
  if (count < 0) throw DataError("dataset: negative count in " + path);
  char key[64];
  for (int64_t i = 0; i < count; ++i) {
    std::snprintf(key, sizeof(key), "sample/%06lld", static_cast<long long>(i));
    const std::string p(key);
    Sample s;
    const auto& dims = a.dims(p + "/image");
    if (dims.size() != 2) throw DataError("dataset: bad image dims for " + p);
    s.h = static_cast<int>(dims[0]);
    s.w = static_cast<int>(dims[1]);
    if (s.h != ds.image_size || s.w != ds.image_size) {
      throw DataError("dataset: sample size mismatch for " + p + " in " + path);
    }
    s.image = a.f64(p + "/image");
    const auto& m = a.i64(p + "/mask");
    const auto& fm = a.i64(p + "/full_mask");
    if (m.size() != s.image.size() || fm.size() != s.image.size()) {
      throw DataError("dataset: mask size mismatch for " + p + " in " + path);
    }
    s.mask.assign(m.begin(), m.end());
    s.full_mask.assign(fm.begin(), fm.end());
    s.domain_id = static_cast<int>(a.scalar_i64(p + "/domain"));
    s.phantom_seed = static_cast<uint64_t>(a.scalar_i64(p + "/seed"));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void BenchmarkSpec::validate() const {
  phantom.validate();
  if (stages < 1 || stages > 3) throw ConfigError("benchmark: stages outside [1,3]");
  if (domains.size() != static_cast<size_t>(stages)) {
    throw ConfigError("benchmark: need exactly one domain per stage");
  }
  for (const DomainSpec& d : domains) d.validate();
  if (train_per_stage < 1 || val_per_stage < 1 || test_per_domain < 1) {
    throw ConfigError("benchmark: split sizes must be >= 1");
  }
  if (preview_count < 0) throw ConfigError("benchmark: preview_count must be >= 0");
}

namespace {

using nlohmann::json;

json phantom_to_json(const PhantomSpec& p) {
  json j;
  j["image_size"] = p.image_size;
  j["center_jitter"] = p.center_jitter;
  j["axis1_min"] = p.axis1_min;
  j["axis1_max"] = p.axis1_max;
  j["axis2_min"] = p.axis2_min;
  j["axis2_max"] = p.axis2_max;
  j["ring_min"] = p.ring_min;
  j["ring_max"] = p.ring_max;
  j["blob_margin_min"] = p.blob_margin_min;
  j["blob_margin_max"] = p.blob_margin_max;
  j["blob_wobble"] = p.blob_wobble;
  j["intensity_bg"] = p.intensity_bg;
  j["intensity_s1"] = p.intensity_s1;
  j["intensity_s2"] = p.intensity_s2;
  j["intensity_s3"] = p.intensity_s3;
  j["intensity_jitter"] = p.intensity_jitter;
  j["min_structure_pixels"] = p.min_structure_pixels;
  j["retry_cap"] = p.retry_cap;
  return j;
}

PhantomSpec phantom_from_json(const json& j) {
  json_require_exact_keys(
      j,
      {"image_size", "center_jitter", "axis1_min", "axis1_max", "axis2_min",
       "axis2_max", "ring_min", "ring_max", "blob_margin_min", "blob_margin_max",
       "blob_wobble", "intensity_bg", "intensity_s1", "intensity_s2",
       "intensity_s3", "intensity_jitter", "min_structure_pixels", "retry_cap"},
      "phantom");
  PhantomSpec p;
  p.image_size = j.at("image_size").get<int>();
  p.center_jitter = j.at("center_jitter").get<double>();
  p.axis1_min = j.at("axis1_min").get<double>();
  p.axis1_max = j.at("axis1_max").get<double>();
  p.axis2_min = j.at("axis2_min").get<double>();
  p.axis2_max = j.at("axis2_max").get<double>();
  p.ring_min = j.at("ring_min").get<double>();
  p.ring_max = j.at("ring_max").get<double>();
  p.blob_margin_min = j.at("blob_margin_min").get<double>();
  p.blob_margin_max = j.at("blob_margin_max").get<double>();
  p.blob_wobble = j.at("blob_wobble").get<double>();
  p.intensity_bg = j.at("intensity_bg").get<double>();
  p.intensity_s1 = j.at("intensity_s1").get<double>();
  p.intensity_s2 = j.at("intensity_s2").get<double>();
  p.intensity_s3 = j.at("intensity_s3").get<double>();
  p.intensity_jitter = j.at("intensity_jitter").get<double>();
  p.min_structure_pixels = j.at("min_structure_pixels").get<int>();
  p.retry_cap = j.at("retry_cap").get<int>();
  return p;
}

json domain_to_json(const DomainSpec& d) {
  json j;
  j["domain_id"] = d.domain_id;
  j["gamma"] = d.gamma;
  j["contrast"] = d.contrast;
  j["noise_sigma"] = d.noise_sigma;
  j["bias_amplitude"] = d.bias_amplitude;
  j["invert"] = d.invert;
  return j;
}

DomainSpec domain_from_json(const json& j) {
  json_require_exact_keys(
      j, {"domain_id", "gamma", "contrast", "noise_sigma", "bias_amplitude", "invert"},
      "domain");
  DomainSpec d;
  d.domain_id = j.at("domain_id").get<int>();
  d.gamma = j.at("gamma").get<double>();
  d.contrast = j.at("contrast").get<double>();
  d.noise_sigma = j.at("noise_sigma").get<double>();
  d.bias_amplitude = j.at("bias_amplitude").get<double>();
  d.invert = j.at("invert").get<bool>();
  return d;
}

}  // namespace

std::string benchmark_spec_to_json(const BenchmarkSpec& spec) {
  json j;
  j["phantom"] = phantom_to_json(spec.phantom);
  json doms = json::array();
  for (const DomainSpec& d : spec.domains) doms.push_back(domain_to_json(d));
  j["domains"] = doms;
  j["stages"] = spec.stages;
  j["train_per_stage"] = spec.train_per_stage;
  j["val_per_stage"] = spec.val_per_stage;
  j["test_per_domain"] = spec.test_per_domain;
  j["preview_count"] = spec.preview_count;
  j["master_seed"] = spec.master_seed;
  return j.dump(2);
}

BenchmarkSpec benchmark_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("benchmark: invalid JSON: ") + e.what());
  }
  json_require_exact_keys(j,
                          {"phantom", "domains", "stages", "train_per_stage",
                           "val_per_stage", "test_per_domain", "preview_count",
                           "master_seed"},
                          "benchmark");
  BenchmarkSpec spec;
  spec.phantom = phantom_from_json(j.at("phantom"));
  if (!j.at("domains").is_array()) throw ConfigError("benchmark: 'domains' must be an array");
  spec.domains.clear();
  for (const json& dj : j.at("domains")) spec.domains.push_back(domain_from_json(dj));
  spec.stages = j.at("stages").get<int>();
  spec.train_per_stage = j.at("train_per_stage").get<int>();
  spec.val_per_stage = j.at("val_per_stage").get<int>();
  spec.test_per_domain = j.at("test_per_domain").get<int>();
  spec.preview_count = j.at("preview_count").get<int>();
  spec.master_seed = j.at("master_seed").get<uint64_t>();
  spec.validate();
  return spec;
}

namespace {

std::vector<std::string> benchmark_files(const BenchmarkSpec& spec) {
  std::vector<std::string> names;
  for (int t = 0; t < spec.stages; ++t) {
    names.push_back("stage" + std::to_string(t) + "_train.bin");
    names.push_back("stage" + std::to_string(t) + "_val.bin");
  }
  names.push_back("test.bin");
  return names;
}

void write_previews(const Dataset& ds, const std::string& tag, int count,
                    const fs::path& dir) {
  const int n = std::min<int>(count, static_cast<int>(ds.samples.size()));
  char buf[32];
  for (int i = 0; i < n; ++i) {
    const Sample& s = ds.samples[static_cast<size_t>(i)];
    std::snprintf(buf, sizeof(buf), "%s_%03d", tag.c_str(), i);
    write_pgm_image((dir / (std::string(buf) + "_image.pgm")).string(), s.image, s.h, s.w);
    write_pgm_mask((dir / (std::string(buf) + "_mask.pgm")).string(), s.full_mask, s.h, s.w);
  }
}

}  // namespace

bool benchmark_up_to_date(const BenchmarkSpec& spec, const std::string& dir) {
  const fs::path root(dir);
  const fs::path manifest = root / "manifest.json";
  std::error_code ec;
  if (!fs::exists(manifest, ec)) return false;
  try {
    std::ifstream f(manifest);
    json j = json::parse(f);
    const BenchmarkSpec stored =
        benchmark_spec_from_json(j.at("spec").dump());
    if (benchmark_spec_to_json(stored) != benchmark_spec_to_json(spec)) return false;
    const json& files = j.at("files");
    for (const std::string& name : benchmark_files(spec)) {
      if (!files.contains(name)) return false;
      const fs::path p = root / name;
      if (!fs::exists(p, ec)) return false;
      if (hash_hex(fnv1a64_file(p.string())) != files.at(name).get<std::string>()) {
        return false;
      }
    }
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

void generate_benchmark(const BenchmarkSpec& spec, const std::string& dir,
                        bool force, std::ostream& log) {
  spec.validate();
  if (!force && benchmark_up_to_date(spec, dir)) {
    log << "benchmark in " << dir << " is up-to-date; nothing to do\n";
    return;
  }
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "previews", ec);
  if (ec) throw DataError("cannot create data directory " + dir + ": " + ec.message());

  json files;
  auto emit = [&](const Dataset& ds, const std::string& name, const std::string& tag) {
    const fs::path p = root / name;
    save_dataset(ds, p.string());
    files[name] = hash_hex(fnv1a64_file(p.string()));
    write_previews(ds, tag, spec.preview_count, root / "previews");
    log << "wrote " << p.string() << " (" << ds.samples.size() << " samples)\n";
  };

  for (int t = 0; t < spec.stages; ++t) {
    Dataset train = make_stage_dataset(spec.phantom, spec.domains, t,
                                       spec.train_per_stage, spec.master_seed,
                                       stream_id_train(t));
    train.split = "train";
    emit(train, "stage" + std::to_string(t) + "_train.bin", "stage" + std::to_string(t) + "_train");
    Dataset val = make_stage_dataset(spec.phantom, spec.domains, t, spec.val_per_stage,
                                     spec.master_seed, stream_id_val(t));
    val.split = "val";
    emit(val, "stage" + std::to_string(t) + "_val.bin", "stage" + std::to_string(t) + "_val");
  }
  Dataset test = make_test_set(spec.phantom, spec.domains, spec.test_per_domain,
                               spec.master_seed);
  emit(test, "test.bin", "test");

  json manifest;
  manifest["format_version"] = 1;
  manifest["spec"] = json::parse(benchmark_spec_to_json(spec));
  manifest["files"] = files;
  std::ofstream mf(root / "manifest.json", std::ios::trunc);
  if (!mf) throw DataError("cannot write manifest in " + dir);
  mf << manifest.dump(2) << "\n";
}

uint64_t verify_benchmark(const std::string& dir) {
  const fs::path root(dir);
  const fs::path manifest = root / "manifest.json";
  std::ifstream f(manifest);
  if (!f) throw DataError("missing manifest: " + manifest.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw DataError("corrupt manifest " + manifest.string() + ": " + e.what());
  }
  if (!j.contains("files") || !j.contains("spec")) {
    throw DataError("manifest " + manifest.string() + " lacks required sections");
  }
  for (const auto& item : j.at("files").items()) {
    const fs::path p = root / item.key();
    std::error_code ec;
    if (!fs::exists(p, ec)) throw DataError("missing data file: " + p.string());
    if (hash_hex(fnv1a64_file(p.string())) != item.value().get<std::string>()) {
      throw DataError("hash mismatch for " + p.string() +
                      "; regenerate the benchmark");
    }
  }
  return fnv1a64_file(manifest.string());
}

void write_pgm_image(const std::string& path, const std::vector<double>& image,
                     int h, int w) {
  if (image.size() != static_cast<size_t>(h) * w) {
    throw std::invalid_argument("write_pgm_image: size mismatch");
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path);
  f << "P5\n" << w << " " << h << "\n255\n";
  for (double v : image) {
    const int g = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    f.put(static_cast<char>(g));
  }
}

void write_pgm_mask(const std::string& path, const std::vector<int32_t>& mask,
                    int h, int w) {
  if (mask.size() != static_cast<size_t>(h) * w) {
    throw std::invalid_argument("write_pgm_mask: size mismatch");
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path);
  f << "P5\n" << w << " " << h << "\n255\n";
  for (int32_t m : mask) {
    int g = 32;  // unlabeled
    switch (m) {
      case 0: g = 0; break;
      case 1: g = 255; break;
      case 2: g = 170; break;
      case 3: g = 85; break;
      default: break;
    }
    f.put(static_cast<char>(g));
  }
}

}  // namespace hsiseg
