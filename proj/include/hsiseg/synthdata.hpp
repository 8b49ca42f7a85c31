#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hsiseg/errors.hpp"
#include "hsiseg/tensor.hpp"

namespace hsiseg {

// Geometry and intensity ranges of the nested three-structure phantom:
// an ellipse (category 1) inside an elliptical shell (category 2) inside an
// irregular blob (category 3) on a dark background (category 0).
struct PhantomSpec {
  int image_size = 64;
  double center_jitter = 6.0;       // max offset of the common centre
  double axis1_min = 5.0, axis1_max = 9.0;  // ellipse semi-axes, pixels
  double axis2_min = 4.0, axis2_max = 8.0;
  double ring_min = 0.35, ring_max = 0.65;  // shell thickness relative to the ellipse
  double blob_margin_min = 0.25, blob_margin_max = 0.5;  // blob radius above the shell
  double blob_wobble = 0.12;        // total radial perturbation amplitude
  double intensity_bg = 0.15;
  double intensity_s1 = 0.85;
  double intensity_s2 = 0.55;
  double intensity_s3 = 0.35;
  double intensity_jitter = 0.03;   // per-sample intensity wobble
  int min_structure_pixels = 8;     // resample below this
  int retry_cap = 20;

  void validate() const;
};

// One acquisition domain: the order of application is
// invert -> gamma -> contrast -> additive noise -> multiplicative bias ->
// clip to [0, 1].
struct DomainSpec {
  int domain_id = 0;
  double gamma = 1.0;
  double contrast = 1.0;
  double noise_sigma = 0.0;
  double bias_amplitude = 0.0;
  bool invert = false;

  void validate() const;
};

// The three default domains: clean; darker gamma/contrast shift; brighter
// opposite-direction shift with a bias field.
std::vector<DomainSpec> default_domains();

struct Phantom {
  int size = 0;
  std::vector<double> image;  // intensities in [0,1]
  std::vector<int32_t> mask;  // category ids 0..3
};

// Deterministic phantom from the seed; resamples degenerate geometry up to
// retry_cap times and throws DataError beyond that.
Phantom generate_phantom(const PhantomSpec& spec, uint64_t seed);

void apply_domain(std::vector<double>& image, int size, const DomainSpec& dom,
                  uint64_t seed);

struct Sample {
  int h = 0, w = 0;
  std::vector<double> image;
  std::vector<int32_t> mask;       // stage-visible labels (-1 = unlabeled)
  std::vector<int32_t> full_mask;  // complete labels, for evaluation / joint training
  int domain_id = 0;
  uint64_t phantom_seed = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  int image_size = 0;
  int stage = -1;  // -1 for the mixed test split
  std::string split;
};

// Seed-stream layout: the per-sample phantom seed is
// (stream_id << 32) | index, so streams can never collide.
uint64_t stream_id_train(int stage);
uint64_t stream_id_val(int stage);
uint64_t stream_id_test(int domain);

// Stage dataset: domain domains[stage]; masks keep only the stage's new
// structure (stage 0 is fully labeled over {background, structure 1}).
Dataset make_stage_dataset(const PhantomSpec& spec, const std::vector<DomainSpec>& domains,
                           int stage, int count, uint64_t master_seed,
                           uint64_t stream_id);

// Test split: `count` fully-labeled samples from every domain.
Dataset make_test_set(const PhantomSpec& spec, const std::vector<DomainSpec>& domains,
                      int count, uint64_t master_seed);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Whole-benchmark description; drives data generation and the manifest.
struct BenchmarkSpec {
  PhantomSpec phantom;
  std::vector<DomainSpec> domains;
  int stages = 3;            // structures introduced one per stage, ids 1..stages
  int train_per_stage = 200;
  int val_per_stage = 40;
  int test_per_domain = 80;
  int preview_count = 4;     // PGM previews written per split
  uint64_t master_seed = 1234;

  void validate() const;
};

std::string benchmark_spec_to_json(const BenchmarkSpec& spec);
BenchmarkSpec benchmark_spec_from_json(const std::string& text);

// Generates all splits plus manifest.json and PGM previews under dir.
// When the manifest already matches the requested BenchmarkSpec and every
// file hash checks out, does nothing (unless force) and reports
// "up-to-date" to the log.
void generate_benchmark(const BenchmarkSpec& spec, const std::string& dir,
                        bool force, std::ostream& log);

bool benchmark_up_to_date(const BenchmarkSpec& spec, const std::string& dir);

// Verifies the manifest and file hashes, throwing DataError on any mismatch;
// returns the manifest content hash identifying the benchmark.
uint64_t verify_benchmark(const std::string& dir);

// 8-bit binary PGM writers for visual inspection.
void write_pgm_image(const std::string& path, const std::vector<double>& image,
                     int h, int w);
void write_pgm_mask(const std::string& path, const std::vector<int32_t>& mask,
                    int h, int w);

}  // namespace hsiseg
