#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hsiseg/tensor.hpp"

namespace hsiseg {

// Binary mask on an h x w grid (row-major, nonzero = inside).
struct Mask {
  int h = 0, w = 0;
  std::vector<uint8_t> v;

  Mask() = default;
  Mask(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0) {}
  uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
  void set(int y, int x, uint8_t val) { v[static_cast<size_t>(y) * w + x] = val; }
};

// Extract the binary mask of one category id from a label map sample.
Mask mask_of_category(const IntTensor& labels, int sample, int category);

// Dice overlap 2|P n G| / (|P| + |G|); two empty masks count as 1.0.
double dice(const Mask& pred, const Mask& gt);

struct HausdorffOptions {
  double percentile = 100.0;  // nearest-rank percentile of directed distances
  double spacing = 1.0;       // physical units per pixel
};

// Boundary pixels under 4-connectivity: inside the set with at least one
// 4-neighbour outside the set or outside the image.
Mask boundary_4(const Mask& m);

// Exact squared Euclidean distance transform to the nonzero pixels of
// `sites` (two-pass separable parabola method).  Entries are exact squared
// integer distances; pixels with no site anywhere get +inf.
std::vector<double> squared_edt(const Mask& sites);

// Symmetric boundary Hausdorff distance: the chosen percentile of each
// directed boundary-to-boundary distance list, maximized over direction and
// scaled by spacing.  Undefined (nullopt) when either mask has no boundary.
std::optional<double> hausdorff(const Mask& a, const Mask& b,
                                const HausdorffOptions& opt = {});

// One evaluated (sample, category) pair.
struct MetricRow {
  std::string method;
  int stage = 0;
  int domain = 0;
  int category = 0;
  double dice = 0.0;
  std::optional<double> hd;
};

struct CategoryAggregate {
  int category = 0;
  int count = 0;
  double dice_mean = 0.0;
  std::optional<double> hd_mean;  // over the defined distances only
  int hd_defined = 0;
  int hd_undefined = 0;
};

struct MetricsSummary {
  std::vector<CategoryAggregate> per_category;  // ascending category id
  double dice_macro_mean = 0.0;                 // mean of per-category means
  std::optional<double> hd_macro_mean;          // over categories with any defined hd
};

MetricsSummary aggregate(const std::vector<MetricRow>& rows);

}  // namespace hsiseg
