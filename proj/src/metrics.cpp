#include "hsiseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace hsiseg {

Mask mask_of_category(const IntTensor& labels, int sample, int category) {
  if (sample < 0 || sample >= labels.n) {
    throw std::invalid_argument("mask_of_category: sample index out of range");
  }
  Mask m(labels.h, labels.w);
  const int32_t* p = labels.sample(sample);
  for (size_t i = 0; i < labels.plane(); ++i) m.v[i] = p[i] == category ? 1 : 0;
  return m;
}

double dice(const Mask& pred, const Mask& gt) {
  if (pred.h != gt.h || pred.w != gt.w) {
    throw std::invalid_argument("dice: mask shapes differ");
  }
  size_t inter = 0, np = 0, ng = 0;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    const bool a = pred.v[i] != 0, b = gt.v[i] != 0;
    inter += a && b ? 1 : 0;
    np += a ? 1 : 0;
    ng += b ? 1 : 0;
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

Mask boundary_4(const Mask& m) {
  Mask b(m.h, m.w);
  for (int y = 0; y < m.h; ++y) {
    for (int x = 0; x < m.w; ++x) {
      if (!m.at(y, x)) continue;
      const bool edge = y == 0 || y == m.h - 1 || x == 0 || x == m.w - 1;
      if (edge || !m.at(y - 1, x) || !m.at(y + 1, x) || !m.at(y, x - 1) ||
          !m.at(y, x + 1)) {
        b.set(y, x, 1);
      }
    }
  }
  return b;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-D squared distance transform over the lower envelope of parabolas.
void edt1d(const double* f, double* d, int n, std::vector<int>& v,
           std::vector<double>& z) {
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    if (f[q] == kInf) continue;
    double s;
    while (true) {
      if (f[v[k]] == kInf) {
        // previous parabola absent: replace it
        if (k == 0) {
          v[0] = q;
          z[0] = -kInf;
          z[1] = kInf;
          break;
        }
        --k;
        continue;
      }
      s = ((f[q] + static_cast<double>(q) * q) -
           (f[v[k]] + static_cast<double>(v[k]) * v[k])) /
          (2.0 * (q - v[k]));
      if (s <= z[k]) {
        --k;
        if (k < 0) {
          k = 0;
          v[0] = q;
          z[0] = -kInf;
          z[1] = kInf;
          break;
        }
        continue;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = kInf;
      break;
    }
  }
  if (f[v[0]] == kInf) {
    // no sites in this scanline
    for (int q = 0; q < n; ++q) d[q] = kInf;
    return;
  }
  int k2 = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k2 + 1] < q) ++k2;
    const double dq = q - v[k2];
    d[q] = dq * dq + f[v[k2]];
  }
}

}  // namespace

std::vector<double> squared_edt(const Mask& sites) {
  const int h = sites.h, w = sites.w;
  std::vector<double> grid(static_cast<size_t>(h) * w);
  for (size_t i = 0; i < grid.size(); ++i) grid[i] = sites.v[i] ? 0.0 : kInf;

  const int nmax = std::max(h, w);
  std::vector<double> f(nmax), d(nmax), z(static_cast<size_t>(nmax) + 1);
  std::vector<int> v(nmax);

  // columns
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = grid[static_cast<size_t>(y) * w + x];
    edt1d(f.data(), d.data(), h, v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<size_t>(y) * w + x] = d[y];
  }
  // rows
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = grid[static_cast<size_t>(y) * w + x];
    edt1d(f.data(), d.data(), w, v, z);
    for (int x = 0; x < w; ++x) grid[static_cast<size_t>(y) * w + x] = d[x];
  }
  return grid;
}

namespace {

// The chosen percentile (nearest-rank) of the directed distances from every
// boundary pixel of `from` to the boundary of `to` (via its precomputed EDT).
double directed_percentile(const Mask& from_boundary, const std::vector<double>& edt_sq,
                           double percentile) {
  std::vector<double> dist;
  for (size_t i = 0; i < from_boundary.v.size(); ++i) {
    if (from_boundary.v[i]) dist.push_back(std::sqrt(edt_sq[i]));
  }
  std::sort(dist.begin(), dist.end());
  const double n = static_cast<double>(dist.size());
  size_t idx = static_cast<size_t>(std::ceil(percentile / 100.0 * n));
  if (idx > 0) --idx;
  if (idx >= dist.size()) idx = dist.size() - 1;
  return dist[idx];
}

}  // namespace

std::optional<double> hausdorff(const Mask& a, const Mask& b,
                                const HausdorffOptions& opt) {
  if (a.h != b.h || a.w != b.w) {
    throw std::invalid_argument("hausdorff: mask shapes differ");
  }
  if (opt.percentile <= 0.0 || opt.percentile > 100.0) {
    throw std::invalid_argument("hausdorff: percentile outside (0,100]");
  }
  if (opt.spacing <= 0.0) throw std::invalid_argument("hausdorff: spacing must be > 0");
  const Mask ba = boundary_4(a);
  const Mask bb = boundary_4(b);
  const bool ea = std::all_of(ba.v.begin(), ba.v.end(), [](uint8_t x) { return x == 0; });
  const bool eb = std::all_of(bb.v.begin(), bb.v.end(), [](uint8_t x) { return x == 0; });
  if (ea || eb) return std::nullopt;
  const std::vector<double> edt_b = squared_edt(bb);
  const std::vector<double> edt_a = squared_edt(ba);
  const double d_ab = directed_percentile(ba, edt_b, opt.percentile);
  const double d_ba = directed_percentile(bb, edt_a, opt.percentile);
  return std::max(d_ab, d_ba) * opt.spacing;
}

MetricsSummary aggregate(const std::vector<MetricRow>& rows) {
  std::map<int, CategoryAggregate> by_cat;
  for (const MetricRow& r : rows) {
    CategoryAggregate& a = by_cat[r.category];
    a.category = r.category;
    a.count += 1;
    a.dice_mean += r.dice;
    if (r.hd.has_value()) {
      a.hd_defined += 1;
      a.hd_mean = a.hd_mean.value_or(0.0) + *r.hd;
    } else {
      a.hd_undefined += 1;
    }
  }
  MetricsSummary s;
  double dice_sum = 0.0, hd_sum = 0.0;
  int hd_cats = 0;
  for (auto& [cat, a] : by_cat) {
    a.dice_mean /= static_cast<double>(a.count);
    if (a.hd_defined > 0) *a.hd_mean /= static_cast<double>(a.hd_defined);
    dice_sum += a.dice_mean;
    if (a.hd_mean.has_value()) {
      hd_sum += *a.hd_mean;
      ++hd_cats;
    }
    s.per_category.push_back(a);
  }
  if (!s.per_category.empty()) {
    s.dice_macro_mean = dice_sum / static_cast<double>(s.per_category.size());
  }
  if (hd_cats > 0) s.hd_macro_mean = hd_sum / static_cast<double>(hd_cats);
  return s;
}

}  // namespace hsiseg
