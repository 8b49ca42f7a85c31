#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "hsiseg/metrics.hpp"
#include "hsiseg/rng.hpp"

using namespace hsiseg;

namespace {

Mask from_string(int h, int w, const char* s) {
  Mask m(h, w);
  for (int i = 0; i < h * w; ++i) m.v[static_cast<size_t>(i)] = (s[i] == '1') ? 1 : 0;
  return m;
}

Mask random_mask(int h, int w, double density, Rng& rng) {
  Mask m(h, w);
  for (auto& v : m.v) v = (rng.uniform01() < density) ? 1 : 0;
  return m;
}

// Quadratic-time reference distance transform.
std::vector<double> edt_reference(const Mask& sites) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> d(static_cast<size_t>(sites.h) * sites.w, inf);
  for (int y = 0; y < sites.h; ++y) {
    for (int x = 0; x < sites.w; ++x) {
      double best = inf;
      for (int sy = 0; sy < sites.h; ++sy) {
        for (int sx = 0; sx < sites.w; ++sx) {
          if (!sites.at(sy, sx)) continue;
          const double dd = double(y - sy) * (y - sy) + double(x - sx) * (x - sx);
          best = std::min(best, dd);
        }
      }
      d[static_cast<size_t>(y) * sites.w + x] = best;
    }
  }
  return d;
}

// Direct nearest-rank percentile Hausdorff over boundary point sets.
std::optional<double> hausdorff_reference(const Mask& a, const Mask& b,
                                          double percentile, double spacing) {
  const Mask ba = boundary_4(a);
  const Mask bb = boundary_4(b);
  std::vector<std::pair<int, int>> pa, pb;
  for (int y = 0; y < ba.h; ++y) {
    for (int x = 0; x < ba.w; ++x) {
      if (ba.at(y, x)) pa.emplace_back(y, x);
      if (bb.at(y, x)) pb.emplace_back(y, x);
    }
  }
  if (pa.empty() || pb.empty()) return std::nullopt;
  auto directed = [&](const std::vector<std::pair<int, int>>& from,
                      const std::vector<std::pair<int, int>>& to) {
    std::vector<double> dists;
    for (const auto& [fy, fx] : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [ty, tx] : to) {
        const double dd = double(fy - ty) * (fy - ty) + double(fx - tx) * (fx - tx);
        best = std::min(best, dd);
      }
      dists.push_back(std::sqrt(best));
    }
    std::sort(dists.begin(), dists.end());
    const size_t idx = static_cast<size_t>(
        std::ceil(percentile / 100.0 * static_cast<double>(dists.size()))) - 1;
    return dists[std::min(idx, dists.size() - 1)];
  };
  return spacing * std::max(directed(pa, pb), directed(pb, pa));
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("dice handles the textbook cases") {
  const Mask a = from_string(3, 3, "110110000");
  CHECK(dice(a, a) == 1.0);
  const Mask empty(3, 3);
  CHECK(dice(empty, empty) == 1.0);  // both empty counts as perfect agreement
  CHECK(dice(a, empty) == 0.0);
  CHECK(dice(empty, a) == 0.0);
  const Mask disjoint = from_string(3, 3, "000000011");
  CHECK(dice(a, disjoint) == 0.0);
}

TEST_CASE("a unit shift of a 2x2 square gives dice one half") {
  Mask a(4, 4), b(4, 4);
  a.set(1, 1, 1); a.set(1, 2, 1); a.set(2, 1, 1); a.set(2, 2, 1);
  b.set(2, 1, 1); b.set(2, 2, 1); b.set(3, 1, 1); b.set(3, 2, 1);
  CHECK(dice(a, b) == 0.5);  // overlap 2, sizes 4+4
}

TEST_CASE("category masks are extracted per sample") {
  IntTensor labels(2, 2, 2);
  labels.at(0, 0, 0) = 2;
  labels.at(0, 1, 1) = 2;
  labels.at(1, 0, 1) = 2;
  const Mask m0 = mask_of_category(labels, 0, 2);
  CHECK(m0.at(0, 0) == 1);
  CHECK(m0.at(1, 1) == 1);
  CHECK(m0.at(0, 1) == 0);
  const Mask m1 = mask_of_category(labels, 1, 2);
  CHECK(m1.at(0, 1) == 1);
  CHECK(m1.at(0, 0) == 0);
}

TEST_CASE("boundary keeps rim pixels only") {
  Mask solid(5, 5);
  for (int y = 1; y <= 3; ++y) {
    for (int x = 1; x <= 3; ++x) solid.set(y, x, 1);
  }
  const Mask b = boundary_4(solid);
  CHECK(b.at(1, 1) == 1);
  CHECK(b.at(1, 2) == 1);
  CHECK(b.at(2, 2) == 0);  // interior pixel has four inside neighbours
  CHECK(b.at(0, 0) == 0);

  // Pixels on the image edge are boundary by definition.
  Mask full(2, 2);
  for (auto& v : full.v) v = 1;
  const Mask bf = boundary_4(full);
  for (auto v : bf.v) CHECK(v == 1);

  Mask single(3, 3);
  single.set(1, 1, 1);
  const Mask bs = boundary_4(single);
  CHECK(bs.at(1, 1) == 1);
}

TEST_CASE("distance transform matches the quadratic reference exhaustively on 3x3") {
  for (int bits = 0; bits < 512; ++bits) {
    Mask m(3, 3);
    for (int i = 0; i < 9; ++i) m.v[static_cast<size_t>(i)] = (bits >> i) & 1;
    const std::vector<double> got = squared_edt(m);
    const std::vector<double> want = edt_reference(m);
    for (size_t i = 0; i < got.size(); ++i) {
      if (std::isinf(want[i])) {
        REQUIRE(std::isinf(got[i]));
      } else {
        REQUIRE(got[i] == want[i]);  // exact squared integer distances
      }
    }
  }
}

TEST_CASE("distance transform matches the reference on random 16x16 masks") {
  Rng rng(131);
  for (int trial = 0; trial < 100; ++trial) {
    const Mask m = random_mask(16, 16, rng.uniform(0.02, 0.4), rng);
    const std::vector<double> got = squared_edt(m);
    const std::vector<double> want = edt_reference(m);
    for (size_t i = 0; i < got.size(); ++i) {
      if (std::isinf(want[i])) {
        REQUIRE(std::isinf(got[i]));
      } else {
        REQUIRE(got[i] == want[i]);
      }
    }
  }
}

TEST_CASE("hausdorff of two single pixels is their euclidean distance") {
  Mask a(6, 6), b(6, 6);
  a.set(0, 0, 1);
  b.set(3, 4, 1);
  const auto d = hausdorff(a, b);
  REQUIRE(d.has_value());
  CHECK(*d == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(*hausdorff(a, a) == 0.0);
}

TEST_CASE("hausdorff is undefined when either mask is empty") {
  Mask a(4, 4), empty(4, 4);
  a.set(1, 1, 1);
  CHECK_FALSE(hausdorff(a, empty).has_value());
  CHECK_FALSE(hausdorff(empty, a).has_value());
  CHECK_FALSE(hausdorff(empty, empty).has_value());
}

TEST_CASE("spacing scales the distance linearly") {
  Mask a(6, 6), b(6, 6);
  a.set(0, 0, 1);
  b.set(0, 3, 1);
  HausdorffOptions opt;
  opt.spacing = 2.5;
  CHECK(*hausdorff(a, b, opt) == doctest::Approx(7.5).epsilon(1e-12));
}

TEST_CASE("percentile trims single outliers") {
  // Boundary of a: ten pixels on row 0; boundary of b: same ten pixels but
  // the last one displaced far down.
  Mask a(12, 10), b(12, 10);
  for (int x = 0; x < 10; ++x) a.set(0, x, 1);
  for (int x = 0; x < 9; ++x) b.set(0, x, 1);
  b.set(11, 9, 1);
  const auto full = hausdorff(a, b);
  REQUIRE(full.has_value());
  HausdorffOptions p50;
  p50.percentile = 50.0;
  const auto trimmed = hausdorff(a, b, p50);
  REQUIRE(trimmed.has_value());
  CHECK(*full > *trimmed);
  const auto want_full = hausdorff_reference(a, b, 100.0, 1.0);
  const auto want_p50 = hausdorff_reference(a, b, 50.0, 1.0);
  CHECK(*full == doctest::Approx(*want_full).epsilon(1e-12));
  CHECK(*trimmed == doctest::Approx(*want_p50).epsilon(1e-12));
}

TEST_CASE("hausdorff matches the reference on random masks") {
  Rng rng(137);
  for (int trial = 0; trial < 100; ++trial) {
    const Mask a = random_mask(16, 16, rng.uniform(0.05, 0.3), rng);
    const Mask b = random_mask(16, 16, rng.uniform(0.05, 0.3), rng);
    for (double pct : {100.0, 95.0, 50.0}) {
      HausdorffOptions opt;
      opt.percentile = pct;
      const auto got = hausdorff(a, b, opt);
      const auto want = hausdorff_reference(a, b, pct, 1.0);
      REQUIRE(got.has_value() == want.has_value());
      if (got.has_value()) {
        REQUIRE(*got == doctest::Approx(*want).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("option validation") {
  Mask a(4, 4);
  a.set(1, 1, 1);
  HausdorffOptions opt;
  opt.percentile = 0.0;
  CHECK_THROWS(hausdorff(a, a, opt));
  opt.percentile = 101.0;
  CHECK_THROWS(hausdorff(a, a, opt));
  opt.percentile = 100.0;
  opt.spacing = 0.0;
  CHECK_THROWS(hausdorff(a, a, opt));
}

TEST_CASE("aggregation averages per category and tracks undefined distances") {
  std::vector<MetricRow> rows;
  MetricRow r;
  r.method = "m";
  r.stage = 1;
  r.category = 1;
  r.dice = 0.8;
  r.hd = 2.0;
  rows.push_back(r);
  r.dice = 0.6;
  r.hd = 4.0;
  rows.push_back(r);
  r.category = 2;
  r.dice = 0.5;
  r.hd.reset();
  rows.push_back(r);

  const MetricsSummary s = aggregate(rows);
  REQUIRE(s.per_category.size() == 2);
  CHECK(s.per_category[0].category == 1);
  CHECK(s.per_category[0].count == 2);
  CHECK(s.per_category[0].dice_mean == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(*s.per_category[0].hd_mean == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(s.per_category[0].hd_defined == 2);
  CHECK(s.per_category[1].category == 2);
  CHECK_FALSE(s.per_category[1].hd_mean.has_value());
  CHECK(s.per_category[1].hd_undefined == 1);
  CHECK(s.dice_macro_mean == doctest::Approx((0.7 + 0.5) / 2.0).epsilon(1e-12));
  REQUIRE(s.hd_macro_mean.has_value());
  CHECK(*s.hd_macro_mean == doctest::Approx(3.0).epsilon(1e-12));

  CHECK(aggregate({}).per_category.empty());
}

}  // TEST_SUITE
