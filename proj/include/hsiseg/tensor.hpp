#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsiseg/rng.hpp"

namespace hsiseg {

// Dense double-precision tensor in NCHW layout.  Everything numerical in the
// project (activations, weights, gradients) lives in this one type; the sizes
// involved are small enough that double precision everywhere is the simpler
// and safer choice.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<size_t>(n_) * c_ * h_ * w_, 0.0) {
    if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0) {
      throw std::invalid_argument("Tensor: negative dimension");
    }
  }

  size_t size() const { return v.size(); }
  size_t plane() const { return static_cast<size_t>(h) * w; }

  double* chan(int i, int j) {
    return v.data() + (static_cast<size_t>(i) * c + j) * plane();
  }
  const double* chan(int i, int j) const {
    return v.data() + (static_cast<size_t>(i) * c + j) * plane();
  }

  double& at(int i, int j, int y, int x) { return chan(i, j)[static_cast<size_t>(y) * w + x]; }
  double at(int i, int j, int y, int x) const { return chan(i, j)[static_cast<size_t>(y) * w + x]; }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  bool all_finite() const {
    for (double x : v) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  std::string shape_str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + "]";
  }
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.n, t.c, t.h, t.w); }

enum class Mode { Train, Eval };

inline void fill_normal(Tensor& t, Rng& rng, double stddev) {
  for (double& x : t.v) x = rng.normal() * stddev;
}

// Integer label maps, one plane per sample (N x H x W).  Category ids are
// small non-negative integers; -1 marks "no label" pixels.
struct IntTensor {
  int n = 0, h = 0, w = 0;
  std::vector<int32_t> v;

  IntTensor() = default;
  IntTensor(int n_, int h_, int w_)
      : n(n_), h(h_), w(w_), v(static_cast<size_t>(n_) * h_ * w_, 0) {}

  size_t plane() const { return static_cast<size_t>(h) * w; }
  int32_t* sample(int i) { return v.data() + static_cast<size_t>(i) * plane(); }
  const int32_t* sample(int i) const { return v.data() + static_cast<size_t>(i) * plane(); }
  int32_t& at(int i, int y, int x) { return sample(i)[static_cast<size_t>(y) * w + x]; }
  int32_t at(int i, int y, int x) const { return sample(i)[static_cast<size_t>(y) * w + x]; }
};

}  // namespace hsiseg
