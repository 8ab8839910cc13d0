// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace wcdnet {

using real = float;

/// Dense n-dimensional array, row-major. Conv feature maps use (N, C, H, W),
/// dense activations (N, D).
struct Tensor {
  std::vector<int> shape;
  std::vector<real> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(static_cast<size_t>(count(shape)), real(0));
  }

  static int64_t count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("negative tensor dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<int> s, real value) {
    Tensor t(std::move(s));
    std::fill(t.v.begin(), t.v.end(), value);
    return t;
  }

  static Tensor from(std::vector<int> s, std::vector<real> data) {
    Tensor t;
    t.shape = std::move(s);
    if (static_cast<int64_t>(data.size()) != count(t.shape))
      throw std::invalid_argument("tensor data size does not match shape");
    t.v = std::move(data);
    return t;
  }

  int64_t size() const { return static_cast<int64_t>(v.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<size_t>(i)); }

  real* data() { return v.data(); }
  const real* data() const { return v.data(); }

  real& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
  real operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

  // (N,C,H,W) accessor
  real& at(int n, int c, int h, int w) {
    return v[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  real at(int n, int c, int h, int w) const {
    return v[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(real x) { std::fill(v.begin(), v.end(), x); }
};

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

}  // namespace wcdnet
