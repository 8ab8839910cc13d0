// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace wcdnet {

// Remapping of a raw change mask: min-max normalize over the sample, scale
// into [-alpha/2, alpha/2] and squash with a sigmoid. If all entries are
// equal the normalized map is defined as 0, so the output is 0.5 everywhere
// and the gradient through that branch is 0.
//
// Templated so the same code runs inside the float graph and in
// double-precision gradient checks.

template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
struct RemapContext {
  std::ptrdiff_t argmin = 0;  // first occurrence
  std::ptrdiff_t argmax = 0;
  T range = T(0);
  bool degenerate = true;
};

template <typename T>
RemapContext<T> remap_forward(const T* x, std::ptrdiff_t n, T alpha, T* y) {
  if (n <= 0) throw std::invalid_argument("remap: empty input");
  if (alpha <= T(0)) throw std::invalid_argument("remap: alpha must be positive");
  RemapContext<T> ctx;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i])) throw std::invalid_argument("remap: non-finite input");
    if (x[i] < x[ctx.argmin]) ctx.argmin = i;
    if (x[i] > x[ctx.argmax]) ctx.argmax = i;
  }
  const T lo = x[ctx.argmin], hi = x[ctx.argmax];
  ctx.range = hi - lo;
  ctx.degenerate = !(ctx.range > T(0));
  if (ctx.degenerate) {
    for (std::ptrdiff_t i = 0; i < n; ++i) y[i] = T(0.5);
    return ctx;
  }
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const T mapped = (x[i] - lo) / ctx.range * alpha - alpha / T(2);
    y[i] = sigmoid(mapped);
  }
  return ctx;
}

// Accumulates d(loss)/d(x) into gx (+=). min/max are treated as selections,
// so their gradient routes to the first argmin/argmax element.
template <typename T>
void remap_backward(const T* x, std::ptrdiff_t n, T alpha,
                    const RemapContext<T>& ctx, const T* y, const T* gy,
                    T* gx) {
  if (ctx.degenerate) return;
  const T lo = x[ctx.argmin];
  const T inv_r = T(1) / ctx.range;
  T sum_gs = T(0);   // sum_i gy_i * sig'_i
  T sum_gsu = T(0);  // sum_i gy_i * sig'_i * u_i
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const T s = y[i] * (T(1) - y[i]);
    const T u = (x[i] - lo) * inv_r;
    gx[i] += alpha * gy[i] * s * inv_r;
    sum_gs += gy[i] * s;
    sum_gsu += gy[i] * s * u;
  }
  gx[ctx.argmin] += alpha * inv_r * (sum_gsu - sum_gs);
  gx[ctx.argmax] -= alpha * inv_r * sum_gsu;
}

template <typename T>
std::vector<T> remap(const std::vector<T>& raw, T alpha) {
  std::vector<T> out(raw.size());
  remap_forward(raw.data(), static_cast<std::ptrdiff_t>(raw.size()), alpha,
                out.data());
  return out;
}

}  // namespace wcdnet
