// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

namespace wcdnet {

// Dense-CRF mean-field refinement of a binary change mask. Pairwise terms use
// a truncated Gaussian spatial kernel and a truncated bilateral kernel guided
// by an RGB image; message passing is exact within the truncation window and
// checked against a dense brute-force oracle in the tests.
struct CrfParams {
  double spatial_sigma = 3.0;            // px
  double bilateral_sigma_space = 5.0;    // px
  double bilateral_sigma_color = 0.1;    // guide intensity units, guide in [0,1]
  double spatial_weight = 3.0;
  double bilateral_weight = 5.0;
  std::array<double, 4> compatibility = {0, 1, 1, 0};  // row-major 2x2, Potts
  int iterations = 5;
  int kernel_truncation_radius = 10;     // px

  void validate() const {
    if (spatial_sigma <= 0 || bilateral_sigma_space <= 0 || bilateral_sigma_color <= 0)
      throw std::invalid_argument("CrfParams: sigmas must be positive");
    if (iterations < 1)
      throw std::invalid_argument("CrfParams: iterations must be >= 1");
    if (kernel_truncation_radius < 1)
      throw std::invalid_argument("CrfParams: truncation radius must be >= 1");
    const double rec = 2.0 * std::max(spatial_sigma, bilateral_sigma_space);
    if (double(kernel_truncation_radius) < rec)
      std::fprintf(stderr,
                   "warning: CRF truncation radius %d below recommended %.0f "
                   "(2x max sigma)\n",
                   kernel_truncation_radius, std::ceil(rec));
  }
};

// Unary clamp, mirrors the contract: p in [1e-6, 1 - 1e-6].
constexpr double kCrfUnaryClamp = 1e-6;

template <typename T>
struct CrfGrads {
  std::vector<T> mask;
  T spatial_weight = 0, bilateral_weight = 0;
  T spatial_sigma = 0, bilateral_sigma_space = 0, bilateral_sigma_color = 0;
  std::array<T, 4> compatibility = {0, 0, 0, 0};
};

template <typename T>
class MeanFieldCrf {
 public:
  MeanFieldCrf(int height, int width, const CrfParams& params)
      : H_(height), W_(width), P_(params) {
    P_.validate();
  }

  // mask: H*W change probabilities in [0,1]; guide: 3*H*W planar RGB.
  // Returns the refined change-class marginal. Workspace is retained for a
  // following backward() call.
  std::vector<T> refine(const std::vector<T>& mask, const std::vector<T>& guide) {
    const int n = H_ * W_;
    if (int(mask.size()) != n) throw std::invalid_argument("crf: mask size mismatch");
    if (int(guide.size()) != 3 * n) throw std::invalid_argument("crf: guide size mismatch");
    guide_ = guide;
    mask_ = mask;

    bool any_finite = false;
    for (T m : mask) any_finite = any_finite || std::isfinite(double(m));
    if (!any_finite) throw std::invalid_argument("crf: non-normalizable input");

    // unaries: U_l = -log(p_l), clamped
    U_.assign(2 * size_t(n), T(0));
    for (int i = 0; i < n; ++i) {
      const T p1 = clampp(mask[i]);
      const T p0 = clampp(T(1) - mask[i]);
      U_[i] = -std::log(p0);
      U_[n + i] = -std::log(p1);
    }
    precompute_norms();

    Q_.assign(size_t(P_.iterations) + 1, std::vector<T>(2 * size_t(n)));
    S_.assign(P_.iterations, std::vector<T>(2 * size_t(n)));
    B_.assign(P_.iterations, std::vector<T>(2 * size_t(n)));

    // Q0 = softmax(-U)
    softmax2(U_, Q_[0], /*negate=*/true);

    for (int t = 0; t < P_.iterations; ++t) {
      auto& q = Q_[t];
      auto& s = S_[t];
      auto& b = B_[t];
      for (int l = 0; l < 2; ++l) {
        spatial_filter(q.data() + l * n, s.data() + l * n, /*normalized=*/true);
        bilateral_filter(q.data() + l * n, b.data() + l * n, /*normalized=*/true);
      }
      // energy E_l = -(U_l + sum_l' compat[l][l'] * (ws*S_l' + wb*B_l'))
      std::vector<T> e(2 * size_t(n));
      for (int l = 0; l < 2; ++l)
        for (int i = 0; i < n; ++i) {
          T pw = 0;
          for (int m = 0; m < 2; ++m)
            pw += T(P_.compatibility[l * 2 + m]) *
                  (T(P_.spatial_weight) * s[m * n + i] +
                   T(P_.bilateral_weight) * b[m * n + i]);
          e[l * n + i] = U_[l * n + i] + pw;
        }
      softmax2(e, Q_[t + 1], /*negate=*/true);
    }

    std::vector<T> out(n);
    const auto& qf = Q_.back();
    for (int i = 0; i < n; ++i) out[i] = qf[n + i];
    return out;
  }

  // Per-iteration marginals (index 0 is the initialization), for tests.
  const std::vector<std::vector<T>>& iterates() const { return Q_; }

  // g_out: d(loss)/d(refined change marginal). Must follow a refine() call.
  CrfGrads<T> backward(const std::vector<T>& g_out) {
    const int n = H_ * W_;
    if (Q_.empty()) throw std::logic_error("crf: backward before refine");
    CrfGrads<T> g;
    g.mask.assign(n, T(0));
    std::vector<T> gQ(2 * size_t(n), T(0));
    std::vector<T> gU(2 * size_t(n), T(0));
    for (int i = 0; i < n; ++i) gQ[n + i] = g_out[i];

    std::vector<T> gE(2 * size_t(n)), gM(2 * size_t(n)), tmp(size_t(n), T(0));
    for (int t = P_.iterations - 1; t >= 0; --t) {
      const auto& q_next = Q_[t + 1];
      const auto& q = Q_[t];
      const auto& s = S_[t];
      const auto& b = B_[t];
      // softmax backward on E (note Q=softmax(-E), so dE = -softmax_bwd)
      for (int i = 0; i < n; ++i) {
        const T dot = gQ[i] * q_next[i] + gQ[n + i] * q_next[n + i];
        gE[i] = -q_next[i] * (gQ[i] - dot);
        gE[n + i] = -q_next[n + i] * (gQ[n + i] - dot);
      }
      std::fill(gQ.begin(), gQ.end(), T(0));
      for (size_t i = 0; i < gU.size(); ++i) gU[i] += gE[i];
      // pairwise: gE flows through compat and message weights
      std::fill(gM.begin(), gM.end(), T(0));
      for (int l = 0; l < 2; ++l)
        for (int m = 0; m < 2; ++m) {
          T gc = 0;
          for (int i = 0; i < n; ++i) {
            const T msg = T(P_.spatial_weight) * s[m * n + i] +
                          T(P_.bilateral_weight) * b[m * n + i];
            gc += gE[l * n + i] * msg;
            gM[m * n + i] += T(P_.compatibility[l * 2 + m]) * gE[l * n + i];
          }
          g.compatibility[l * 2 + m] += gc;
        }
      for (int l = 0; l < 2; ++l) {
        for (int i = 0; i < n; ++i) {
          g.spatial_weight += gM[l * n + i] * s[l * n + i];
          g.bilateral_weight += gM[l * n + i] * b[l * n + i];
        }
        // adjoint of the normalized filters: divide by the per-pixel
        // normalizer, then apply the plain symmetric kernel
        for (int i = 0; i < n; ++i)
          tmp[i] = T(P_.spatial_weight) * gM[l * n + i] / spatial_norm_[i];
        std::vector<T> acc(n);
        spatial_filter(tmp.data(), acc.data(), /*normalized=*/false);
        for (int i = 0; i < n; ++i) gQ[l * n + i] += acc[i];
        for (int i = 0; i < n; ++i)
          tmp[i] = T(P_.bilateral_weight) * gM[l * n + i] / bilateral_norm_[i];
        bilateral_filter(tmp.data(), acc.data(), /*normalized=*/false);
        for (int i = 0; i < n; ++i) gQ[l * n + i] += acc[i];
        // sigma gradients need the pair loop
        accumulate_sigma_grads(q.data() + l * n, s.data() + l * n,
                               b.data() + l * n, gM.data() + l * n,
                               T(P_.spatial_weight), T(P_.bilateral_weight), g);
      }
    }
    // initialization Q0 = softmax(-U)
    const auto& q0 = Q_[0];
    for (int i = 0; i < n; ++i) {
      const T dot = gQ[i] * q0[i] + gQ[n + i] * q0[n + i];
      gU[i] += -q0[i] * (gQ[i] - dot);
      gU[n + i] += -q0[n + i] * (gQ[n + i] - dot);
    }
    // unaries back to the input mask (clamp kills the gradient outside range)
    for (int i = 0; i < n; ++i) {
      const T p1 = mask_[i], p0 = T(1) - mask_[i];
      if (p1 > T(kCrfUnaryClamp) && p1 < T(1 - kCrfUnaryClamp))
        g.mask[i] += -gU[n + i] / p1;
      if (p0 > T(kCrfUnaryClamp) && p0 < T(1 - kCrfUnaryClamp))
        g.mask[i] += gU[i] / p0;
    }
    return g;
  }

 private:
  T clampp(T p) const {
    return std::min(T(1 - kCrfUnaryClamp), std::max(T(kCrfUnaryClamp), p));
  }

  void softmax2(const std::vector<T>& e, std::vector<T>& q, bool negate) {
    const int n = H_ * W_;
    const T sgn = negate ? T(-1) : T(1);
    for (int i = 0; i < n; ++i) {
      const T a = sgn * e[i], b = sgn * e[n + i];
      const T m = std::max(a, b);
      const T ea = std::exp(a - m), eb = std::exp(b - m);
      q[i] = ea / (ea + eb);
      q[n + i] = eb / (ea + eb);
    }
  }

  template <typename F>
  void for_each_neighbor(int y, int x, F&& f) const {
    const int R = P_.kernel_truncation_radius;
    for (int dy = -R; dy <= R; ++dy) {
      const int ny = y + dy;
      if (ny < 0 || ny >= H_) continue;
      for (int dx = -R; dx <= R; ++dx) {
        if (dy == 0 && dx == 0) continue;  // i != j
        const int nx = x + dx;
        if (nx < 0 || nx >= W_) continue;
        f(ny, nx, dy, dx);
      }
    }
  }

  T spatial_kernel(int dy, int dx) const {
    const T d2 = T(dy * dy + dx * dx);
    return std::exp(-d2 / (T(2) * T(P_.spatial_sigma) * T(P_.spatial_sigma)));
  }

  T bilateral_kernel(int i, int j, int dy, int dx) const {
    const int n = H_ * W_;
    const T d2 = T(dy * dy + dx * dx);
    T c2 = 0;
    for (int ch = 0; ch < 3; ++ch) {
      const T dc = guide_[ch * n + i] - guide_[ch * n + j];
      c2 += dc * dc;
    }
    const T ss = T(P_.bilateral_sigma_space), sc = T(P_.bilateral_sigma_color);
    return std::exp(-d2 / (T(2) * ss * ss) - c2 / (T(2) * sc * sc));
  }

  void precompute_norms() {
    const int n = H_ * W_;
    spatial_norm_.assign(n, T(0));
    bilateral_norm_.assign(n, T(0));
    for (int y = 0; y < H_; ++y)
      for (int x = 0; x < W_; ++x) {
        const int i = y * W_ + x;
        T ns = 0, nb = 0;
        for_each_neighbor(y, x, [&](int ny, int nx, int dy, int dx) {
          const int j = ny * W_ + nx;
          ns += spatial_kernel(dy, dx);
          nb += bilateral_kernel(i, j, dy, dx);
        });
        // isolated pixel (radius window empty only for 1x1 images)
        spatial_norm_[i] = ns > 0 ? ns : T(1);
        bilateral_norm_[i] = nb > 0 ? nb : T(1);
      }
  }

  void spatial_filter(const T* src, T* dst, bool normalized) const {
    for (int y = 0; y < H_; ++y)
      for (int x = 0; x < W_; ++x) {
        const int i = y * W_ + x;
        T acc = 0;
        for_each_neighbor(y, x, [&](int ny, int nx, int dy, int dx) {
          acc += spatial_kernel(dy, dx) * src[ny * W_ + nx];
        });
        dst[i] = normalized ? acc / spatial_norm_[i] : acc;
      }
  }

  void bilateral_filter(const T* src, T* dst, bool normalized) const {
    for (int y = 0; y < H_; ++y)
      for (int x = 0; x < W_; ++x) {
        const int i = y * W_ + x;
        T acc = 0;
        for_each_neighbor(y, x, [&](int ny, int nx, int dy, int dx) {
          acc += bilateral_kernel(i, ny * W_ + nx, dy, dx) * src[ny * W_ + nx];
        });
        dst[i] = normalized ? acc / bilateral_norm_[i] : acc;
      }
  }

  // d(filter_i)/d(sigma) = (1/n_i) * sum_j dk_ij * (q_j - filter_i); the
  // normalizer derivative folds into the -filter_i term.
  void accumulate_sigma_grads(const T* q, const T* s, const T* b, const T* gm,
                              T ws, T wb, CrfGrads<T>& g) const {
    const int n = H_ * W_;
    const T ssig = T(P_.spatial_sigma);
    const T bss = T(P_.bilateral_sigma_space), bsc = T(P_.bilateral_sigma_color);
    for (int y = 0; y < H_; ++y)
      for (int x = 0; x < W_; ++x) {
        const int i = y * W_ + x;
        T acc_s = 0, acc_bs = 0, acc_bc = 0;
        for_each_neighbor(y, x, [&](int ny, int nx, int dy, int dx) {
          const int j = ny * W_ + nx;
          const T d2 = T(dy * dy + dx * dx);
          const T ks = spatial_kernel(dy, dx);
          acc_s += ks * (d2 / (ssig * ssig * ssig)) * (q[j] - s[i]);
          const T kb = bilateral_kernel(i, j, dy, dx);
          T c2 = 0;
          for (int ch = 0; ch < 3; ++ch) {
            const T dc = guide_[ch * n + i] - guide_[ch * n + j];
            c2 += dc * dc;
          }
          acc_bs += kb * (d2 / (bss * bss * bss)) * (q[j] - b[i]);
          acc_bc += kb * (c2 / (bsc * bsc * bsc)) * (q[j] - b[i]);
        });
        g.spatial_sigma += gm[i] * ws * acc_s / spatial_norm_[i];
        g.bilateral_sigma_space += gm[i] * wb * acc_bs / bilateral_norm_[i];
        g.bilateral_sigma_color += gm[i] * wb * acc_bc / bilateral_norm_[i];
      }
  }

  int H_, W_;
  CrfParams P_;
  std::vector<T> guide_, mask_, U_;
  std::vector<T> spatial_norm_, bilateral_norm_;
  std::vector<std::vector<T>> Q_, S_, B_;
};

// Non-learned post-processing pass (Table-style "CRF as post-processing"):
// same engine, parameters fixed.
template <typename T>
std::vector<T> postprocess_crf(const std::vector<T>& mask,
                               const std::vector<T>& guide, int height,
                               int width, const CrfParams& params) {
  MeanFieldCrf<T> crf(height, width, params);
  return crf.refine(mask, guide);
}

}  // namespace wcdnet
