// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "wcdnet/crf.h"

using namespace wcdnet;

namespace {

double urand(std::mt19937_64& g) { return double(g() >> 11) * 0x1.0p-53; }

std::vector<double> random_mask(std::mt19937_64& g, int n) {
  std::vector<double> m(size_t(n), 0.0);
  for (auto& v : m) v = 0.05 + 0.9 * urand(g);
  return m;
}

std::vector<double> random_guide(std::mt19937_64& g, int n) {
  std::vector<double> gu(size_t(3 * n), 0.0);
  for (auto& v : gu) v = urand(g);
  return gu;
}

// Brute-force mean-field with *dense* (untruncated) kernels, written
// independently from the formulas in the module contract.
std::vector<double> dense_mean_field(const std::vector<double>& mask,
                                     const std::vector<double>& guide, int h,
                                     int w, const CrfParams& p) {
  const int n = h * w;
  auto clampp = [](double v) {
    return std::clamp(v, kCrfUnaryClamp, 1.0 - kCrfUnaryClamp);
  };
  std::vector<double> U(size_t(2 * n), 0.0);
  for (int i = 0; i < n; ++i) {
    U[size_t(i)] = -std::log(clampp(1.0 - mask[size_t(i)]));  // class 0
    U[size_t(n + i)] = -std::log(clampp(mask[size_t(i)]));    // class 1
  }
  std::vector<double> q(size_t(2 * n), 0.0);
  for (int i = 0; i < n; ++i) {
    const double e0 = std::exp(-U[size_t(i)]), e1 = std::exp(-U[size_t(n + i)]);
    q[size_t(i)] = e0 / (e0 + e1);
    q[size_t(n + i)] = e1 / (e0 + e1);
  }
  for (int it = 0; it < p.iterations; ++it) {
    std::vector<double> s(size_t(2 * n), 0.0), b(size_t(2 * n), 0.0);
    for (int l = 0; l < 2; ++l)
      for (int yi = 0; yi < h; ++yi)
        for (int xi = 0; xi < w; ++xi) {
          const int i = yi * w + xi;
          double acc_s = 0, ns = 0, acc_b = 0, nb = 0;
          for (int yj = 0; yj < h; ++yj)
            for (int xj = 0; xj < w; ++xj) {
              const int j = yj * w + xj;
              if (j == i) continue;  // exclude center
              const double d2 = double((yi - yj) * (yi - yj) +
                                       (xi - xj) * (xi - xj));
              const double ks =
                  std::exp(-d2 / (2 * p.spatial_sigma * p.spatial_sigma));
              double c2 = 0;
              for (int ch = 0; ch < 3; ++ch) {
                const double dc = guide[size_t(ch * n + i)] -
                                  guide[size_t(ch * n + j)];
                c2 += dc * dc;
              }
              const double kb =
                  std::exp(-d2 / (2 * p.bilateral_sigma_space *
                                  p.bilateral_sigma_space) -
                           c2 / (2 * p.bilateral_sigma_color *
                                 p.bilateral_sigma_color));
              acc_s += ks * q[size_t(l * n + j)];
              ns += ks;
              acc_b += kb * q[size_t(l * n + j)];
              nb += kb;
            }
          s[size_t(l * n + i)] = ns > 0 ? acc_s / ns : 0.0;
          b[size_t(l * n + i)] = nb > 0 ? acc_b / nb : 0.0;
        }
    for (int i = 0; i < n; ++i) {
      double e[2];
      for (int l = 0; l < 2; ++l) {
        double pw = 0;
        for (int m = 0; m < 2; ++m)
          pw += p.compatibility[size_t(l * 2 + m)] *
                (p.spatial_weight * s[size_t(m * n + i)] +
                 p.bilateral_weight * b[size_t(m * n + i)]);
        e[l] = U[size_t(l * n + i)] + pw;
      }
      const double m0 = std::exp(-e[0]), m1 = std::exp(-e[1]);
      q[size_t(i)] = m0 / (m0 + m1);
      q[size_t(n + i)] = m1 / (m0 + m1);
    }
  }
  return std::vector<double>(q.begin() + n, q.end());
}

}  // namespace

TEST_CASE("zero pairwise weights reduce to the renormalized unary") {
  CrfParams p;
  p.iterations = 1;
  p.spatial_weight = 0;
  p.bilateral_weight = 0;
  p.kernel_truncation_radius = 10;
  std::mt19937_64 g(5);
  const int h = 8, w = 8;
  auto mask = random_mask(g, h * w);
  auto guide = random_guide(g, h * w);
  MeanFieldCrf<double> crf(h, w, p);
  auto out = crf.refine(mask, guide);
  for (int i = 0; i < h * w; ++i)
    CHECK(out[size_t(i)] == doctest::Approx(mask[size_t(i)]).epsilon(1e-9));
}

TEST_CASE("uniform mask on uniform image is a fixed point") {
  CrfParams p;
  const int h = 8, w = 8;
  std::vector<double> mask(size_t(h * w), 0.5), guide(size_t(3 * h * w), 0.3);
  MeanFieldCrf<double> crf(h, w, p);
  auto out = crf.refine(mask, guide);
  for (double v : out) CHECK(v == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("marginals normalized at every iteration") {
  CrfParams p;
  p.iterations = 5;
  std::mt19937_64 g(17);
  const int h = 12, w = 12, n = h * w;
  MeanFieldCrf<double> crf(h, w, p);
  crf.refine(random_mask(g, n), random_guide(g, n));
  for (const auto& q : crf.iterates())
    for (int i = 0; i < n; ++i)
      CHECK(q[size_t(i)] + q[size_t(n + i)] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("truncated filtering equals the dense oracle at full radius") {
  CrfParams p;
  p.iterations = 3;
  p.kernel_truncation_radius = 32;  // >= 16x16 diameter: nothing truncated
  std::mt19937_64 g(23);
  const int h = 16, w = 16;
  auto mask = random_mask(g, h * w);
  auto guide = random_guide(g, h * w);
  MeanFieldCrf<double> crf(h, w, p);
  auto out = crf.refine(mask, guide);
  auto oracle = dense_mean_field(mask, guide, h, w, p);
  for (size_t i = 0; i < out.size(); ++i)
    CHECK(std::abs(out[i] - oracle[i]) < 1e-6);
}

TEST_CASE("single-pixel holes in a step mask get filled") {
  const int h = 32, w = 32, n = h * w;
  // two-region image: left dark, right bright; change on the right
  std::vector<double> guide(size_t(3 * n), 0.0);
  std::vector<double> clean(size_t(n), 0.0), noisy(size_t(n), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int i = y * w + x;
      const double bright = x >= w / 2 ? 0.9 : 0.1;
      for (int c = 0; c < 3; ++c) guide[size_t(c * n + i)] = bright;
      // mean-field refinement sharpens marginals towards 0/1, so the
      // reference is the binary step; the input is its soft version
      clean[size_t(i)] = x >= w / 2 ? 1.0 : 0.0;
      noisy[size_t(i)] = x >= w / 2 ? 0.9 : 0.1;
    }
  // punch single-pixel holes into the changed region
  for (int k = 0; k < 8; ++k)
    noisy[size_t((4 + 3 * k) * w + w / 2 + 2 + k)] = 0.1;
  CrfParams p;
  MeanFieldCrf<double> crf(h, w, p);
  auto refined = crf.refine(noisy, guide);
  double l1_before = 0, l1_after = 0;
  for (int i = 0; i < n; ++i) {
    l1_before += std::abs(noisy[size_t(i)] - clean[size_t(i)]);
    l1_after += std::abs(refined[size_t(i)] - clean[size_t(i)]);
  }
  CHECK(l1_after < l1_before);
}

TEST_CASE("50 repeated applications stay finite") {
  CrfParams p;
  p.iterations = 50;
  std::mt19937_64 g(31);
  const int h = 8, w = 8;
  MeanFieldCrf<double> crf(h, w, p);
  auto out = crf.refine(random_mask(g, h * w), random_guide(g, h * w));
  for (double v : out) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("parameter validation") {
  CrfParams p;
  p.spatial_sigma = 0;
  CHECK_THROWS(p.validate());
  p = CrfParams{};
  p.iterations = 0;
  CHECK_THROWS(p.validate());
  p = CrfParams{};
  p.kernel_truncation_radius = 0;
  CHECK_THROWS(p.validate());
}

TEST_CASE("gradients match finite differences (12x12, 2 iterations)") {
  CrfParams p;
  p.iterations = 2;
  p.kernel_truncation_radius = 10;
  std::mt19937_64 g(77);
  const int h = 12, w = 12, n = h * w;
  auto mask = random_mask(g, n);
  auto guide = random_guide(g, n);
  std::vector<double> gy(size_t(n), 0.0);
  for (auto& v : gy) v = urand(g) * 2 - 1;

  auto loss_with = [&](const std::vector<double>& m, const CrfParams& pp) {
    MeanFieldCrf<double> crf(h, w, pp);
    auto out = crf.refine(m, guide);
    double s = 0;
    for (int i = 0; i < n; ++i) s += gy[size_t(i)] * out[size_t(i)];
    return s;
  };

  MeanFieldCrf<double> crf(h, w, p);
  crf.refine(mask, guide);
  CrfGrads<double> grads = crf.backward(gy);

  auto check_rel = [](double fd, double an) {
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
    CHECK(std::abs(fd - an) / denom < 1e-3);
  };

  // d/d mask on a subsample of pixels
  const double h_m = 1e-6;
  for (int i = 0; i < n; i += 17) {
    auto mp = mask, mm = mask;
    mp[size_t(i)] += h_m;
    mm[size_t(i)] -= h_m;
    check_rel((loss_with(mp, p) - loss_with(mm, p)) / (2 * h_m),
              grads.mask[size_t(i)]);
  }
  // scalar parameters
  auto fd_param = [&](auto setter) {
    const double hp = 1e-5;
    CrfParams pp = p, pm = p;
    setter(pp, hp);
    setter(pm, -hp);
    return (loss_with(mask, pp) - loss_with(mask, pm)) / (2 * hp);
  };
  check_rel(fd_param([](CrfParams& q, double d) { q.spatial_weight += d; }),
            grads.spatial_weight);
  check_rel(fd_param([](CrfParams& q, double d) { q.bilateral_weight += d; }),
            grads.bilateral_weight);
  check_rel(fd_param([](CrfParams& q, double d) { q.spatial_sigma += d; }),
            grads.spatial_sigma);
  check_rel(
      fd_param([](CrfParams& q, double d) { q.bilateral_sigma_space += d; }),
      grads.bilateral_sigma_space);
  check_rel(
      fd_param([](CrfParams& q, double d) { q.bilateral_sigma_color += d; }),
      grads.bilateral_sigma_color);
  for (int k = 0; k < 4; ++k)
    check_rel(fd_param([k](CrfParams& q, double d) {
                q.compatibility[size_t(k)] += d;
              }),
              grads.compatibility[size_t(k)]);
}

TEST_CASE("postprocess delegates to the shared engine") {
  CrfParams p;
  std::mt19937_64 g(9);
  const int h = 8, w = 8;
  auto mask = random_mask(g, h * w);
  auto guide = random_guide(g, h * w);
  MeanFieldCrf<double> crf(h, w, p);
  auto a = crf.refine(mask, guide);
  auto b = postprocess_crf(mask, guide, h, w, p);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  for (double v : b) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}
