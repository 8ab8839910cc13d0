// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace wcdnet {

/// Planar (C,H,W) float image, values in [0,1], RGB channel order.
struct Image {
  int height = 0, width = 0, channels = 0;
  std::vector<float> v;

  Image() = default;
  Image(int h, int w, int c)
      : height(h), width(w), channels(c),
        v(size_t(h) * size_t(w) * size_t(c), 0.f) {}

  float& at(int c, int y, int x) {
    return v[(size_t(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return v[(size_t(c) * height + y) * width + x];
  }
};

Image load_image_rgb(const std::string& path);
void save_image_rgb(const Image& img, const std::string& path);

// Binary masks are stored as single-channel PNG with values in {0, 255};
// anything else is rejected. In memory they are {0,1}.
std::vector<uint8_t> load_mask(const std::string& path, int* height, int* width);
void save_mask(const std::vector<uint8_t>& mask, int height, int width,
               const std::string& path);

// Soft masks round-trip through 8-bit grayscale.
void save_soft_mask(const std::vector<float>& mask, int height, int width,
                    const std::string& path);

Image resize_bilinear(const Image& img, int height, int width);
std::vector<uint8_t> resize_mask_nearest(const std::vector<uint8_t>& mask,
                                         int in_h, int in_w, int out_h,
                                         int out_w);

}  // namespace wcdnet
