// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#include "wcdnet/image.h"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <stdexcept>

namespace wcdnet {

Image load_image_rgb(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty())
    throw std::runtime_error("failed to load image: " + path);
  Image img(bgr.rows, bgr.cols, 3);
  for (int y = 0; y < bgr.rows; ++y)
    for (int x = 0; x < bgr.cols; ++x) {
      const auto px = bgr.at<cv::Vec3b>(y, x);
      img.at(0, y, x) = px[2] / 255.f;
      img.at(1, y, x) = px[1] / 255.f;
      img.at(2, y, x) = px[0] / 255.f;
    }
  return img;
}

void save_image_rgb(const Image& img, const std::string& path) {
  if (img.channels != 3) throw std::invalid_argument("save_image_rgb: need 3 channels");
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      auto clamp8 = [](float v) {
        return uint8_t(std::min(255.f, std::max(0.f, v * 255.f + 0.5f)));
      };
      bgr.at<cv::Vec3b>(y, x) =
          cv::Vec3b(clamp8(img.at(2, y, x)), clamp8(img.at(1, y, x)),
                    clamp8(img.at(0, y, x)));
    }
  if (!cv::imwrite(path, bgr))
    throw std::runtime_error("failed to write image: " + path);
}

std::vector<uint8_t> load_mask(const std::string& path, int* height, int* width) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw std::runtime_error("failed to load mask: " + path);
  std::vector<uint8_t> out(size_t(m.rows) * m.cols);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      const uint8_t v = m.at<uint8_t>(y, x);
      if (v != 0 && v != 255)
        throw std::runtime_error("non-binary mask value " + std::to_string(v) +
                                 " in " + path);
      out[size_t(y) * m.cols + x] = v ? 1 : 0;
    }
  *height = m.rows;
  *width = m.cols;
  return out;
}

void save_mask(const std::vector<uint8_t>& mask, int height, int width,
               const std::string& path) {
  cv::Mat m(height, width, CV_8UC1);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      m.at<uint8_t>(y, x) = mask[size_t(y) * width + x] ? 255 : 0;
  if (!cv::imwrite(path, m))
    throw std::runtime_error("failed to write mask: " + path);
}

void save_soft_mask(const std::vector<float>& mask, int height, int width,
                    const std::string& path) {
  cv::Mat m(height, width, CV_8UC1);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const float v = std::min(1.f, std::max(0.f, mask[size_t(y) * width + x]));
      m.at<uint8_t>(y, x) = uint8_t(v * 255.f + 0.5f);
    }
  if (!cv::imwrite(path, m))
    throw std::runtime_error("failed to write mask: " + path);
}

Image resize_bilinear(const Image& img, int height, int width) {
  Image out(height, width, img.channels);
  cv::Mat src(img.height, img.width, CV_32FC1), dst;
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) src.at<float>(y, x) = img.at(c, y, x);
    cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(c, y, x) = dst.at<float>(y, x);
  }
  return out;
}

std::vector<uint8_t> resize_mask_nearest(const std::vector<uint8_t>& mask,
                                         int in_h, int in_w, int out_h,
                                         int out_w) {
  cv::Mat src(in_h, in_w, CV_8UC1), dst;
  for (int y = 0; y < in_h; ++y)
    for (int x = 0; x < in_w; ++x) src.at<uint8_t>(y, x) = mask[size_t(y) * in_w + x];
  cv::resize(src, dst, cv::Size(out_w, out_h), 0, 0, cv::INTER_NEAREST);
  std::vector<uint8_t> out(size_t(out_h) * out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) out[size_t(y) * out_w + x] = dst.at<uint8_t>(y, x);
  return out;
}

}  // namespace wcdnet
