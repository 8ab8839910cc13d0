// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#include "wcdnet/report.h"

#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace wcdnet {
namespace {
constexpr int kGap = 2;  // white separator between panel cells

void blit(Image& dst, const Image& src, int x0) {
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x)
        dst.at(c, y, x0 + x) = src.channels == 3 ? src.at(c, y, x) : src.at(0, y, x);
}

Image mask_to_image(const std::vector<uint8_t>* mask, int h, int w) {
  Image out(h, w, 3);
  if (!mask) return out;  // black placeholder
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float v = (*mask)[size_t(y) * w + x] ? 1.f : 0.f;
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = v;
    }
  return out;
}
}  // namespace

Image make_panel(const Image& prev, const Image& curr,
                 const std::vector<uint8_t>& pred_mask,
                 const std::vector<uint8_t>* gt_mask, int height, int width) {
  Image out(height, 4 * width + 3 * kGap, 3);
  for (auto& v : out.v) v = 1.f;  // gaps render white
  blit(out, prev, 0);
  blit(out, curr, width + kGap);
  blit(out, mask_to_image(&pred_mask, height, width), 2 * (width + kGap));
  blit(out, mask_to_image(gt_mask, height, width), 3 * (width + kGap));
  return out;
}

MetricsReport write_report(Model& model, const DatasetManifest& split,
                           const ClassMapping& mapping,
                           const std::string& out_dir, int panel_count) {
  fs::create_directories(out_dir);
  MetricsReport report = evaluate(model, split, mapping);
  std::ofstream((fs::path(out_dir) / "metrics.json").string())
      << report.to_json() << "\n";
  std::ofstream((fs::path(out_dir) / "metrics.csv").string())
      << MetricsReport::csv_header() << "\n"
      << report.csv_row() << "\n";

  const fs::path panel_dir = fs::path(out_dir) / "panels";
  fs::create_directories(panel_dir);
  const auto& mc = model.config();
  const int n = std::min<int>(panel_count, int(split.entries.size()));
  for (int i = 0; i < n; ++i) {
    ImagePair pair = load_pair(split, size_t(i), mc.input_height, mc.input_width);
    ModelOutput o = model.predict_pair(pair);
    Image panel = make_panel(pair.prev, pair.curr, o.binary_mask,
                             pair.mask ? &*pair.mask : nullptr,
                             mc.input_height, mc.input_width);
    save_image_rgb(panel,
                   (panel_dir / (split.entries[size_t(i)].pair_id + ".png")).string());
  }
  return report;
}

}  // namespace wcdnet
