// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#include "wcdnet/data.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <opencv2/imgcodecs.hpp>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace wcdnet {

bool DatasetManifest::operator==(const DatasetManifest& o) const {
  if (label_names != o.label_names || unchanged_label_id != o.unchanged_label_id ||
      entries.size() != o.entries.size())
    return false;
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto& a = entries[i];
    const auto& b = o.entries[i];
    if (a.pair_id != b.pair_id || a.prev_path != b.prev_path ||
        a.curr_path != b.curr_path || a.label_id != b.label_id ||
        a.mask_path != b.mask_path)
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// synthetic generation

namespace {

// Thin wrapper so generated bytes do not depend on libstdc++ distribution
// internals, only on the mt19937_64 stream itself.
struct Rng {
  std::mt19937_64 g;
  explicit Rng(uint64_t seed) : g(seed) {}
  double uniform(double a, double b) {
    return a + (b - a) * double(g() >> 11) * 0x1.0p-53;
  }
  int uniform_int(int lo, int hi) {  // inclusive
    return lo + int(g() % uint64_t(hi - lo + 1));
  }
};

// The class of a changed pair is decided by the inserted object's color; its
// shape is drawn independently. With shape uninformative, recognizing the
// class requires looking at the object's pixels, so a weakly supervised
// change mask cannot get away with highlighting the complement of the object.
const char* kColorNames[] = {"red", "green", "blue", "yellow", "purple"};
const float kPalette[][3] = {{0.85f, 0.25f, 0.25f},
                             {0.25f, 0.80f, 0.30f},
                             {0.25f, 0.35f, 0.85f},
                             {0.85f, 0.80f, 0.30f},
                             {0.75f, 0.30f, 0.80f}};

bool shape_contains(int shape, int dy, int dx, int r) {
  switch (shape % 5) {
    case 0:  // disc
      return dy * dy + dx * dx <= r * r;
    case 1:  // square
      return std::abs(dy) <= r * 9 / 10 && std::abs(dx) <= r * 9 / 10;
    case 2:  // triangle, apex up
      return dy >= -r && dy <= r && 2 * std::abs(dx) <= dy + r;
    case 3:  // diamond
      return std::abs(dy) + std::abs(dx) <= r;
    default:  // ring
      return 4 * (dy * dy + dx * dx) >= r * r && dy * dy + dx * dx <= r * r;
  }
}

Image textured_background(Rng& rng, int size) {
  constexpr int G = 5;  // coarse value-noise grid
  float grid[3][G][G];
  for (int c = 0; c < 3; ++c)
    for (int gy = 0; gy < G; ++gy)
      for (int gx = 0; gx < G; ++gx)
        grid[c][gy][gx] = float(rng.uniform(0.30, 0.70));
  Image img(size, size, 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const float fy = float(y) * (G - 1) / float(size - 1);
        const float fx = float(x) * (G - 1) / float(size - 1);
        const int y0 = std::min(int(fy), G - 2), x0 = std::min(int(fx), G - 2);
        const float ty = fy - y0, tx = fx - x0;
        const float v = grid[c][y0][x0] * (1 - ty) * (1 - tx) +
                        grid[c][y0 + 1][x0] * ty * (1 - tx) +
                        grid[c][y0][x0 + 1] * (1 - ty) * tx +
                        grid[c][y0 + 1][x0 + 1] * ty * tx;
        img.at(c, y, x) = v;
      }
  for (auto& v : img.v) v += float(rng.uniform(-0.02, 0.02));
  return img;
}

void clamp_image(Image& img) {
  for (auto& v : img.v) v = std::min(0.98f, std::max(0.02f, v));
}

std::string pair_name(int idx) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "pair_%05d", idx);
  return buf;
}

}  // namespace

DatasetManifest generate_synthetic(const SyntheticSpec& spec,
                                   const std::string& out_dir) {
  if (spec.num_change_classes < 1)
    throw std::invalid_argument("generate_synthetic: need at least one change class");
  if (spec.unchanged_fraction < 0 || spec.unchanged_fraction >= 1)
    throw std::invalid_argument("generate_synthetic: unchanged_fraction must be in [0,1)");
  if (spec.num_pairs < 1 || spec.image_size < 16)
    throw std::invalid_argument("generate_synthetic: invalid size");

  fs::create_directories(fs::path(out_dir) / "prev");
  fs::create_directories(fs::path(out_dir) / "curr");
  fs::create_directories(fs::path(out_dir) / "masks");

  DatasetManifest m;
  m.root = out_dir;
  m.unchanged_label_id = 0;
  m.label_names[0] = "unchanged";
  for (int k = 1; k <= spec.num_change_classes; ++k)
    m.label_names[k] = kColorNames[(k - 1) % 5] + std::string("_") + std::to_string(k);

  const int S = spec.image_size;
  const int64_t n_unchanged = llround(spec.unchanged_fraction * spec.num_pairs);

  for (int idx = 0; idx < spec.num_pairs; ++idx) {
    Rng rng(spec.seed * 0x9E3779B97F4A7C15ULL + uint64_t(idx) + 1);
    // Bresenham spread gives exactly n_unchanged unchanged pairs.
    const bool unchanged =
        (int64_t(idx + 1) * n_unchanged) / spec.num_pairs >
        (int64_t(idx) * n_unchanged) / spec.num_pairs;

    Image bg = textured_background(rng, S);
    // colored shapes shared by both images: not change, but they occupy the
    // same palette as the change classes, so a mask that fails to select the
    // changed object feeds the classifier an ambiguous color mix
    for (int d = 0; d < spec.colored_distractor_count; ++d) {
      const int shape = rng.uniform_int(0, 4);
      const int r = rng.uniform_int(S / 10, S / 6);
      const int cy = rng.uniform_int(r + 1, S - r - 2);
      const int cx = rng.uniform_int(r + 1, S - r - 2);
      const int pal = rng.uniform_int(0, 4);
      float color[3];
      for (int c = 0; c < 3; ++c)
        color[c] = kPalette[pal][c] + float(rng.uniform(-0.08, 0.08));
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
          if (shape_contains(shape, y - cy, x - cx, r))
            for (int c = 0; c < 3; ++c) bg.at(c, y, x) = color[c];
    }
    Image prev = bg, curr = bg;
    std::vector<uint8_t> mask(size_t(S) * S, 0);

    // global illumination shift, previous image only
    const float shift =
        float(rng.uniform(-spec.illumination_jitter, spec.illumination_jitter));
    for (auto& v : prev.v) v += shift;

    // distractor blobs on previous: local brightness bumps, not change
    for (int d = 0; d < spec.distractor_count; ++d) {
      const int cy = rng.uniform_int(4, S - 5), cx = rng.uniform_int(4, S - 5);
      const double r = rng.uniform(3.0, 8.0);
      const float amp = float(rng.uniform(-0.15, 0.15));
      for (int y = std::max(0, cy - int(3 * r)); y < std::min(S, cy + int(3 * r)); ++y)
        for (int x = std::max(0, cx - int(3 * r)); x < std::min(S, cx + int(3 * r)); ++x) {
          const double d2 = double(y - cy) * (y - cy) + double(x - cx) * (x - cx);
          const float w = float(std::exp(-d2 / (2 * r * r)));
          for (int c = 0; c < 3; ++c) prev.at(c, y, x) += amp * w;
        }
    }

    int label = 0;
    if (!unchanged) {
      const int k = rng.uniform_int(1, spec.num_change_classes);
      label = k;
      const int shape = rng.uniform_int(0, 4);
      const int r = rng.uniform_int(S / 8, S / 4);
      const int cy = rng.uniform_int(r + 2, S - r - 3);
      const int cx = rng.uniform_int(r + 2, S - r - 3);
      float color[3];
      for (int c = 0; c < 3; ++c)
        color[c] = kPalette[(k - 1) % 5][c] + float(rng.uniform(-0.08, 0.08));
      // soft shadow offset down-right, excluded from the ground truth
      if (spec.shadow) {
        const int oy = 3, ox = 3;
        for (int y = 0; y < S; ++y)
          for (int x = 0; x < S; ++x)
            if (shape_contains(shape, y - cy - oy, x - cx - ox, r))
              for (int c = 0; c < 3; ++c) curr.at(c, y, x) *= 0.65f;
      }
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
          if (shape_contains(shape, y - cy, x - cx, r)) {
            mask[size_t(y) * S + x] = 1;
            for (int c = 0; c < 3; ++c) curr.at(c, y, x) = color[c];
          }
    }

    clamp_image(prev);
    clamp_image(curr);

    const std::string name = pair_name(idx);
    ManifestEntry e;
    e.pair_id = name;
    e.prev_path = "prev/" + name + ".png";
    e.curr_path = "curr/" + name + ".png";
    e.mask_path = "masks/" + name + ".png";
    e.label_id = label;
    save_image_rgb(prev, (fs::path(out_dir) / e.prev_path).string());
    save_image_rgb(curr, (fs::path(out_dir) / e.curr_path).string());
    save_mask(mask, S, S, (fs::path(out_dir) / e.mask_path).string());
    m.entries.push_back(std::move(e));
  }

  save_manifest(m, out_dir);
  return m;
}

// ---------------------------------------------------------------------------
// patching / labels / oversampling

std::vector<int> patch_offsets(int extent, int patch, int count) {
  if (patch > extent)
    throw std::invalid_argument("patch_offsets: patch larger than image");
  if (count < 1) throw std::invalid_argument("patch_offsets: count must be >= 1");
  if (int64_t(count) * patch < extent)
    throw std::invalid_argument("patch_offsets: grid does not cover the image");
  std::vector<int> out(count);
  if (count == 1) return out;  // single patch at 0
  for (int i = 0; i < count; ++i)
    out[i] = int(std::lround(double(i) * (extent - patch) / double(count - 1)));
  return out;
}

std::vector<PatchRect> patch_grid(int height, int width, int patch, int rows,
                                  int cols) {
  const auto ys = patch_offsets(height, patch, rows);
  const auto xs = patch_offsets(width, patch, cols);
  std::vector<PatchRect> out;
  out.reserve(size_t(rows) * cols);
  for (int y : ys)
    for (int x : xs) out.push_back({y, x, patch});
  return out;
}

Image crop(const Image& img, const PatchRect& r) {
  Image out(r.size, r.size, img.channels);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < r.size; ++y)
      for (int x = 0; x < r.size; ++x)
        out.at(c, y, x) = img.at(c, r.y + y, r.x + x);
  return out;
}

std::vector<uint8_t> crop_mask(const std::vector<uint8_t>& mask, int width,
                               const PatchRect& r) {
  std::vector<uint8_t> out(size_t(r.size) * r.size);
  for (int y = 0; y < r.size; ++y)
    for (int x = 0; x < r.size; ++x)
      out[size_t(y) * r.size + x] = mask[size_t(r.y + y) * width + r.x + x];
  return out;
}

int patch_label(const std::vector<uint8_t>& mask_patch, int semantic_label,
                int unchanged_label, int min_pixels) {
  int positives = 0;
  for (uint8_t v : mask_patch)
    if (v) ++positives;
  return positives >= min_pixels ? semantic_label : unchanged_label;
}

int combine_labels(const std::vector<int>& present_classes, int num_base_classes) {
  if (num_base_classes < 1 || num_base_classes > 30)
    throw std::invalid_argument("combine_labels: unsupported class count");
  int id = 0;
  for (int c : present_classes) {
    if (c < 0 || c >= num_base_classes)
      throw std::invalid_argument("combine_labels: class index out of range");
    id |= 1 << c;
  }
  return id;
}

DatasetManifest oversample(const DatasetManifest& manifest, int min_count) {
  DatasetManifest out = manifest;
  std::map<int, std::vector<size_t>> by_label;
  for (size_t i = 0; i < manifest.entries.size(); ++i)
    by_label[manifest.entries[i].label_id].push_back(i);
  for (const auto& [label, idxs] : by_label) {
    int64_t need = int64_t(min_count) - int64_t(idxs.size());
    size_t cursor = 0;
    while (need > 0) {  // round-robin over the originals
      out.entries.push_back(manifest.entries[idxs[cursor]]);
      cursor = (cursor + 1) % idxs.size();
      --need;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// manifest I/O

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace

void save_manifest(const DatasetManifest& manifest, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream csv(fs::path(dir) / "manifest.csv");
  if (!csv) throw std::runtime_error("cannot write manifest in " + dir);
  csv << "pair_id,prev_path,curr_path,label_id,mask_path\n";
  for (const auto& e : manifest.entries)
    csv << e.pair_id << ',' << e.prev_path << ',' << e.curr_path << ','
        << e.label_id << ',' << e.mask_path << '\n';
  json j;
  for (const auto& [id, name] : manifest.label_names)
    j["label_names"][std::to_string(id)] = name;
  j["unchanged_label_id"] = manifest.unchanged_label_id;
  std::ofstream lbl(fs::path(dir) / "labels.json");
  lbl << j.dump(2) << '\n';
}

DatasetManifest load_manifest(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::exists(root / "manifest.csv"))
    throw std::runtime_error("missing manifest: " + (root / "manifest.csv").string());
  if (!fs::exists(root / "labels.json"))
    throw std::runtime_error("missing labels: " + (root / "labels.json").string());

  DatasetManifest m;
  m.root = dir;
  {
    std::ifstream lbl(root / "labels.json");
    json j = json::parse(lbl);
    for (auto& [key, val] : j.at("label_names").items())
      m.label_names[std::stoi(key)] = val.get<std::string>();
    m.unchanged_label_id = j.at("unchanged_label_id").get<int>();
    if (!m.label_names.count(m.unchanged_label_id))
      throw std::runtime_error("labels.json: unchanged_label_id not in label_names");
  }

  std::ifstream csv(root / "manifest.csv");
  std::string line;
  std::getline(csv, line);  // header
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() < 4)
      throw std::runtime_error("manifest.csv: malformed line: " + line);
    ManifestEntry e;
    e.pair_id = f[0];
    e.prev_path = f[1];
    e.curr_path = f[2];
    e.label_id = std::stoi(f[3]);
    e.mask_path = f.size() > 4 ? f[4] : "";
    if (!m.label_names.count(e.label_id))
      throw std::runtime_error("manifest.csv: unknown label id " +
                               std::to_string(e.label_id));
    for (const std::string* p : {&e.prev_path, &e.curr_path, &e.mask_path}) {
      if (p->empty()) continue;
      if (!fs::exists(root / *p))
        throw std::runtime_error("manifest references missing file: " +
                                 (root / *p).string());
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

// ---------------------------------------------------------------------------
// ingestion adapters

namespace {

cv::Mat load_gray_raw(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw std::runtime_error("failed to load image: " + path);
  return m;
}

void write_pair(DatasetManifest& m, const std::string& out_dir,
                const std::string& id, const Image& prev, const Image& curr,
                const std::vector<uint8_t>& mask, int mask_h, int mask_w,
                int label) {
  ManifestEntry e;
  e.pair_id = id;
  e.prev_path = "prev/" + id + ".png";
  e.curr_path = "curr/" + id + ".png";
  e.mask_path = "masks/" + id + ".png";
  e.label_id = label;
  save_image_rgb(prev, (fs::path(out_dir) / e.prev_path).string());
  save_image_rgb(curr, (fs::path(out_dir) / e.curr_path).string());
  save_mask(mask, mask_h, mask_w, (fs::path(out_dir) / e.mask_path).string());
  m.entries.push_back(std::move(e));
}

}  // namespace

DatasetManifest adapt_aicd(const std::string& src_dir, const std::string& out_dir,
                           const AicdAdaptOptions& opt) {
  const fs::path src(src_dir);
  const fs::path labels_csv = src / "labels.csv";
  if (!fs::exists(labels_csv))
    throw std::runtime_error("adapt_aicd: missing " + labels_csv.string());

  fs::create_directories(fs::path(out_dir) / "prev");
  fs::create_directories(fs::path(out_dir) / "curr");
  fs::create_directories(fs::path(out_dir) / "masks");

  // collect label names first so ids are stable
  std::vector<std::pair<std::string, std::string>> pairs;  // pair id, label name
  {
    std::ifstream csv(labels_csv);
    std::string line;
    std::getline(csv, line);  // header: pair_id,label
    while (std::getline(csv, line)) {
      if (line.empty()) continue;
      auto f = split_csv_line(line);
      if (f.size() != 2)
        throw std::runtime_error("adapt_aicd: malformed labels.csv line: " + line);
      pairs.emplace_back(f[0], f[1]);
    }
  }
  std::vector<std::string> names;
  for (const auto& [id, name] : pairs) names.push_back(name);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());

  DatasetManifest m;
  m.root = out_dir;
  m.unchanged_label_id = 0;
  m.label_names[0] = "unchanged";
  std::map<std::string, int> name_to_id;
  for (size_t i = 0; i < names.size(); ++i) {
    name_to_id[names[i]] = int(i) + 1;
    m.label_names[int(i) + 1] = names[i];
  }

  for (const auto& [pair_id, label_name] : pairs) {
    const Image prev = load_image_rgb((src / "images" / (pair_id + "_prev.png")).string());
    const Image curr = load_image_rgb((src / "images" / (pair_id + "_curr.png")).string());
    int mh = 0, mw = 0;
    const auto mask = load_mask((src / "gt" / (pair_id + "_gt.png")).string(), &mh, &mw);
    if (mh != prev.height || mw != prev.width)
      throw std::runtime_error("adapt_aicd: mask size mismatch for " + pair_id);

    const auto grid =
        patch_grid(prev.height, prev.width, opt.patch, opt.grid_rows, opt.grid_cols);
    for (size_t p = 0; p < grid.size(); ++p) {
      const auto& r = grid[p];
      Image pp = crop(prev, r), pc = crop(curr, r);
      auto pm = crop_mask(mask, prev.width, r);
      int ph = r.size, pw = r.size;
      const int label = patch_label(pm, name_to_id.at(label_name),
                                    m.unchanged_label_id, opt.min_pixels);
      if (opt.resize_to > 0 && opt.resize_to != r.size) {
        pp = resize_bilinear(pp, opt.resize_to, opt.resize_to);
        pc = resize_bilinear(pc, opt.resize_to, opt.resize_to);
        pm = resize_mask_nearest(pm, ph, pw, opt.resize_to, opt.resize_to);
        ph = pw = opt.resize_to;
      }
      char suffix[32];
      std::snprintf(suffix, sizeof(suffix), "_p%02zu", p);
      write_pair(m, out_dir, pair_id + suffix, pp, pc, pm, ph, pw, label);
    }
  }
  save_manifest(m, out_dir);
  return m;
}

DatasetManifest adapt_hrscd(const std::string& src_dir, const std::string& out_dir,
                            const HrscdAdaptOptions& opt) {
  const fs::path src(src_dir);
  if (!fs::exists(src / "im1"))
    throw std::runtime_error("adapt_hrscd: missing directory " + (src / "im1").string());

  fs::create_directories(fs::path(out_dir) / "prev");
  fs::create_directories(fs::path(out_dir) / "curr");
  fs::create_directories(fs::path(out_dir) / "masks");

  DatasetManifest m;
  m.root = out_dir;
  m.unchanged_label_id = 0;
  m.label_names[0] = "unchanged";
  // combination labels over the base classes, bitmask-encoded
  const int K = opt.num_base_classes;
  for (int id = 1; id < (1 << K); ++id) {
    std::string name;
    for (int c = 0; c < K; ++c)
      if (id & (1 << c)) name += (name.empty() ? "cls" : "+cls") + std::to_string(c);
    m.label_names[id] = name;
  }

  std::vector<fs::path> tiles;
  for (const auto& entry : fs::directory_iterator(src / "im1"))
    if (entry.is_regular_file()) tiles.push_back(entry.path().filename());
  std::sort(tiles.begin(), tiles.end());

  for (const auto& tile : tiles) {
    const std::string stem = tile.stem().string();
    const Image prev = load_image_rgb((src / "im1" / tile).string());
    const Image curr = load_image_rgb((src / "im2" / tile).string());
    int mh = 0, mw = 0;
    const auto change = load_mask((src / "change" / tile).string(), &mh, &mw);
    const cv::Mat semantic = load_gray_raw((src / "semantic" / tile).string());
    if (semantic.rows != mh || semantic.cols != mw)
      throw std::runtime_error("adapt_hrscd: semantic size mismatch for " + stem);

    std::vector<int> class_pixels(size_t(K), 0);
    for (int y = 0; y < mh; ++y)
      for (int x = 0; x < mw; ++x) {
        if (!change[size_t(y) * mw + x]) continue;
        const int cls = semantic.at<uint8_t>(y, x);  // 0 = none, 1..K = class
        if (cls >= 1 && cls <= K) ++class_pixels[cls - 1];
      }
    std::vector<int> present;
    for (int c = 0; c < K; ++c)
      if (class_pixels[c] >= opt.min_pixels) present.push_back(c);
    const int label = combine_labels(present, K);
    write_pair(m, out_dir, stem, prev, curr, change, mh, mw, label);
  }

  // drop combo labels that never occur so the label space stays honest,
  // then oversample the remaining classes
  std::map<int, int> hist;
  for (const auto& e : m.entries) ++hist[e.label_id];
  for (auto it = m.label_names.begin(); it != m.label_names.end();) {
    if (it->first != m.unchanged_label_id && !hist.count(it->first))
      it = m.label_names.erase(it);
    else
      ++it;
  }
  if (opt.oversample_min > 0) m = oversample(m, opt.oversample_min);
  m.root = out_dir;
  save_manifest(m, out_dir);
  return m;
}

}  // namespace wcdnet
