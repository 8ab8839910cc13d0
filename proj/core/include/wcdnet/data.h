// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wcdnet/image.h"

namespace wcdnet {

struct ManifestEntry {
  std::string pair_id;
  std::string prev_path;  // relative to the dataset root
  std::string curr_path;
  int label_id = 0;
  std::string mask_path;  // empty when no ground-truth mask exists
};

struct DatasetManifest {
  std::string root;
  std::vector<ManifestEntry> entries;
  std::map<int, std::string> label_names;
  int unchanged_label_id = 0;

  int num_classes() const { return int(label_names.size()); }
  bool operator==(const DatasetManifest& o) const;
};

struct SyntheticSpec {
  int image_size = 64;
  int num_change_classes = 3;
  int num_pairs = 500;
  double unchanged_fraction = 0.1;
  double illumination_jitter = 0.08;  // max brightness delta on the previous image
  int distractor_count = 2;           // irrelevant brightness blobs per pair
  // palette-colored shapes rendered identically into BOTH images: they are
  // not change, but they make the class color ambiguous unless the model
  // actually selects the changed object
  int colored_distractor_count = 3;
  bool shadow = true;
  uint64_t seed = 1234;
};

// Renders the synthetic change-detection corpus into out_dir (layout:
// manifest.csv, labels.json, prev/, curr/, masks/). Pure function of the
// spec: same spec, same bytes.
DatasetManifest generate_synthetic(const SyntheticSpec& spec,
                                   const std::string& out_dir);

// Uniformly spaced patch offsets: row_i = round(i*(H-patch)/(rows-1)).
// Every pixel is covered; overlap is minimal for the grid.
std::vector<int> patch_offsets(int extent, int patch, int count);

struct PatchRect {
  int y = 0, x = 0, size = 0;
};
std::vector<PatchRect> patch_grid(int height, int width, int patch, int rows,
                                  int cols);

Image crop(const Image& img, const PatchRect& r);
std::vector<uint8_t> crop_mask(const std::vector<uint8_t>& mask, int width,
                               const PatchRect& r);

// Patch-level weak label: the object's label if the patch holds at least
// min_pixels positive ground-truth pixels, else unchanged.
int patch_label(const std::vector<uint8_t>& mask_patch, int semantic_label,
                int unchanged_label, int min_pixels = 16);

// Bitmask combination id over base classes: {} -> 0 (unchanged),
// {c0,c2} -> 5. Bijective between nonempty subsets and 1..2^K-1.
int combine_labels(const std::vector<int>& present_classes, int num_base_classes);

// Deterministic round-robin duplication until every label id has at least
// min_count entries; originals keep their order, duplicates are appended.
DatasetManifest oversample(const DatasetManifest& manifest, int min_count);

DatasetManifest load_manifest(const std::string& dir);
void save_manifest(const DatasetManifest& manifest, const std::string& dir);

// Ingestion adapters for user-supplied data. Expected source layouts are
// documented in the README; both emit the standard dataset directory.
struct AicdAdaptOptions {
  int patch = 122;
  int grid_rows = 6;
  int grid_cols = 8;
  int resize_to = 128;  // 0 disables resizing
  int min_pixels = 16;
};
DatasetManifest adapt_aicd(const std::string& src_dir, const std::string& out_dir,
                           const AicdAdaptOptions& opt = {});

struct HrscdAdaptOptions {
  int num_base_classes = 5;
  int oversample_min = 600;
  int min_pixels = 16;
};
DatasetManifest adapt_hrscd(const std::string& src_dir, const std::string& out_dir,
                            const HrscdAdaptOptions& opt = {});

}  // namespace wcdnet
