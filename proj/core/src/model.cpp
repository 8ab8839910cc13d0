// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#include "wcdnet/model.h"

#include <cmath>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "wcdnet/remap.h"

using nlohmann::json;

namespace wcdnet {

// ---------------------------------------------------------------------------
// config

void ModelConfig::validate() const {
  if (filter_schedule.size() != 6)
    throw std::invalid_argument("ModelConfig: filter_schedule must have exactly 6 entries");
  for (int f : filter_schedule)
    if (f < 1) throw std::invalid_argument("ModelConfig: filter counts must be positive");
  if (num_classes < 2)
    throw std::invalid_argument("ModelConfig: num_classes must be >= 2");
  if (alpha <= 0) throw std::invalid_argument("ModelConfig: alpha must be positive");
  if (mask_threshold <= 0 || mask_threshold >= 1)
    throw std::invalid_argument("ModelConfig: mask_threshold must lie in (0,1)");
  if (input_height % 32 || input_width % 32 || input_height < 32 || input_width < 32)
    throw std::invalid_argument("ModelConfig: input size must be a positive multiple of 32");
  if (crf_iterations < 1)
    throw std::invalid_argument("ModelConfig: crf_iterations must be >= 1");
  if (width_multiplier <= 0)
    throw std::invalid_argument("ModelConfig: width_multiplier must be positive");
}

std::string ModelConfig::to_json() const {
  json j;
  j["input_height"] = input_height;
  j["input_width"] = input_width;
  j["num_classes"] = num_classes;
  j["alpha"] = alpha;
  j["filter_schedule"] = filter_schedule;
  j["residual_block_enabled"] = residual_block_enabled;
  j["crf_enabled"] = crf_enabled;
  j["crf_iterations"] = crf_iterations;
  j["supervision_mode"] =
      supervision_mode == SupervisionMode::weak ? "weak" : "full_multitask";
  j["mask_threshold"] = mask_threshold;
  j["unchanged_class_index"] = unchanged_class_index;
  j["width_multiplier"] = width_multiplier;
  j["crf"] = {{"spatial_sigma", crf.spatial_sigma},
              {"bilateral_sigma_space", crf.bilateral_sigma_space},
              {"bilateral_sigma_color", crf.bilateral_sigma_color},
              {"spatial_weight", crf.spatial_weight},
              {"bilateral_weight", crf.bilateral_weight},
              {"compatibility", crf.compatibility},
              {"kernel_truncation_radius", crf.kernel_truncation_radius}};
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  ModelConfig c;
  c.input_height = j.value("input_height", c.input_height);
  c.input_width = j.value("input_width", c.input_width);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.alpha = j.value("alpha", c.alpha);
  if (j.contains("filter_schedule"))
    c.filter_schedule = j["filter_schedule"].get<std::vector<int>>();
  c.residual_block_enabled = j.value("residual_block_enabled", c.residual_block_enabled);
  c.crf_enabled = j.value("crf_enabled", c.crf_enabled);
  c.crf_iterations = j.value("crf_iterations", c.crf_iterations);
  if (j.value("supervision_mode", "weak") == std::string("full_multitask"))
    c.supervision_mode = SupervisionMode::full_multitask;
  c.mask_threshold = j.value("mask_threshold", c.mask_threshold);
  c.unchanged_class_index = j.value("unchanged_class_index", c.unchanged_class_index);
  c.width_multiplier = j.value("width_multiplier", c.width_multiplier);
  if (j.contains("crf")) {
    const auto& cj = j["crf"];
    c.crf.spatial_sigma = cj.value("spatial_sigma", c.crf.spatial_sigma);
    c.crf.bilateral_sigma_space =
        cj.value("bilateral_sigma_space", c.crf.bilateral_sigma_space);
    c.crf.bilateral_sigma_color =
        cj.value("bilateral_sigma_color", c.crf.bilateral_sigma_color);
    c.crf.spatial_weight = cj.value("spatial_weight", c.crf.spatial_weight);
    c.crf.bilateral_weight = cj.value("bilateral_weight", c.crf.bilateral_weight);
    if (cj.contains("compatibility"))
      c.crf.compatibility = cj["compatibility"].get<std::array<double, 4>>();
    c.crf.kernel_truncation_radius =
        cj.value("kernel_truncation_radius", c.crf.kernel_truncation_radius);
  }
  c.crf.iterations = c.crf_iterations;
  return c;
}

// ---------------------------------------------------------------------------
// construction

namespace {

// Gaussian sampling independent of libstdc++ distribution internals.
struct GaussRng {
  std::mt19937_64 g;
  explicit GaussRng(uint64_t seed) : g(seed) {}
  double uniform() { return (double(g() >> 11) + 0.5) * 0x1.0p-53; }
  double normal() {
    const double u = uniform(), v = uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
  }
};

}  // namespace

Model::Model(ModelConfig config, uint64_t init_seed) : cfg_(std::move(config)) {
  cfg_.validate();
  cfg_.crf.iterations = cfg_.crf_iterations;
  const int w = std::max(4, int(std::lround(64.0 * cfg_.width_multiplier)));
  enc_widths_ = {w, 2 * w, 4 * w, 8 * w, 8 * w};
  enc_convs_ = {2, 2, 3, 3, 3};  // VGG16 stage layout
  dec_widths_ = {8 * w, 4 * w, 2 * w, w, w};
  residual_width_ = std::max(4, w / 2);
  build_params(init_seed);
}

int Model::residual_feature_dim() const { return 4 * residual_width_; }
int Model::segmented_feature_dim() const { return enc_widths_.back(); }

void Model::build_params(uint64_t seed) {
  GaussRng rng(seed);
  auto conv_param = [&](const std::string& name, int out_c, int in_c, int k) {
    Tensor wt({out_c, in_c, k, k});
    const double std = std::sqrt(2.0 / (double(in_c) * k * k));
    for (auto& v : wt.v) v = real(rng.normal() * std);
    params_[name + ".w"] = ag::parameter(std::move(wt), name + ".w");
    params_[name + ".b"] = ag::parameter(Tensor({out_c}), name + ".b");
  };
  auto dense_param = [&](const std::string& name, int out_d, int in_d,
                         double gain) {
    Tensor wt({out_d, in_d});
    const double std = std::sqrt(gain / double(in_d));
    for (auto& v : wt.v) v = real(rng.normal() * std);
    params_[name + ".w"] = ag::parameter(std::move(wt), name + ".w");
    params_[name + ".b"] = ag::parameter(Tensor({out_d}), name + ".b");
  };
  auto bn_param = [&](const std::string& name, int c) {
    params_[name + ".gamma"] = ag::parameter(Tensor::full({c}, 1), name + ".gamma");
    params_[name + ".beta"] = ag::parameter(Tensor({c}), name + ".beta");
    bn_stats_[name + ".running_mean"] = Tensor({c});
    bn_stats_[name + ".running_var"] = Tensor::full({c}, 1);
  };

  // shared siamese U-Net encoder + decoder
  int in_c = 3;
  for (size_t s = 0; s < enc_widths_.size(); ++s) {
    for (int j = 0; j < enc_convs_[s]; ++j) {
      conv_param("unet.enc" + std::to_string(s) + ".conv" + std::to_string(j),
                 enc_widths_[s], in_c, 3);
      in_c = enc_widths_[s];
    }
  }
  conv_param("unet.bottom.conv0", enc_widths_.back(), enc_widths_.back(), 3);
  int up_c = enc_widths_.back();
  for (size_t d = 0; d < dec_widths_.size(); ++d) {
    const int skip_c = enc_widths_[enc_widths_.size() - 1 - d];
    conv_param("unet.dec" + std::to_string(d) + ".conv0", dec_widths_[d],
               up_c + skip_c, 3);
    up_c = dec_widths_[d];
  }

  // comparison blocks: |a-b| (+ upsampled upstream) -> 2x(conv/relu/bn)
  std::vector<int> pyr_ch;
  pyr_ch.push_back(enc_widths_.back());  // bottom level
  for (int dw : dec_widths_) pyr_ch.push_back(dw);
  for (int i = 0; i < 6; ++i) {
    const int up = i == 0 ? 0 : cfg_.filter_schedule[i - 1];
    const int f = cfg_.filter_schedule[i];
    conv_param("cmp" + std::to_string(i) + ".conv0", f, pyr_ch[i] + up, 3);
    bn_param("cmp" + std::to_string(i) + ".bn0", f);
    conv_param("cmp" + std::to_string(i) + ".conv1", f, f, 3);
    bn_param("cmp" + std::to_string(i) + ".bn1", f);
  }

  // raw mask head: three conv+ReLU layers down to one channel
  const int f5 = cfg_.filter_schedule[5];
  const int h = std::max(8, f5 / 2);
  conv_param("head.conv0", h, f5, 3);
  conv_param("head.conv1", h, h, 3);
  conv_param("head.conv2", 1, h, 3);

  // VGG16-topology encoder for the segmented image
  in_c = 3;
  for (size_t s = 0; s < enc_widths_.size(); ++s) {
    for (int j = 0; j < enc_convs_[s]; ++j) {
      conv_param("vgg.enc" + std::to_string(s) + ".conv" + std::to_string(j),
                 enc_widths_[s], in_c, 3);
      in_c = enc_widths_[s];
    }
  }

  // residual block on the raw mask
  if (cfg_.residual_block_enabled) {
    const int r = residual_width_;
    conv_param("res.conv0", r, 1, 3);
    conv_param("res.conv1", 2 * r, r, 3);
    conv_param("res.conv2", 2 * r, 2 * r, 3);
    conv_param("res.conv3", 4 * r, 2 * r, 3);
    dense_param("res.fc", residual_feature_dim(), 4 * r, 2.0);
  }

  // fusion classifier
  const int fuse_in = segmented_feature_dim() +
                      (cfg_.residual_block_enabled ? residual_feature_dim() : 0);
  dense_param("fuse.fc0", 256, fuse_in, 2.0);
  dense_param("fuse.fc1", cfg_.num_classes, 256, 1.0);

  if (cfg_.crf_enabled) {
    params_["crf.spatial_weight"] = ag::parameter(
        Tensor::full({1}, real(cfg_.crf.spatial_weight)), "crf.spatial_weight");
    params_["crf.bilateral_weight"] = ag::parameter(
        Tensor::full({1}, real(cfg_.crf.bilateral_weight)), "crf.bilateral_weight");
    Tensor compat({4});
    for (int i = 0; i < 4; ++i) compat[i] = real(cfg_.crf.compatibility[i]);
    params_["crf.compatibility"] = ag::parameter(std::move(compat), "crf.compatibility");
  }
}

std::map<std::string, Tensor*> Model::buffers() {
  std::map<std::string, Tensor*> out;
  for (auto& [name, t] : bn_stats_) out[name] = &t;
  return out;
}

// ---------------------------------------------------------------------------
// stages

ag::Var Model::conv_layer(const std::string& name, const ag::Var& x,
                          bool relu_after, bool training, bool with_bn) {
  ag::Var y = ag::conv2d(x, p(name + ".w"), p(name + ".b"), 1, 1);
  if (relu_after) y = ag::relu(y);
  if (with_bn) {
    const std::string bn = name.substr(0, name.rfind(".conv")) +
                           ".bn" + name.substr(name.size() - 1);
    y = ag::batch_norm(y, p(bn + ".gamma"), p(bn + ".beta"),
                       &bn_stats_.at(bn + ".running_mean"),
                       &bn_stats_.at(bn + ".running_var"), training);
  }
  return y;
}

std::vector<ag::Var> Model::extract_features(const ag::Var& image, bool training) {
  const auto& s = image->value.shape;
  if (s.size() != 4 || s[1] != 3 || s[2] != cfg_.input_height || s[3] != cfg_.input_width)
    throw std::invalid_argument("extract_features: image shape " + shape_str(s) +
                                " does not match configured input size");
  std::vector<ag::Var> skips;
  ag::Var x = image;
  for (size_t st = 0; st < enc_widths_.size(); ++st) {
    for (int j = 0; j < enc_convs_[st]; ++j)
      x = conv_layer("unet.enc" + std::to_string(st) + ".conv" + std::to_string(j),
                     x, true, training);
    skips.push_back(x);
    x = ag::maxpool2x2(x);
  }
  x = conv_layer("unet.bottom.conv0", x, true, training);

  std::vector<ag::Var> levels;  // coarsest first
  levels.push_back(x);
  for (size_t d = 0; d < dec_widths_.size(); ++d) {
    ag::Var up = ag::upsample_nearest2x(levels.back());
    ag::Var cat = ag::concat_channels(up, skips[skips.size() - 1 - d]);
    levels.push_back(
        conv_layer("unet.dec" + std::to_string(d) + ".conv0", cat, true, training));
  }
  return levels;
}

ag::Var Model::comparison_block(int index, const ag::Var& feat_prev,
                                const ag::Var& feat_curr, const ag::Var* upstream,
                                bool training) {
  ag::Var x = ag::abs_diff(feat_prev, feat_curr);
  if (upstream) x = ag::concat_channels(x, *upstream);
  const std::string base = "cmp" + std::to_string(index);
  x = conv_layer(base + ".conv0", x, true, training, /*with_bn=*/true);
  x = conv_layer(base + ".conv1", x, true, training, /*with_bn=*/true);
  return x;
}

ag::Var Model::raw_mask_head(const ag::Var& last_block_output, bool training) {
  ag::Var x = conv_layer("head.conv0", last_block_output, true, training);
  x = conv_layer("head.conv1", x, true, training);
  return conv_layer("head.conv2", x, true, training);  // ReLU keeps it nonnegative
}

ag::Var Model::segment_current(const ag::Var& current, const ag::Var& mask) {
  return ag::mul_broadcast_mask(current, mask);
}

ag::Var Model::encode_segmented(const ag::Var& segmented, bool training) {
  ag::Var x = segmented;
  for (size_t st = 0; st < enc_widths_.size(); ++st) {
    for (int j = 0; j < enc_convs_[st]; ++j)
      x = conv_layer("vgg.enc" + std::to_string(st) + ".conv" + std::to_string(j),
                     x, true, training);
    x = ag::maxpool2x2(x);
  }
  return ag::global_avg_pool(x);
}

ag::Var Model::residual_features(const ag::Var& raw, bool training) {
  if (!cfg_.residual_block_enabled)
    throw std::logic_error("residual_features: residual block disabled");
  auto strided = [&](const std::string& name, const ag::Var& x) {
    return ag::relu(ag::conv2d(x, p(name + ".w"), p(name + ".b"), 2, 1));
  };
  ag::Var y1 = strided("res.conv0", raw);
  ag::Var y2 = strided("res.conv1", y1);
  // additive skip across the third convolution
  ag::Var y3 = ag::relu(ag::add(
      ag::conv2d(y2, p("res.conv2.w"), p("res.conv2.b"), 2, 1), ag::maxpool2x2(y2)));
  ag::Var y4 = strided("res.conv3", y3);
  ag::Var v = ag::global_avg_pool(y4);
  return ag::dense(v, p("res.fc.w"), p("res.fc.b"));
}

ag::Var Model::fuse_and_classify(const ag::Var& seg_vec, const ag::Var* res_vec) {
  if (cfg_.residual_block_enabled != (res_vec != nullptr))
    throw std::invalid_argument(
        "fuse_and_classify: residual vector presence inconsistent with config");
  ag::Var x = res_vec ? ag::concat_features(seg_vec, *res_vec) : seg_vec;
  x = ag::relu(ag::dense(x, p("fuse.fc0.w"), p("fuse.fc0.b")));
  x = ag::dense(x, p("fuse.fc1.w"), p("fuse.fc1.b"));
  return ag::softmax_rows(x);
}

// Differentiable mean-field refinement as a graph node. Sigmas and iteration
// count come from the config; weights and compatibility are learned.
ag::Var Model::crf_refine(const ag::Var& mask, const Tensor& guide) {
  if (!cfg_.crf_enabled) throw std::logic_error("crf_refine: crf disabled");
  const auto& ms = mask->value.shape;
  const int N = ms[0], H = ms[2], W = ms[3];
  const int64_t HW = int64_t(H) * W;
  ag::Var ws = p("crf.spatial_weight"), wb = p("crf.bilateral_weight");
  ag::Var compat = p("crf.compatibility");

  CrfParams cp = cfg_.crf;
  cp.iterations = cfg_.crf_iterations;
  cp.spatial_weight = ws->value[0];
  cp.bilateral_weight = wb->value[0];
  for (int i = 0; i < 4; ++i) cp.compatibility[i] = compat->value[i];

  auto engines = std::make_shared<std::vector<MeanFieldCrf<real>>>();
  engines->reserve(N);
  Tensor out(ms);
  for (int n = 0; n < N; ++n) {
    engines->emplace_back(H, W, cp);
    std::vector<real> m(mask->value.data() + n * HW, mask->value.data() + (n + 1) * HW);
    std::vector<real> g(guide.data() + int64_t(n) * 3 * HW,
                        guide.data() + int64_t(n + 1) * 3 * HW);
    auto refined = engines->back().refine(m, g);
    std::copy(refined.begin(), refined.end(), out.data() + n * HW);
  }

  auto node = std::make_shared<ag::Node>();
  node->value = std::move(out);
  node->parents = {mask, ws, wb, compat};
  node->requires_grad = true;
  ag::Node* r = node.get();
  ag::Var mv = mask;
  node->backward_fn = [r, mv, ws, wb, compat, engines, N, HW] {
    for (int n = 0; n < N; ++n) {
      std::vector<real> gout(r->grad.data() + n * HW, r->grad.data() + (n + 1) * HW);
      auto g = (*engines)[n].backward(gout);
      if (mv->requires_grad) {
        real* gm = mv->ensure_grad().data() + n * HW;
        for (int64_t i = 0; i < HW; ++i) gm[i] += g.mask[i];
      }
      ws->ensure_grad()[0] += g.spatial_weight;
      wb->ensure_grad()[0] += g.bilateral_weight;
      auto& gc = compat->ensure_grad();
      for (int i = 0; i < 4; ++i) gc[i] += g.compatibility[i];
    }
  };
  return node;
}

Model::ForwardResult Model::forward(const Tensor& prev, const Tensor& curr,
                                    bool training) {
  if (prev.shape != curr.shape)
    throw std::invalid_argument("forward: prev/curr shape mismatch");
  ag::Var pv = ag::constant(prev), cv = ag::constant(curr);
  auto pyr_prev = extract_features(pv, training);
  auto pyr_curr = extract_features(cv, training);

  ag::Var chain;
  for (int i = 0; i < 6; ++i) {
    ag::Var up;
    if (i > 0) up = ag::upsample_nearest2x(chain);
    chain = comparison_block(i, pyr_prev[i], pyr_curr[i], i > 0 ? &up : nullptr,
                             training);
  }

  ForwardResult out;
  out.raw_mask = raw_mask_head(chain, training);
  ag::Var mask = ag::remap_mask(out.raw_mask, real(cfg_.alpha));
  if (cfg_.crf_enabled) mask = crf_refine(mask, curr);
  out.change_mask = mask;

  ag::Var seg = segment_current(cv, mask);
  ag::Var seg_vec = encode_segmented(seg, training);
  if (cfg_.residual_block_enabled) {
    ag::Var res_vec = residual_features(out.raw_mask, training);
    out.class_probs = fuse_and_classify(seg_vec, &res_vec);
  } else {
    out.class_probs = fuse_and_classify(seg_vec, nullptr);
  }
  return out;
}

// ---------------------------------------------------------------------------
// inference helpers

Tensor images_to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
  const int H = images[0]->height, W = images[0]->width;
  Tensor t({int(images.size()), 3, H, W});
  for (size_t n = 0; n < images.size(); ++n) {
    const Image& img = *images[n];
    if (img.height != H || img.width != W || img.channels != 3)
      throw std::invalid_argument("images_to_tensor: inconsistent image shapes");
    std::copy(img.v.begin(), img.v.end(), t.data() + n * int64_t(3) * H * W);
  }
  return t;
}

std::vector<float> tensor_mask_to_vector(const Tensor& t, int sample) {
  const int64_t HW = int64_t(t.dim(2)) * t.dim(3);
  return std::vector<float>(t.data() + sample * HW, t.data() + (sample + 1) * HW);
}

ModelOutput Model::predict_pair(const ImagePair& pair) {
  Tensor prev = images_to_tensor({&pair.prev});
  Tensor curr = images_to_tensor({&pair.curr});
  auto fwd = forward(prev, curr, /*training=*/false);
  ModelOutput out;
  const int C = cfg_.num_classes;
  out.class_probabilities.assign(C, 0);
  for (int c = 0; c < C; ++c) out.class_probabilities[c] = fwd.class_probs->value[c];
  out.predicted_label = 0;
  for (int c = 1; c < C; ++c)
    if (out.class_probabilities[c] > out.class_probabilities[out.predicted_label])
      out.predicted_label = c;
  out.change_mask = tensor_mask_to_vector(fwd.change_mask->value, 0);
  out.raw_mask = tensor_mask_to_vector(fwd.raw_mask->value, 0);
  out.binary_mask.assign(out.change_mask.size(), 0);
  // D7: an "unchanged" image-level decision gates the mask to empty
  if (out.predicted_label != cfg_.unchanged_class_index) {
    for (size_t i = 0; i < out.change_mask.size(); ++i)
      out.binary_mask[i] = out.change_mask[i] >= real(cfg_.mask_threshold) ? 1 : 0;
  }
  return out;
}

CrfParams Model::effective_crf_params() const {
  CrfParams cp = cfg_.crf;
  cp.iterations = cfg_.crf_iterations;
  auto it = params_.find("crf.spatial_weight");
  if (it != params_.end()) cp.spatial_weight = it->second->value[0];
  it = params_.find("crf.bilateral_weight");
  if (it != params_.end()) cp.bilateral_weight = it->second->value[0];
  it = params_.find("crf.compatibility");
  if (it != params_.end())
    for (int i = 0; i < 4; ++i) cp.compatibility[i] = it->second->value[i];
  return cp;
}

}  // namespace wcdnet
