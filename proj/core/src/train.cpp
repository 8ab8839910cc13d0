// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#include "wcdnet/train.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace wcdnet {
namespace {

// Deterministic across platforms: raw engine output, no distributions.
struct Rng {
  std::mt19937_64 g;
  explicit Rng(uint64_t seed) : g(seed) {}
  double uniform() { return double(g() >> 11) * 0x1.0p-53; }
  size_t below(size_t n) { return size_t(uniform() * double(n)) % n; }
};

void fisher_yates(std::vector<size_t>& idx, Rng& rng) {
  for (size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.below(i)]);
}

struct LoadedPair {
  Image prev, curr;
  std::optional<std::vector<uint8_t>> mask;
  int class_index = 0;
};

std::vector<LoadedPair> load_split(const DatasetManifest& m,
                                   const ClassMapping& mapping, int h, int w,
                                   bool need_masks) {
  std::vector<LoadedPair> out;
  out.reserve(m.entries.size());
  for (size_t i = 0; i < m.entries.size(); ++i) {
    ImagePair p = load_pair(m, i, h, w);
    if (need_masks && !p.mask)
      throw std::runtime_error("full supervision needs a mask for pair " +
                               m.entries[i].pair_id);
    out.push_back({std::move(p.prev), std::move(p.curr), std::move(p.mask),
                   mapping.index_of(p.label_id)});
  }
  return out;
}

void augment_pair(LoadedPair& p, Rng& rng) {
  const int h = p.prev.height, w = p.prev.width, c = p.prev.channels;
  const bool hflip = rng.uniform() < 0.5;
  const bool vflip = rng.uniform() < 0.5;
  const float delta = float((rng.uniform() * 2 - 1) * 0.05);
  auto flip_img = [&](Image& im) {
    Image out = im;
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int sy = vflip ? h - 1 - y : y;
          const int sx = hflip ? w - 1 - x : x;
          out.at(ch, y, x) = std::clamp(im.at(ch, sy, sx) + delta, 0.f, 1.f);
        }
    im = std::move(out);
  };
  flip_img(p.prev);
  flip_img(p.curr);
  if (p.mask) {
    std::vector<uint8_t> out(p.mask->size());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int sy = vflip ? h - 1 - y : y;
        const int sx = hflip ? w - 1 - x : x;
        out[size_t(y) * w + x] = (*p.mask)[size_t(sy) * w + sx];
      }
    p.mask = std::move(out);
  }
}

class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double b1, double b2, double eps)
      : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

  void step(std::map<std::string, ag::Var>& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (auto& [name, p] : params) {
      Tensor& m = slot(m_, name, p->value.shape);
      Tensor& v = slot(v_, name, p->value.shape);
      Tensor& g = p->ensure_grad();
      for (size_t i = 0; i < g.v.size(); ++i) {
        const double gi = g.v[i];
        const double mi = b1_ * m.v[i] + (1 - b1_) * gi;
        const double vi = b2_ * v.v[i] + (1 - b2_) * gi * gi;
        m.v[i] = real(mi);
        v.v[i] = real(vi);
        p->value.v[i] -=
            real(lr_ * (mi / c1) / (std::sqrt(vi / c2) + eps_));
      }
    }
  }

  // Slots round-trip through checkpoints so a resumed run continues exactly.
  void save(std::map<std::string, Tensor>& arrays) const {
    for (const auto& [n, t] : m_) arrays["adam.m." + n] = t;
    for (const auto& [n, t] : v_) arrays["adam.v." + n] = t;
    Tensor step = Tensor::zeros({1});
    step.v[0] = real(t_);
    arrays["adam.t"] = step;
  }
  void load(const std::map<std::string, Tensor>& arrays) {
    for (const auto& [n, t] : arrays) {
      if (n.rfind("adam.m.", 0) == 0) m_[n.substr(7)] = t;
      if (n.rfind("adam.v.", 0) == 0) v_[n.substr(7)] = t;
    }
    auto it = arrays.find("adam.t");
    if (it != arrays.end()) t_ = int64_t(it->second.v[0]);
  }

 private:
  Tensor& slot(std::map<std::string, Tensor>& store, const std::string& name,
               const std::vector<int>& shape) {
    auto it = store.find(name);
    if (it == store.end()) it = store.emplace(name, Tensor(shape)).first;
    return it->second;
  }
  double lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

void refuse_unchanged_without_residual(const Model& model,
                                       const DatasetManifest& split,
                                       const ClassMapping& mapping) {
  if (model.config().residual_block_enabled) return;
  for (const auto& e : split.entries) {
    if (mapping.index_of(e.label_id) == mapping.unchanged_index)
      throw std::invalid_argument(
          "training without the residual block requires a changed-only "
          "dataset: pair " + e.pair_id + " is labeled unchanged. Filter the "
          "unchanged pairs out or enable the residual block.");
  }
}

void write_log_csv(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream f(path, std::ios::trunc);
  f << "epoch,train_loss,train_image_label_loss,train_mask_loss,val_top1,"
       "val_miou_change\n";
  for (const auto& e : log)
    f << e.epoch << ',' << e.train_loss << ',' << e.train_image_label_loss
      << ',' << e.train_mask_loss << ',' << e.val_top1 << ','
      << e.val_miou_change << '\n';
}

struct ValScores {
  double top1 = 0;
  double miou_change = -1;
};

ValScores validate_split(Model& model, const std::vector<LoadedPair>& val,
                         int unchanged_index) {
  ValScores out;
  if (val.empty()) return out;
  int64_t hits = 0;
  ConfusionCounts counts;
  bool any_mask = false;
  for (const auto& p : val) {
    ImagePair pair{p.prev, p.curr, p.mask, 0};
    ModelOutput o = model.predict_pair(pair);
    if (o.predicted_label == p.class_index) ++hits;
    if (p.mask) {
      any_mask = true;
      counts += confusion(o.binary_mask, *p.mask);
    }
  }
  out.top1 = double(hits) / double(val.size());
  if (any_mask) out.miou_change = iou_change(counts);
  (void)unchanged_index;
  return out;
}

TrainResult run_training(Model& model, const DatasetManifest& train_set,
                         const DatasetManifest& val_set, const TrainConfig& cfg,
                         double learning_rate, const std::string& out_dir,
                         bool resume, const ClassMapping& mapping) {
  cfg.validate();
  refuse_unchanged_without_residual(model, train_set, mapping);
  fs::create_directories(out_dir);

  const auto& mc = model.config();
  const bool full = mc.supervision_mode == SupervisionMode::full_multitask;
  std::vector<LoadedPair> train =
      load_split(train_set, mapping, mc.input_height, mc.input_width, full);
  std::vector<LoadedPair> val =
      load_split(val_set, mapping, mc.input_height, mc.input_width, false);
  if (train.empty()) throw std::invalid_argument("empty training split");

  AdamOptimizer opt(learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                    cfg.adam_eps);

  TrainResult result;
  result.best_checkpoint = (fs::path(out_dir) / "best.ckpt").string();
  result.last_checkpoint = (fs::path(out_dir) / "last.ckpt").string();
  const std::string state_path = (fs::path(out_dir) / "state.json").string();
  const std::string log_path = (fs::path(out_dir) / "train_log.csv").string();

  int start_epoch = 0, best_epoch = -1;
  double best_top1 = -1;
  if (resume && fs::exists(result.last_checkpoint) && fs::exists(state_path)) {
    Checkpoint last = load_checkpoint(result.last_checkpoint);
    load_model_state(model, last);
    opt.load(last.arrays);
    std::ifstream sf(state_path);
    json s = json::parse(sf);
    start_epoch = s.at("next_epoch").get<int>();
    best_top1 = s.at("best_val_top1").get<double>();
    best_epoch = s.at("best_epoch").get<int>();
    for (const auto& e : s.at("log")) {
      EpochLog l;
      l.epoch = e.at("epoch").get<int>();
      l.train_loss = e.at("train_loss").get<double>();
      l.train_image_label_loss = e.at("train_image_label_loss").get<double>();
      l.train_mask_loss = e.at("train_mask_loss").get<double>();
      l.val_top1 = e.at("val_top1").get<double>();
      l.val_miou_change = e.at("val_miou_change").get<double>();
      result.log.push_back(l);
    }
    std::cerr << "resuming at epoch " << start_epoch << "\n";
  }

  const int bs = cfg.batch_size;
  for (int epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
    Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + uint64_t(epoch));
    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    fisher_yates(order, rng);

    double sum_loss = 0, sum_il = 0, sum_cm = 0;
    size_t batches = 0;
    for (size_t begin = 0; begin < order.size(); begin += size_t(bs)) {
      const size_t n = std::min(size_t(bs), order.size() - begin);
      std::vector<LoadedPair> batch;
      batch.reserve(n);
      for (size_t j = 0; j < n; ++j) {
        batch.push_back(train[order[begin + j]]);
        if (cfg.augment) augment_pair(batch.back(), rng);
      }
      std::vector<const Image*> prevs, currs;
      for (const auto& p : batch) {
        prevs.push_back(&p.prev);
        currs.push_back(&p.curr);
      }
      Tensor prev = images_to_tensor(prevs);
      Tensor curr = images_to_tensor(currs);
      Tensor one_hot = Tensor::zeros({int(n), mc.num_classes});
      for (size_t j = 0; j < n; ++j)
        one_hot.v[j * size_t(mc.num_classes) + size_t(batch[j].class_index)] = 1;

      auto fwd = model.forward(prev, curr, /*training=*/true);
      ag::Var il = ag::categorical_crossentropy(fwd.class_probs, one_hot);
      il = ag::scale(il, real(cfg.loss_weights.image_label));
      ag::Var total = il;
      ag::Var cm;
      if (full) {
        Tensor gt = Tensor::zeros({int(n), 1, mc.input_height, mc.input_width});
        for (size_t j = 0; j < n; ++j) {
          const auto& mask = *batch[j].mask;
          for (size_t k = 0; k < mask.size(); ++k)
            gt.v[size_t(j) * mask.size() + k] = real(mask[k]);
        }
        cm = ag::conditional_bce(fwd.change_mask, gt);
        cm = ag::scale(cm, real(cfg.loss_weights.mask));
        total = ag::add_scalars(il, cm);
      }
      for (auto& [name, p] : model.params()) p->zero_grad();
      ag::backward(total);
      opt.step(model.params());

      sum_loss += total->value.v[0];
      sum_il += il->value.v[0];
      if (cm) sum_cm += cm->value.v[0];
      ++batches;
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = sum_loss / double(batches);
    log.train_image_label_loss = sum_il / double(batches);
    log.train_mask_loss = sum_cm / double(batches);
    ValScores scores = validate_split(model, val, mc.unchanged_class_index);
    log.val_top1 = scores.top1;
    log.val_miou_change = scores.miou_change;
    result.log.push_back(log);
    write_log_csv(log_path, result.log);
    std::cerr << "epoch " << epoch << " loss " << log.train_loss << " val_top1 "
              << log.val_top1 << " val_iou " << log.val_miou_change << "\n";

    if (log.val_top1 > best_top1) {
      best_top1 = log.val_top1;
      best_epoch = epoch;
      save_checkpoint(model_state(model), result.best_checkpoint);
    }
    Checkpoint last = model_state(model);
    opt.save(last.arrays);
    save_checkpoint(last, result.last_checkpoint);
    json s;
    s["next_epoch"] = epoch + 1;
    s["best_val_top1"] = best_top1;
    s["best_epoch"] = best_epoch;
    s["log"] = json::array();
    for (const auto& e : result.log)
      s["log"].push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"train_image_label_loss", e.train_image_label_loss},
                          {"train_mask_loss", e.train_mask_loss},
                          {"val_top1", e.val_top1},
                          {"val_miou_change", e.val_miou_change}});
    std::ofstream(state_path) << s.dump(2) << "\n";

    if (cfg.early_stop_patience > 0 &&
        epoch - best_epoch >= cfg.early_stop_patience) {
      std::cerr << "early stop: no val_top1 improvement in "
                << cfg.early_stop_patience << " epochs\n";
      break;
    }
  }
  if (best_epoch < 0) {
    save_checkpoint(model_state(model), result.best_checkpoint);
    best_top1 = 0;
  }
  result.best_val_top1 = best_top1;
  return result;
}

}  // namespace

void TrainConfig::validate() const {
  if (alpha_train <= 0 || alpha_finetune <= 0)
    throw std::invalid_argument("train config: alpha values must be positive");
  if (learning_rate <= 0 || finetune_lr_factor <= 0)
    throw std::invalid_argument("train config: learning rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size < 1");
  if (max_epochs < 1) throw std::invalid_argument("train config: max_epochs < 1");
  if (optimizer != "adam")
    throw std::invalid_argument("train config: unsupported optimizer " + optimizer);
}

std::string TrainConfig::to_json() const {
  json j;
  j["alpha_train"] = alpha_train;
  j["alpha_finetune"] = alpha_finetune;
  j["learning_rate"] = learning_rate;
  j["finetune_lr_factor"] = finetune_lr_factor;
  j["batch_size"] = batch_size;
  j["max_epochs"] = max_epochs;
  j["seed"] = seed;
  j["early_stop_patience"] = early_stop_patience;
  j["augment"] = augment;
  j["optimizer"] = optimizer;
  j["adam_beta1"] = adam_beta1;
  j["adam_beta2"] = adam_beta2;
  j["adam_eps"] = adam_eps;
  j["loss_weights"] = {{"image_label", loss_weights.image_label},
                       {"mask", loss_weights.mask}};
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  TrainConfig c;
  c.alpha_train = j.value("alpha_train", c.alpha_train);
  c.alpha_finetune = j.value("alpha_finetune", c.alpha_finetune);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.finetune_lr_factor = j.value("finetune_lr_factor", c.finetune_lr_factor);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.seed = j.value("seed", c.seed);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.augment = j.value("augment", c.augment);
  c.optimizer = j.value("optimizer", c.optimizer);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  if (j.contains("loss_weights")) {
    c.loss_weights.image_label =
        j["loss_weights"].value("image_label", c.loss_weights.image_label);
    c.loss_weights.mask = j["loss_weights"].value("mask", c.loss_weights.mask);
  }
  c.validate();
  return c;
}

ClassMapping ClassMapping::from_manifest(const DatasetManifest& m) {
  ClassMapping out;
  for (const auto& [id, name] : m.label_names) out.ids.push_back(id);
  std::sort(out.ids.begin(), out.ids.end());
  auto it = std::find(out.ids.begin(), out.ids.end(), m.unchanged_label_id);
  if (it == out.ids.end())
    throw std::invalid_argument("manifest: unchanged label id missing from label_names");
  out.unchanged_index = int(it - out.ids.begin());
  return out;
}

int ClassMapping::index_of(int label_id) const {
  auto it = std::lower_bound(ids.begin(), ids.end(), label_id);
  if (it == ids.end() || *it != label_id)
    throw std::invalid_argument("unknown label id " + std::to_string(label_id));
  return int(it - ids.begin());
}

ImagePair load_pair(const DatasetManifest& m, size_t index, int height,
                    int width) {
  const ManifestEntry& e = m.entries.at(index);
  ImagePair p;
  p.prev = load_image_rgb((fs::path(m.root) / e.prev_path).string());
  p.curr = load_image_rgb((fs::path(m.root) / e.curr_path).string());
  if (p.prev.height != height || p.prev.width != width)
    p.prev = resize_bilinear(p.prev, height, width);
  if (p.curr.height != height || p.curr.width != width)
    p.curr = resize_bilinear(p.curr, height, width);
  if (!e.mask_path.empty()) {
    int mh = 0, mw = 0;
    auto mask = load_mask((fs::path(m.root) / e.mask_path).string(), &mh, &mw);
    if (mh != height || mw != width)
      mask = resize_mask_nearest(mask, mh, mw, height, width);
    p.mask = std::move(mask);
  }
  p.label_id = e.label_id;
  return p;
}

std::pair<DatasetManifest, DatasetManifest> split_manifest(
    const DatasetManifest& m, double val_fraction) {
  if (val_fraction <= 0 || val_fraction >= 1)
    throw std::invalid_argument("val_fraction must be in (0,1)");
  const size_t n = m.entries.size();
  const size_t n_val = std::max<size_t>(1, size_t(std::llround(val_fraction * double(n))));
  if (n_val >= n) throw std::invalid_argument("split leaves no training data");
  DatasetManifest train = m, val = m;
  train.entries.assign(m.entries.begin(), m.entries.end() - ptrdiff_t(n_val));
  val.entries.assign(m.entries.end() - ptrdiff_t(n_val), m.entries.end());
  return {train, val};
}

Model model_from_checkpoint(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  ModelConfig mc = ModelConfig::from_json(ckpt.meta);
  Model model(mc);
  load_model_state(model, ckpt);
  return model;
}

TrainResult train_stage1(const ModelConfig& base_config,
                         const DatasetManifest& train_set,
                         const DatasetManifest& val_set, const TrainConfig& cfg,
                         const std::string& out_dir, bool resume,
                         const std::string& init_checkpoint) {
  ClassMapping mapping = ClassMapping::from_manifest(train_set);
  ModelConfig mc = base_config;
  mc.crf_enabled = false;
  mc.alpha = cfg.alpha_train;
  mc.num_classes = int(mapping.ids.size());
  mc.unchanged_class_index = mapping.unchanged_index;
  mc.validate();
  Model model(mc, cfg.seed);
  if (!resume && !init_checkpoint.empty())
    load_model_state_partial(model, load_checkpoint(init_checkpoint));
  return run_training(model, train_set, val_set, cfg, cfg.learning_rate,
                      out_dir, resume, mapping);
}

TrainResult finetune_stage2(const std::string& stage1_checkpoint,
                            const DatasetManifest& train_set,
                            const DatasetManifest& val_set,
                            const TrainConfig& cfg, const std::string& out_dir,
                            bool resume) {
  ClassMapping mapping = ClassMapping::from_manifest(train_set);
  Checkpoint ckpt = load_checkpoint(stage1_checkpoint);
  ModelConfig mc = ModelConfig::from_json(ckpt.meta);
  if (mc.num_classes != int(mapping.ids.size()))
    throw std::invalid_argument("checkpoint class count does not match dataset");
  mc.crf_enabled = true;
  mc.alpha = cfg.alpha_finetune;
  mc.validate();
  Model model(mc, cfg.seed + 1);
  load_model_state(model, ckpt);  // crf.* weights stay freshly initialized
  return run_training(model, train_set, val_set, cfg,
                      cfg.learning_rate * cfg.finetune_lr_factor, out_dir,
                      resume, mapping);
}

MetricsReport evaluate(Model& model, const DatasetManifest& split,
                       const ClassMapping& mapping) {
  if (split.entries.empty()) throw std::invalid_argument("evaluate: empty split");
  const auto& mc = model.config();
  std::vector<std::vector<double>> probs;
  std::vector<int> labels;
  std::vector<double> change_scores;
  std::vector<uint8_t> change_labels;
  int64_t binary_hits = 0;
  ConfusionCounts seg;
  bool any_mask = false;

  for (size_t i = 0; i < split.entries.size(); ++i) {
    ImagePair pair = load_pair(split, i, mc.input_height, mc.input_width);
    const int gt_index = mapping.index_of(pair.label_id);
    ModelOutput o = model.predict_pair(pair);
    probs.push_back(o.class_probabilities);
    labels.push_back(gt_index);
    const double p_unchanged =
        o.class_probabilities[size_t(mapping.unchanged_index)];
    change_scores.push_back(1.0 - p_unchanged);
    const bool gt_changed = gt_index != mapping.unchanged_index;
    const bool pred_changed = o.predicted_label != mapping.unchanged_index;
    change_labels.push_back(gt_changed ? 1 : 0);
    if (gt_changed == pred_changed) ++binary_hits;
    if (pair.mask) {
      any_mask = true;
      seg += confusion(o.binary_mask, *pair.mask);
    }
  }

  MetricsReport r;
  r.top1 = topk_accuracy(probs, labels, 1);
  r.top5 = topk_accuracy(probs, labels, std::min(5, mc.num_classes));
  r.accuracy = double(binary_hits) / double(split.entries.size());
  bool any_positive =
      std::any_of(change_labels.begin(), change_labels.end(),
                  [](uint8_t v) { return v == 1; });
  if (any_positive) {
    r.ap = average_precision(change_scores, change_labels);
  } else {
    std::cerr << "evaluate: no changed pairs in split, reporting AP = 0\n";
    r.ap = 0;
  }
  if (any_mask) {
    r.miou = miou(seg);
    r.miou_change_class = iou_change(seg);
    KappaDiceTotalAcc k = kappa_dice_totalacc(seg);
    r.kappa = k.kappa;
    r.dice = k.dice;
    r.total_accuracy = k.total_accuracy;
  }
  return r;
}

void predict_to_files(Model& model, const ImagePair& pair,
                      const std::map<int, std::string>& label_names,
                      const ClassMapping& mapping, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const auto& mc = model.config();
  ModelOutput o = model.predict_pair(pair);
  save_soft_mask(o.change_mask, mc.input_height, mc.input_width,
                 (fs::path(out_dir) / "mask_soft.png").string());
  save_mask(o.binary_mask, mc.input_height, mc.input_width,
            (fs::path(out_dir) / "mask_binary.png").string());
  json j;
  const int label_id = mapping.ids.at(size_t(o.predicted_label));
  j["predicted_label_id"] = label_id;
  auto it = label_names.find(label_id);
  j["predicted_label_name"] = it == label_names.end() ? "" : it->second;
  j["predicted_changed"] = o.predicted_label != mapping.unchanged_index;
  j["class_probabilities"] = o.class_probabilities;
  std::ofstream((fs::path(out_dir) / "prediction.json").string())
      << j.dump(2) << "\n";
}

}  // namespace wcdnet
