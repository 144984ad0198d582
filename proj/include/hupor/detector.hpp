#pragma once

// stacked-hourglass detector over rendered scene features, its visible-only
// training objective, and the seeded training loop.

#include <string>
#include <vector>

#include "hupor/nn.hpp"
#include "hupor/raster.hpp"
#include "hupor/targets.hpp"

namespace hupor {

struct DetectorConfig {
  int stacks = 2;
  int base_channels = 16;
  int input_channels = kFeatureChannels;
  int hourglass_depth = 3;        // heatmap dims must be divisible by 2^depth
  double root_scale = 512.0;      // scales the root head so raw outputs stay O(1)
  double paf_depth_scale = 512.0; // same idea for the millimetre paf depth channels

  void validate() const {
    if (stacks < 1) throw validation_error("detector stacks must be >= 1");
    if (base_channels < 1) throw validation_error("detector base_channels must be >= 1");
    if (input_channels < 1) throw validation_error("detector input_channels must be >= 1");
    if (hourglass_depth < 1) throw validation_error("detector hourglass_depth must be >= 1");
    if (root_scale <= 0) throw validation_error("detector root_scale must be positive");
    if (paf_depth_scale <= 0) throw validation_error("detector paf_depth_scale must be positive");
  }
};

struct LossWeights {
  double lam_k_vis = 1.0, lam_p_vis = 1.0, lam_r_vis = 0.1;
  double lam_k_all = 1.0, lam_p_all = 1.0;
  double lam_k_occ = 1.0, lam_p_occ = 1.0;
  double omega_extract = 1.0;

  void validate() const {
    for (double v : {lam_k_vis, lam_p_vis, lam_r_vis, lam_k_all, lam_p_all, lam_k_occ, lam_p_occ,
                     omega_extract})
      if (v < 0 || !std::isfinite(v)) throw validation_error("loss weights must be non-negative");
  }
};

struct Detector {
  DetectorConfig config;
  Conv2d stem1, stem2;
  ReLU stem_relu1, stem_relu2;
  ResBlock stem_res;

  struct Stack {
    Hourglass hg;
    ResBlock post;
    Conv2d k_head, p_head, r_head;
    // feeds features and predictions back into the next stack's input
    Conv2d remap_f, remap_k, remap_p, remap_r;
    bool has_remap = false;
  };
  std::vector<Stack> stacks;

  explicit Detector(const DetectorConfig& cfg = {}) : config(cfg) {
    config.validate();
    const int base = config.base_channels;
    const int mid = std::max(4, base / 2);
    stem1 = Conv2d(config.input_channels, mid, 3, 2);
    stem2 = Conv2d(mid, base, 3, 2);
    stem_res = ResBlock(base);
    stacks.resize(config.stacks);
    for (int s = 0; s < config.stacks; ++s) {
      Stack& st = stacks[s];
      st.hg = Hourglass(config.hourglass_depth, base);
      st.post = ResBlock(base);
      st.k_head = Conv2d(base, kJoints, 1);
      st.p_head = Conv2d(base, kPafChannels, 1);
      st.r_head = Conv2d(base, kRootChannels, 1);
      st.has_remap = s + 1 < config.stacks;
      if (st.has_remap) {
        st.remap_f = Conv2d(base, base, 1);
        st.remap_k = Conv2d(kJoints, base, 1);
        st.remap_p = Conv2d(kPafChannels, base, 1);
        st.remap_r = Conv2d(kRootChannels, base, 1);
      }
    }
  }

  void init(Rng& rng) {
    stem1.init(rng);
    stem2.init(rng);
    stem_res.init(rng);
    for (Stack& st : stacks) {
      st.hg.init(rng);
      st.post.init(rng);
      st.k_head.init(rng);
      st.p_head.init(rng);
      st.r_head.init(rng);
      if (st.has_remap) {
        st.remap_f.init(rng);
        st.remap_k.init(rng);
        st.remap_p.init(rng);
        st.remap_r.init(rng);
      }
    }
  }

  // one HeatmapSet per stack; the last entry is the detector's prediction.
  std::vector<HeatmapSet> forward(const Grid& features, bool train) {
    if (features.c != config.input_channels)
      throw validation_error("detector input channel mismatch");
    if (features.h % kStride != 0 || features.w % kStride != 0)
      throw validation_error("detector input dims must be divisible by the stride");
    Grid x = stem_res.forward(stem_relu2.forward(stem2.forward(stem_relu1.forward(stem1.forward(features, train), train), train), train), train);
    std::vector<HeatmapSet> out;
    out.reserve(stacks.size());
    for (Stack& st : stacks) {
      const Grid y = st.hg.forward(x, train);
      const Grid f = st.post.forward(y, train);
      HeatmapSet maps;
      maps.keypoints = st.k_head.forward(f, train);
      const Grid p_raw = st.p_head.forward(f, train);
      const Grid r_raw = st.r_head.forward(f, train);
      maps.pafs = p_raw;
      for (int e = 0; e < kEdges; ++e)
        for (int y2 = 0; y2 < maps.pafs.h; ++y2)
          for (int x2 = 0; x2 < maps.pafs.w; ++x2)
            maps.pafs.at(3 * e + 2, y2, x2) *= config.paf_depth_scale;
      maps.root_depth = r_raw;
      for (double& v : maps.root_depth.data) v *= config.root_scale;
      if (st.has_remap) {
        Grid next = x;
        grid_add_inplace(next, st.remap_f.forward(f, train));
        grid_add_inplace(next, st.remap_k.forward(maps.keypoints, train));
        grid_add_inplace(next, st.remap_p.forward(p_raw, train));
        grid_add_inplace(next, st.remap_r.forward(r_raw, train));
        x = std::move(next);
      }
      out.push_back(std::move(maps));
    }
    return out;
  }

  // accumulates parameter gradients for per-stack prediction gradients.
  void backward(const std::vector<HeatmapSet>& grads) {
    if (grads.size() != stacks.size())
      throw validation_error("detector backward expects one gradient set per stack");
    Grid dx_next;  // gradient w.r.t. the next stack's input
    for (int s = static_cast<int>(stacks.size()) - 1; s >= 0; --s) {
      Stack& st = stacks[s];
      Grid dk = grads[s].keypoints;
      Grid dp = grads[s].pafs;
      for (int e = 0; e < kEdges; ++e)
        for (int y2 = 0; y2 < dp.h; ++y2)
          for (int x2 = 0; x2 < dp.w; ++x2) dp.at(3 * e + 2, y2, x2) *= config.paf_depth_scale;
      Grid dr_raw = grads[s].root_depth;
      for (double& v : dr_raw.data) v *= config.root_scale;
      Grid df;
      if (st.has_remap) {
        grid_add_inplace(dk, st.remap_k.backward(dx_next));
        grid_add_inplace(dp, st.remap_p.backward(dx_next));
        grid_add_inplace(dr_raw, st.remap_r.backward(dx_next));
        df = st.remap_f.backward(dx_next);
        grid_add_inplace(df, st.k_head.backward(dk));
      } else {
        df = st.k_head.backward(dk);
      }
      grid_add_inplace(df, st.p_head.backward(dp));
      grid_add_inplace(df, st.r_head.backward(dr_raw));
      Grid dx = st.hg.backward(st.post.backward(df));
      if (st.has_remap) grid_add_inplace(dx, dx_next);  // identity path into the next stack
      dx_next = std::move(dx);
    }
    stem1.backward(stem_relu1.backward(
        stem2.backward(stem_relu2.backward(stem_res.backward(dx_next)))));
  }

  void visit_params(const ParamVisitor& fn) {
    stem1.visit("stem1", fn);
    stem2.visit("stem2", fn);
    stem_res.visit("stem_res", fn);
    for (size_t s = 0; s < stacks.size(); ++s) {
      const std::string p = "stack" + std::to_string(s);
      Stack& st = stacks[s];
      st.hg.visit(p + ".hg", fn);
      st.post.visit(p + ".post", fn);
      st.k_head.visit(p + ".k_head", fn);
      st.p_head.visit(p + ".p_head", fn);
      st.r_head.visit(p + ".r_head", fn);
      if (st.has_remap) {
        st.remap_f.visit(p + ".remap_f", fn);
        st.remap_k.visit(p + ".remap_k", fn);
        st.remap_p.visit(p + ".remap_p", fn);
        st.remap_r.visit(p + ".remap_r", fn);
      }
    }
  }
};

struct VisLossBreakdown {
  double keypoints = 0, pafs = 0, root = 0, total = 0;
};

// visible-only detection loss, summed over stacks: squared error to the
// visible keypoint and paf targets plus an l1 penalty on the root-depth maps
// sampled at ground-truth visible torso-joint cells.
inline double loss_vis(const std::vector<HeatmapSet>& preds, const TargetBundle& targets,
                       const std::vector<RootSample>& roots, const LossWeights& weights,
                       std::vector<HeatmapSet>* grads = nullptr,
                       VisLossBreakdown* breakdown = nullptr) {
  weights.validate();
  if (preds.empty()) throw validation_error("loss_vis needs at least one prediction stack");
  VisLossBreakdown bd;
  if (grads) grads->assign(preds.size(), HeatmapSet{});
  for (size_t s = 0; s < preds.size(); ++s) {
    const HeatmapSet& pred = preds[s];
    validate_heatmap_set(pred);
    if (!pred.keypoints.same_shape(targets.visible.keypoints))
      throw validation_error("loss_vis prediction/target shape mismatch");
    if (!grid_finite(pred.keypoints) || !grid_finite(pred.pafs) || !grid_finite(pred.root_depth))
      throw convergence_error("loss_vis: non-finite prediction");
    HeatmapSet* g = grads ? &(*grads)[s] : nullptr;
    if (g) *g = make_heatmap_set(pred.keypoints.h, pred.keypoints.w);
    for (size_t i = 0; i < pred.keypoints.data.size(); ++i) {
      const double d = pred.keypoints.data[i] - targets.visible.keypoints.data[i];
      bd.keypoints += weights.lam_k_vis * d * d;
      if (g) g->keypoints.data[i] = 2.0 * weights.lam_k_vis * d;
    }
    for (size_t i = 0; i < pred.pafs.data.size(); ++i) {
      const double d = pred.pafs.data[i] - targets.visible.pafs.data[i];
      bd.pafs += weights.lam_p_vis * d * d;
      if (g) g->pafs.data[i] = 2.0 * weights.lam_p_vis * d;
    }
    for (const RootSample& r : roots) {
      const double d = pred.root_depth.at(r.slot, r.y, r.x) - r.zhat;
      bd.root += weights.lam_r_vis * std::abs(d);
      if (g) {
        const double sign = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
        g->root_depth.at(r.slot, r.y, r.x) += weights.lam_r_vis * sign;
      }
    }
  }
  bd.total = bd.keypoints + bd.pafs + bd.root;
  if (breakdown) *breakdown = bd;
  return bd.total;
}

// everything the losses need for one scene, generated deterministically from
// the scene itself.
struct TrainSample {
  Grid features;
  OcclusionLabels labels;
  TargetBundle targets;
  std::vector<RootSample> roots;
};

inline TrainSample make_train_sample(const Scene& scene, bool treat_occluded_visible = false) {
  TrainSample sample;
  sample.features = render_features(scene);
  sample.labels = scene_labels(scene);
  if (treat_occluded_visible)
    for (auto& row : sample.labels.labels)
      for (int& l : row)
        if (l == 1) l = 2;
  const std::vector<Pose3D> poses = scene_poses(scene);
  sample.targets = split_by_visibility(poses, scene.camera, sample.labels);
  sample.roots = visible_root_samples(poses, scene.camera, sample.labels);
  return sample;
}

struct TrainOptions {
  int epochs = 1;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  bool all_joint_supervision = false;  // ablation: treat occluded joints as visible
};

struct LossCurvePoint {
  int epoch = 0;
  std::string term;
  double value = 0;
};

inline Detector train_detector(const std::vector<Scene>& scenes, const DetectorConfig& config,
                               const LossWeights& weights, const TrainOptions& opts,
                               std::vector<LossCurvePoint>* curve = nullptr) {
  if (scenes.empty()) throw validation_error("train_detector needs a non-empty dataset");
  weights.validate();
  Detector net(config);
  Rng init_rng(opts.seed);
  net.init(init_rng);
  Adam adam;
  adam.lr = opts.lr;
  Rng order_rng(opts.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<int> order(scenes.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    shuffle_indices(order, order_rng);
    VisLossBreakdown epoch_sum;
    for (int idx : order) {
      const TrainSample sample = make_train_sample(scenes[idx], opts.all_joint_supervision);
      const TargetBundle& t = sample.targets;
      // under the ablation every labelled joint is visible, so t.visible
      // already carries the all-joints supervision
      std::vector<HeatmapSet> preds = net.forward(sample.features, true);
      std::vector<HeatmapSet> grads;
      VisLossBreakdown bd;
      const double loss = loss_vis(preds, t, sample.roots, weights, &grads, &bd);
      if (!std::isfinite(loss))
        throw convergence_error("train_detector: non-finite loss at epoch " +
                                std::to_string(epoch) + " scene " + std::to_string(idx));
      zero_grads(net);
      net.backward(grads);
      adam.step(net);
      epoch_sum.keypoints += bd.keypoints;
      epoch_sum.pafs += bd.pafs;
      epoch_sum.root += bd.root;
      epoch_sum.total += bd.total;
    }
    if (curve) {
      const double n = static_cast<double>(scenes.size());
      curve->push_back({epoch, "k_vis", epoch_sum.keypoints / n});
      curve->push_back({epoch, "p_vis", epoch_sum.pafs / n});
      curve->push_back({epoch, "r_vis", epoch_sum.root / n});
      curve->push_back({epoch, "total", epoch_sum.total / n});
    }
  }
  return net;
}

}  // namespace hupor
