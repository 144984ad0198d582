#pragma once

// pose completion: a small fully-connected network that imputes missing
// joints of a lifted 3d pose and denoises the present ones, operating on
// root-relative coordinates normalized by torso length. present joints are
// residual-clamped to a trust radius; imputed bones are clamped to sane
// lengths.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "hupor/assembly.hpp"
#include "hupor/body.hpp"
#include "hupor/core.hpp"
#include "hupor/nn.hpp"
#include "hupor/rng.hpp"
#include "hupor/scene.hpp"

namespace hupor {

inline constexpr int kRefineInputs = 4 * kJoints;   // (x, y, z, present) per joint
inline constexpr int kRefineOutputs = 3 * kJoints;  // root-relative position per joint
inline constexpr double kFallbackTorso = 520.0;     // canonical pelvis-to-neck length, mm

struct RefineConfig {
  int hidden = 128;
  double trust_radius = 150.0;  // mm a present joint may move
  int min_joints = 8;           // fewer present joints: pass-through

  void validate() const {
    if (hidden < 1) throw validation_error("refine hidden width must be positive");
    if (!(trust_radius >= 0)) throw validation_error("refine trust radius must be non-negative");
    if (min_joints < 1 || min_joints > kJoints)
      throw validation_error("refine minimum joint count out of range");
  }
};

struct RefineNet {
  RefineConfig config;
  Conv2d fc1, fc2, fc3;
  ReLU act1, act2;

  explicit RefineNet(const RefineConfig& cfg = {})
      : config((cfg.validate(), cfg)),
        fc1(kRefineInputs, cfg.hidden, 1),
        fc2(cfg.hidden, cfg.hidden, 1),
        fc3(cfg.hidden, kRefineOutputs, 1) {}

  void init(Rng& rng) {
    fc1.init(rng);
    fc2.init(rng);
    fc3.init(rng);
  }

  Grid forward(const Grid& x, bool train) {
    return fc3.forward(act2.forward(fc2.forward(act1.forward(fc1.forward(x, train), train), train), train), train);
  }

  Grid backward(const Grid& dy) {
    return fc1.backward(act1.backward(fc2.backward(act2.backward(fc3.backward(dy)))));
  }

  void visit_params(const ParamVisitor& fn) {
    fc1.visit("refine.fc1", fn);
    fc2.visit("refine.fc2", fn);
    fc3.visit("refine.fc3", fn);
  }
};

// torso length used to normalize coordinates: measured when the neck is
// present, canonical otherwise.
inline double torso_scale(const Pose3D& pose, const std::array<bool, kJoints>& present) {
  if (present[kNeck] && present[kPelvis]) {
    const double s = norm(pose.joints[kNeck] - pose.joints[kPelvis]);
    if (s > 1e-6) return s;
  }
  return kFallbackTorso;
}

inline Grid encode_refine_input(const Pose3D& pose, const std::array<bool, kJoints>& present,
                                double scale) {
  if (!(scale > 0)) throw validation_error("refine input scale must be positive");
  Grid x(kRefineInputs, 1, 1);
  const V3d root = pose.joints[kPelvis];
  for (int j = 0; j < kJoints; ++j) {
    if (!present[j]) continue;
    const V3d rel = (pose.joints[j] - root) / scale;
    x.at(4 * j, 0, 0) = rel.x;
    x.at(4 * j + 1, 0, 0) = rel.y;
    x.at(4 * j + 2, 0, 0) = rel.z;
    x.at(4 * j + 3, 0, 0) = 1.0;
  }
  return x;
}

// mean squared error over the 45 normalized outputs; gradients are assigned.
inline double refine_loss(const Grid& pred, const Grid& target, Grid* d_pred = nullptr) {
  if (!pred.same_shape(target)) throw validation_error("refine loss shape mismatch");
  if (d_pred) *d_pred = Grid(pred.c, pred.h, pred.w);
  double sum = 0;
  const double inv = 1.0 / static_cast<double>(pred.data.size());
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double diff = pred.data[i] - target.data[i];
    sum += diff * diff * inv;
    if (d_pred) d_pred->data[i] = 2.0 * diff * inv;
  }
  return sum;
}

// completes a partial pose. with fewer than config.min_joints present (or no
// pelvis to anchor the frame) the input passes through untouched. present
// joints move at most trust_radius from their input; imputed bones are
// clamped to [0.5, 2] times the canonical length, walking the tree outward.
inline Pose3D refine_pose(RefineNet& net, const Pose3D& pose,
                          const std::array<bool, kJoints>& present, bool* applied = nullptr) {
  if (applied) *applied = false;
  const int count = static_cast<int>(std::count(present.begin(), present.end(), true));
  if (count < net.config.min_joints || !present[kPelvis]) return pose;
  if (applied) *applied = true;

  const double scale = torso_scale(pose, present);
  const Grid out = net.forward(encode_refine_input(pose, present, scale), false);
  const V3d root = pose.joints[kPelvis];

  Pose3D result = pose;
  result.joints[kPelvis] = root;
  for (int j = 0; j < kJoints; ++j) {
    if (j == kPelvis) continue;
    const V3d predicted =
        root + V3d{out.at(3 * j, 0, 0), out.at(3 * j + 1, 0, 0), out.at(3 * j + 2, 0, 0)} * scale;
    if (present[j]) {
      V3d delta = predicted - pose.joints[j];
      const double d = norm(delta);
      if (d > net.config.trust_radius) delta = delta * (net.config.trust_radius / d);
      result.joints[j] = pose.joints[j] + delta;
    } else {
      result.joints[j] = predicted;
    }
  }

  const SkeletonSpec& sk = skeleton();
  const auto& off = template_offsets();
  for (int e = 0; e < kEdges; ++e) {
    const auto [pj, cj] = sk.edges[e];
    if (present[cj]) continue;  // measured joints keep their trust-clamped spot
    const double canon = norm(off[cj]);
    V3d bone = result.joints[cj] - result.joints[pj];
    const double len = norm(bone);
    if (len < 1e-9) bone = normalized(off[cj]) * (0.5 * canon);
    else bone = bone * (std::clamp(len, 0.5 * canon, 2.0 * canon) / len);
    result.joints[cj] = result.joints[pj] + bone;
  }
  return result;
}

// pipeline hook: impute the unlifted joints of a decoded person in place.
inline void complete_person(RefineNet& net, PersonEstimate& person) {
  if (!person.pose3d) return;
  bool applied = false;
  const Pose3D refined = refine_pose(net, *person.pose3d, person.lifted, &applied);
  if (!applied) return;
  person.pose3d = refined;
  for (int j = 0; j < kJoints; ++j) {
    if (!person.lifted[j]) {
      person.provenance[j] = JointSource::refined;
      person.lifted[j] = true;
    }
  }
}

struct RefineTrainOptions {
  int epochs = 30;
  double lr = 1e-3;
  unsigned long long seed = 1;
  double dropout_min = 0.1, dropout_max = 0.4;  // per-sample joint dropout rate
  double noise_mm = 10.0;                       // jitter on present joints

  void validate() const {
    if (epochs < 1) throw validation_error("refine training needs at least one epoch");
    if (!(lr > 0)) throw validation_error("refine learning rate must be positive");
    if (!(dropout_min >= 0 && dropout_max <= 0.9 && dropout_min <= dropout_max))
      throw validation_error("refine dropout range is invalid");
    if (!(noise_mm >= 0)) throw validation_error("refine noise must be non-negative");
  }
};

namespace detail {

// random joint dropout that always keeps the pelvis and at least min_joints
// joints present, so every sample exercises the non-trivial branch.
inline std::array<bool, kJoints> sample_dropout(Rng& rng, double rate, int min_joints) {
  std::array<bool, kJoints> present;
  present.fill(true);
  for (int j = 0; j < kJoints; ++j)
    if (j != kPelvis && rng.canonical() < rate) present[j] = false;
  for (int j = 0; j < kJoints; ++j) {
    if (std::count(present.begin(), present.end(), true) >= min_joints) break;
    present[j] = true;
  }
  return present;
}

}  // namespace detail

struct RefineCurvePoint {
  int epoch = 0;
  double loss = 0;
};

// trains the completion net on ground-truth poses with random joint dropout
// and millimetre jitter; the target is always the full pose.
inline RefineNet train_refine(const std::vector<Scene>& scenes, const RefineConfig& config,
                              const RefineTrainOptions& opts,
                              std::vector<RefineCurvePoint>* curve = nullptr) {
  opts.validate();
  std::vector<const Pose3D*> poses;
  for (const Scene& scene : scenes)
    for (const PosedBody& person : scene.people) poses.push_back(&person.pose);
  if (poses.empty()) throw validation_error("refine training needs at least one person");

  RefineNet net(config);
  Rng init_rng(opts.seed);
  net.init(init_rng);
  Adam adam;
  adam.lr = opts.lr;
  Rng order_rng(opts.seed ^ 0x9e3779b97f4a7c15ull);
  Rng sample_rng(opts.seed ^ 0xc2b2ae3d27d4eb4full);

  std::vector<int> order(poses.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    shuffle_indices(order, order_rng);
    double epoch_loss = 0;
    for (int idx : order) {
      const Pose3D& truth = *poses[idx];
      const double rate = sample_rng.uniform(opts.dropout_min, opts.dropout_max);
      const std::array<bool, kJoints> present =
          detail::sample_dropout(sample_rng, rate, config.min_joints);

      std::array<bool, kJoints> all_present;
      all_present.fill(true);
      const double scale = torso_scale(truth, all_present);
      Grid x = encode_refine_input(truth, present, scale);
      for (int j = 0; j < kJoints; ++j) {
        if (!present[j]) continue;
        for (int c = 0; c < 3; ++c)
          x.at(4 * j + c, 0, 0) += sample_rng.normal(0.0, opts.noise_mm) / scale;
      }

      Grid target(kRefineOutputs, 1, 1);
      const V3d root = truth.joints[kPelvis];
      for (int j = 0; j < kJoints; ++j) {
        const V3d rel = (truth.joints[j] - root) / scale;
        target.at(3 * j, 0, 0) = rel.x;
        target.at(3 * j + 1, 0, 0) = rel.y;
        target.at(3 * j + 2, 0, 0) = rel.z;
      }

      const Grid pred = net.forward(x, true);
      Grid d_pred;
      const double loss = refine_loss(pred, target, &d_pred);
      if (!std::isfinite(loss))
        throw convergence_error("refine training diverged at epoch " + std::to_string(epoch));
      zero_grads(net);
      net.backward(d_pred);
      adam.step(net);
      epoch_loss += loss;
    }
    if (curve) curve->push_back({epoch, epoch_loss / static_cast<double>(poses.size())});
  }
  return net;
}

}  // namespace hupor
