#pragma once

// capsule-body shape fitting: recover shape and pose parameters for one
// person from target joints and a silhouette mask.  the objective combines
// parameter priors (when ground truth is available), a 3d joint term, and a
// soft silhouette term; its gradient is exact — dual numbers carry the
// kinematics jacobian and the per-pixel silhouette chain rule is analytic.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "hupor/body.hpp"
#include "hupor/core.hpp"
#include "hupor/dual.hpp"
#include "hupor/grid.hpp"
#include "hupor/raster.hpp"

namespace hupor {

constexpr int kFitParams = kShapeParams + 3 * kEdges + 3;  // beta, theta, translation
using FitVec = std::array<double, kFitParams>;
using FitDual = Dual<kFitParams>;

struct SSFWeights {
  double lambda_beta = 1.0, lambda_theta = 1.0, lambda_pos = 1.0, lambda_sil = 1.0;

  void validate() const {
    for (double v : {lambda_beta, lambda_theta, lambda_pos, lambda_sil})
      if (v < 0 || !std::isfinite(v)) throw validation_error("fit weights must be non-negative");
  }
};

struct SSFBreakdown {
  double beta = 0, theta = 0, pose = 0, sil = 0, total = 0;
};

struct SilhouetteParams {
  double sharpness = 0.5;   // sigmoid width of the occupancy edge, pixels
  double smooth_min = 0.5;  // temperature of the union over capsules, pixels
};

inline FitVec pack_fit(const CapsuleShape& shape, const CapsulePose& pose) {
  FitVec p{};
  for (int i = 0; i < kShapeParams; ++i) p[i] = shape.beta[i];
  for (int e = 0; e < kEdges; ++e) {
    p[kShapeParams + 3 * e + 0] = pose.theta[e].x;
    p[kShapeParams + 3 * e + 1] = pose.theta[e].y;
    p[kShapeParams + 3 * e + 2] = pose.theta[e].z;
  }
  p[kFitParams - 3] = pose.root_translation.x;
  p[kFitParams - 2] = pose.root_translation.y;
  p[kFitParams - 1] = pose.root_translation.z;
  return p;
}

inline std::pair<CapsuleShape, CapsulePose> unpack_fit(const FitVec& p) {
  CapsuleShape shape;
  CapsulePose pose;
  for (int i = 0; i < kShapeParams; ++i) shape.beta[i] = p[i];
  for (int e = 0; e < kEdges; ++e)
    pose.theta[e] = {p[kShapeParams + 3 * e + 0], p[kShapeParams + 3 * e + 1],
                     p[kShapeParams + 3 * e + 2]};
  pose.root_translation = {p[kFitParams - 3], p[kFitParams - 2], p[kFitParams - 1]};
  return {shape, pose};
}

// clamp shape parameters to their legal box and rewrap any over-long
// axis-angle; translation is unconstrained.
inline FitVec project_fit(FitVec p) {
  for (int i = 0; i < 7; ++i) p[i] = std::clamp(p[i], 20.0, 200.0);
  for (int i = 7; i < 10; ++i) p[i] = std::clamp(p[i], 0.7, 1.3);
  for (int e = 0; e < kEdges; ++e) {
    V3d w{p[kShapeParams + 3 * e], p[kShapeParams + 3 * e + 1], p[kShapeParams + 3 * e + 2]};
    if (norm(w) > M_PI) {
      w = wrap_axis_angle(w);
      p[kShapeParams + 3 * e] = w.x;
      p[kShapeParams + 3 * e + 1] = w.y;
      p[kShapeParams + 3 * e + 2] = w.z;
    }
  }
  return p;
}

// --- closed-form initialization ---------------------------------------------

// estimate shape parameters from a skeleton alone: the torso sets the global
// bone-length scale, shoulder/hip offsets set the width scales, and radii
// take the template values times the global scale.  rotations cancel out
// because only segment lengths are measured.
inline CapsuleShape shape_init(const Pose3D& pose) {
  const auto& off = template_offsets();
  const double torso_template = norm(off[kNeck]);
  const double torso = norm(pose.joints[kNeck] - pose.joints[kPelvis]);
  if (torso < 1e-9) throw validation_error("shape_init: degenerate pose (zero-length torso)");
  const double scale = torso / torso_template;

  const double shoulder_template = norm(off[kLShoulder]);
  const double shoulder = 0.5 * (norm(pose.joints[kLShoulder] - pose.joints[kNeck]) +
                                 norm(pose.joints[kRShoulder] - pose.joints[kNeck]));
  const double hip_template = norm(off[kLHip]);
  const double hip = 0.5 * (norm(pose.joints[kLHip] - pose.joints[kPelvis]) +
                            norm(pose.joints[kRHip] - pose.joints[kPelvis]));

  CapsuleShape shape = template_shape();
  for (int i = 0; i < 7; ++i) shape.beta[i] = std::clamp(shape.beta[i] * scale, 20.0, 200.0);
  shape.beta[7] = std::clamp(scale, 0.7, 1.3);
  shape.beta[8] = std::clamp(shoulder / (shoulder_template * scale), 0.7, 1.3);
  shape.beta[9] = std::clamp(hip / (hip_template * scale), 0.7, 1.3);
  return shape;
}

// --- closed-form inverse kinematics ------------------------------------------

// recover per-edge swing rotations so forward kinematics reproduces the given
// joint directions exactly.  twist about the bone axis is unobservable from
// joint positions and is left at zero; bone lengths come from the shape, so
// joint positions match exactly only when the shape matches the skeleton.
inline CapsulePose skeleton_to_pose(const Pose3D& pose, const CapsuleShape& shape) {
  shape.validate();
  const auto& spec = skeleton();
  const auto& off = template_offsets();
  CapsulePose out;
  out.root_translation = pose.joints[kPelvis];
  std::array<M3d, kEdges> rot;
  for (int e = 0; e < kEdges; ++e) {
    const auto [parent, child] = spec.edges[e];
    const V3d bone = pose.joints[child] - pose.joints[parent];
    const double len = norm(bone);
    if (len < 1e-9)
      throw validation_error("skeleton_to_pose: zero-length bone at edge " + std::to_string(e));
    const M3d parent_rot = kParentEdge[e] < 0 ? M3d::identity() : rot[kParentEdge[e]];
    // directions in the parent frame: template bone vs observed bone
    const V3d want = normalized(parent_rot.transposed() * bone);
    const V3d have = normalized(off[child]);
    const V3d axis = cross(have, want);
    const double s = norm(axis), c = dot(have, want);
    V3d w{0, 0, 0};
    if (s > 1e-12) {
      w = axis * (std::atan2(s, c) / s);
    } else if (c < 0) {
      // antiparallel: rotate pi about any axis perpendicular to the bone
      V3d perp = cross(have, V3d{1, 0, 0});
      if (norm(perp) < 1e-6) perp = cross(have, V3d{0, 1, 0});
      w = normalized(perp) * M_PI;
    }
    out.theta[e] = w;
    rot[e] = kParentEdge[e] < 0 ? rodrigues(w) : rot[kParentEdge[e]] * rodrigues(w);
  }
  return out;
}

// --- soft silhouette ---------------------------------------------------------

namespace detail {

// a posed capsule projected to the image: 2d segment with per-end pixel radii.
struct Stadium {
  double ax, ay, bx, by, ra, rb;
  bool valid = false;
};

inline Stadium project_capsule(const Camera& cam, const Capsule& cap) {
  Stadium s;
  if (cap.a.z <= 1.0 || cap.b.z <= 1.0) return s;  // behind or on the camera
  s.ax = cam.focal * cap.a.x / cap.a.z + cam.cx;
  s.ay = cam.focal * cap.a.y / cap.a.z + cam.cy;
  s.bx = cam.focal * cap.b.x / cap.b.z + cam.cx;
  s.by = cam.focal * cap.b.y / cap.b.z + cam.cy;
  s.ra = cam.focal * cap.r / cap.a.z;
  s.rb = cam.focal * cap.r / cap.b.z;
  s.valid = true;
  return s;
}

// signed pixel distance from p to a stadium, with partials w.r.t. its six
// scalars.  the closest-point parameter t is differentiated only through the
// interpolated radius; the distance itself is stationary in t at the optimum.
struct StadiumDist {
  double d = 0;
  double dax = 0, day = 0, dbx = 0, dby = 0, dra = 0, drb = 0;
};

inline StadiumDist stadium_distance(const Stadium& s, double px, double py, bool with_grad) {
  StadiumDist out;
  const double segx = s.bx - s.ax, segy = s.by - s.ay;
  const double l2 = segx * segx + segy * segy;
  const double wx = px - s.ax, wy = py - s.ay;
  double t = 0;
  bool t_free = false;
  if (l2 > 1e-12) {
    const double t_raw = (wx * segx + wy * segy) / l2;
    t = std::clamp(t_raw, 0.0, 1.0);
    t_free = t_raw > 0.0 && t_raw < 1.0;
  }
  const double ux = wx - t * segx, uy = wy - t * segy;
  const double dist = std::sqrt(ux * ux + uy * uy);
  out.d = dist - (s.ra + t * (s.rb - s.ra));
  if (!with_grad) return out;

  const double inv = dist > 1e-9 ? 1.0 / dist : 0.0;
  const double hx = ux * inv, hy = uy * inv;  // unit vector toward the pixel
  out.dax = (t - 1.0) * hx;
  out.day = (t - 1.0) * hy;
  out.dbx = -t * hx;
  out.dby = -t * hy;
  out.dra = -(1.0 - t);
  out.drb = -t;
  if (t_free) {
    const double dr = s.rb - s.ra;
    const double dtax = (2.0 * t * segx - segx - wx) / l2;
    const double dtay = (2.0 * t * segy - segy - wy) / l2;
    const double dtbx = (wx - 2.0 * t * segx) / l2;
    const double dtby = (wy - 2.0 * t * segy) / l2;
    out.dax -= dr * dtax;
    out.day -= dr * dtay;
    out.dbx -= dr * dtbx;
    out.dby -= dr * dtby;
  }
  return out;
}

}  // namespace detail

// occupancy render of a capsule body: sigmoid of the signed distance to the
// smooth union of the projected capsules, evaluated at pixel centers.
inline Grid soft_silhouette(const CapsuleShape& shape, const CapsulePose& pose, const Camera& cam,
                            const SilhouetteParams& sil = {}) {
  cam.validate();
  const PosedBody body = pose_body(shape, pose);
  std::array<detail::Stadium, kBodyPrimitives> st;
  for (int i = 0; i < kBodyPrimitives; ++i) st[i] = detail::project_capsule(cam, body.capsules[i]);

  Grid out(1, cam.height, cam.width);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      double dmin = 1e18;
      std::array<double, kBodyPrimitives> dists;
      for (int i = 0; i < kBodyPrimitives; ++i) {
        dists[i] = st[i].valid
                       ? detail::stadium_distance(st[i], x + 0.5, y + 0.5, false).d
                       : 1e18;
        dmin = std::min(dmin, dists[i]);
      }
      double sum = 0;
      for (int i = 0; i < kBodyPrimitives; ++i)
        if (dists[i] < 1e17) sum += std::exp(-(dists[i] - dmin) / sil.smooth_min);
      const double d = sum > 0 ? dmin - sil.smooth_min * std::log(sum) : 1e18;
      const double a = std::clamp(d / sil.sharpness, -40.0, 40.0);
      out.at(0, y, x) = 1.0 / (1.0 + std::exp(a));
    }
  return out;
}

// full silhouette of one person, ignoring everyone and everything else.
inline Grid person_silhouette(const Scene& scene, int person_id) {
  if (person_id < 0 || person_id >= static_cast<int>(scene.people.size()))
    throw validation_error("person_silhouette: person id out of range");
  Scene solo;
  solo.camera = scene.camera;
  solo.people.push_back(scene.people[person_id]);
  const MaskSet masks = rasterize(solo);
  Grid out(1, scene.camera.height, scene.camera.width);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) out.at(0, y, x) = masks.instance(y, x) > 0 ? 1.0 : 0.0;
  return out;
}

// intersection over union of two occupancy grids, thresholded at 1/2.
inline double silhouette_iou(const Grid& a, const Grid& b) {
  if (!a.same_shape(b)) throw validation_error("silhouette_iou: shape mismatch");
  int inter = 0, uni = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const bool pa = a.data[i] > 0.5, pb = b.data[i] > 0.5;
    inter += pa && pb;
    uni += pa || pb;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

// --- the fitting objective ---------------------------------------------------

namespace detail {

// l2-norm prior term with gradient: ||x - ref||_2 over n slots starting at
// `base` in the packed layout.
inline double norm_prior(const FitVec& p, const double* ref, int base, int n, double lambda,
                         FitVec* grad) {
  double s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double d = p[base + i] - ref[i];
    s2 += d * d;
  }
  const double val = std::sqrt(s2);
  if (grad && val > 1e-12)
    for (int i = 0; i < n; ++i) (*grad)[base + i] += lambda * (p[base + i] - ref[i]) / val;
  return val;
}

}  // namespace detail

// weighted fitting loss.  ground-truth shape/pose priors participate only
// when given (test-time fitting has none); the joint term compares forward
// kinematics to the target skeleton in millimeters; the silhouette term is
// the mean squared difference between the soft occupancy render and the mask.
inline double loss_hs(const CapsuleShape& shape, const CapsulePose& pose,
                      const CapsuleShape* gt_shape, const CapsulePose* gt_pose,
                      const Pose3D& target_pose, const Grid& person_mask, const Camera& cam,
                      const SSFWeights& weights, SSFBreakdown* breakdown = nullptr,
                      FitVec* grad = nullptr, const SilhouetteParams& sil = {}) {
  weights.validate();
  cam.validate();
  if (person_mask.c != 1 || person_mask.h != cam.height || person_mask.w != cam.width)
    throw validation_error("loss_hs: person mask does not match the camera");

  const FitVec p = pack_fit(shape, pose);
  if (grad) grad->fill(0.0);
  SSFBreakdown bd;

  if (gt_shape) {
    const FitVec gt = pack_fit(*gt_shape, CapsulePose{});
    bd.beta = detail::norm_prior(p, gt.data(), 0, kShapeParams, weights.lambda_beta, grad);
  }
  if (gt_pose) {
    const FitVec gt = pack_fit(CapsuleShape{}, *gt_pose);
    bd.theta =
        detail::norm_prior(p, gt.data() + kShapeParams, kShapeParams, 3 * kEdges, weights.lambda_theta, grad);
  }

  // forward kinematics once in doubles for values; the dual pass (only when a
  // gradient is requested) carries the full parameter jacobian
  const JointArray<double> joints = fk_joints<double>(shape.beta, pose.theta, pose.root_translation);
  const auto prims = body_primitives<double>(joints, shape.beta);

  JointArray<FitDual> joints_d;
  std::array<CapsuleT<FitDual>, kBodyPrimitives> prims_d;
  if (grad) {
    std::array<FitDual, kShapeParams> beta_d;
    std::array<V3<FitDual>, kEdges> theta_d;
    for (int i = 0; i < kShapeParams; ++i) beta_d[i] = FitDual::var(p[i], i);
    for (int e = 0; e < kEdges; ++e)
      theta_d[e] = {FitDual::var(p[kShapeParams + 3 * e], kShapeParams + 3 * e),
                    FitDual::var(p[kShapeParams + 3 * e + 1], kShapeParams + 3 * e + 1),
                    FitDual::var(p[kShapeParams + 3 * e + 2], kShapeParams + 3 * e + 2)};
    const V3<FitDual> trans_d = {FitDual::var(p[kFitParams - 3], kFitParams - 3),
                                 FitDual::var(p[kFitParams - 2], kFitParams - 2),
                                 FitDual::var(p[kFitParams - 1], kFitParams - 1)};
    joints_d = fk_joints<FitDual>(beta_d, theta_d, trans_d);
    prims_d = body_primitives<FitDual>(joints_d, beta_d);
  }

  // joint position term, mm^2
  for (int j = 0; j < kJoints; ++j) {
    const V3d d = joints[j] - target_pose.joints[j];
    bd.pose += norm2(d);
    if (grad) {
      const V3<FitDual> dd = joints_d[j] - V3<FitDual>{FitDual(target_pose.joints[j].x),
                                                       FitDual(target_pose.joints[j].y),
                                                       FitDual(target_pose.joints[j].z)};
      for (int k = 0; k < kFitParams; ++k)
        (*grad)[k] += weights.lambda_pos *
                      2.0 * (d.x * dd.x.d[k] + d.y * dd.y.d[k] + d.z * dd.z.d[k]);
    }
  }

  // silhouette term: project capsules (with jacobians when needed), then the
  // per-pixel chain rule accumulates into the six scalars of each stadium
  std::array<detail::Stadium, kBodyPrimitives> st;
  for (int i = 0; i < kBodyPrimitives; ++i) st[i] = detail::project_capsule(cam, prims[i]);
  std::array<std::array<FitDual, 6>, kBodyPrimitives> st_d;
  if (grad) {
    for (int i = 0; i < kBodyPrimitives; ++i) {
      if (!st[i].valid) continue;
      const auto& c = prims_d[i];
      const FitDual f(cam.focal);
      st_d[i] = {f * c.a.x / c.a.z + FitDual(cam.cx), f * c.a.y / c.a.z + FitDual(cam.cy),
                 f * c.b.x / c.b.z + FitDual(cam.cx), f * c.b.y / c.b.z + FitDual(cam.cy),
                 f * c.r / c.a.z, f * c.r / c.b.z};
    }
  }

  std::array<std::array<double, 6>, kBodyPrimitives> sil_accum{};
  const double inv_px = 1.0 / (static_cast<double>(cam.width) * cam.height);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      std::array<detail::StadiumDist, kBodyPrimitives> dist;
      double dmin = 1e18;
      for (int i = 0; i < kBodyPrimitives; ++i) {
        dist[i].d = 1e18;
        if (st[i].valid) dist[i] = detail::stadium_distance(st[i], px, py, grad != nullptr);
        dmin = std::min(dmin, dist[i].d);
      }
      double sum = 0;
      std::array<double, kBodyPrimitives> wgt{};
      for (int i = 0; i < kBodyPrimitives; ++i)
        if (dist[i].d < 1e17) {
          wgt[i] = std::exp(-(dist[i].d - dmin) / sil.smooth_min);
          sum += wgt[i];
        }
      const double d = sum > 0 ? dmin - sil.smooth_min * std::log(sum) : 1e18;
      const double a = std::clamp(d / sil.sharpness, -40.0, 40.0);
      const double occ = 1.0 / (1.0 + std::exp(a));
      const double diff = occ - person_mask.at(0, y, x);
      bd.sil += diff * diff * inv_px;
      if (!grad || sum <= 0) continue;
      // d(loss)/d(d) through the sigmoid, then softmin weights per capsule
      const double docc = (std::abs(a) >= 40.0) ? 0.0 : -occ * (1.0 - occ) / sil.sharpness;
      const double dloss_dd = 2.0 * diff * inv_px * docc;
      for (int i = 0; i < kBodyPrimitives; ++i) {
        if (wgt[i] == 0.0) continue;
        const double w = dloss_dd * wgt[i] / sum;
        sil_accum[i][0] += w * dist[i].dax;
        sil_accum[i][1] += w * dist[i].day;
        sil_accum[i][2] += w * dist[i].dbx;
        sil_accum[i][3] += w * dist[i].dby;
        sil_accum[i][4] += w * dist[i].dra;
        sil_accum[i][5] += w * dist[i].drb;
      }
    }
  if (grad) {
    for (int i = 0; i < kBodyPrimitives; ++i) {
      if (!st[i].valid) continue;
      for (int s = 0; s < 6; ++s) {
        const double g = weights.lambda_sil * sil_accum[i][s];
        if (g == 0.0) continue;
        for (int k = 0; k < kFitParams; ++k) (*grad)[k] += g * st_d[i][s].d[k];
      }
    }
  }

  bd.total = weights.lambda_beta * bd.beta + weights.lambda_theta * bd.theta +
             weights.lambda_pos * bd.pose + weights.lambda_sil * bd.sil;
  if (!std::isfinite(bd.total)) throw convergence_error("loss_hs: non-finite loss");
  if (breakdown) *breakdown = bd;
  return bd.total;
}

// --- the optimizer -----------------------------------------------------------

// natural parameter scales used to precondition the gradient: radii and
// translation live in millimeters, width scales and rotations are O(1).
inline FitVec fit_scales() {
  FitVec s;
  for (int i = 0; i < 7; ++i) s[i] = 50.0;
  for (int i = 7; i < 10; ++i) s[i] = 0.2;
  for (int i = kShapeParams; i < kFitParams - 3; ++i) s[i] = 0.5;
  for (int i = kFitParams - 3; i < kFitParams; ++i) s[i] = 200.0;
  return s;
}

// projected, preconditioned gradient descent on the weak objective (joint +
// silhouette terms).  steps are accepted only when the loss does not get
// worse, so the final loss never exceeds the initial one; persistent
// above-tolerance increases raise a convergence error.
inline std::pair<CapsuleShape, CapsulePose> optimize_shape(
    const CapsuleShape& init_shape, const CapsulePose& init_pose, const Pose3D& target_pose,
    const Grid& person_mask, const Camera& cam, const SSFWeights& weights, int iters,
    std::vector<double>* loss_trace = nullptr, const SilhouetteParams& sil = {}) {
  weights.validate();
  if (iters < 1) throw validation_error("optimize_shape: iters must be >= 1");
  if (weights.lambda_pos == 0.0 && weights.lambda_sil == 0.0)
    return {init_shape, init_pose};  // nothing to optimize

  SSFWeights weak = weights;
  weak.lambda_beta = 0.0;
  weak.lambda_theta = 0.0;

  FitVec p = project_fit(pack_fit(init_shape, init_pose));
  auto eval = [&](const FitVec& q, FitVec* g) {
    const auto [shape, pose] = unpack_fit(q);
    return loss_hs(shape, pose, nullptr, nullptr, target_pose, person_mask, cam, weak, nullptr, g,
                   sil);
  };

  const FitVec scales = fit_scales();
  double lr = 0.0;
  double loss = eval(p, nullptr);
  if (loss_trace) loss_trace->push_back(loss);
  int bad_streak = 0;
  const double tol = 1e-12 * std::max(1.0, loss);

  for (int it = 0; it < iters; ++it) {
    FitVec g;
    eval(p, &g);
    if (lr == 0.0) {
      double gmax = 0;
      for (int k = 0; k < kFitParams; ++k) gmax = std::max(gmax, std::abs(scales[k] * g[k]));
      lr = gmax > 0 ? 0.02 / gmax : 1.0;
    }
    bool accepted = false;
    bool increased = false;
    for (int half = 0; half < 40; ++half) {
      FitVec trial = p;
      for (int k = 0; k < kFitParams; ++k) trial[k] -= lr * scales[k] * scales[k] * g[k];
      trial = project_fit(trial);
      const double trial_loss = eval(trial, nullptr);
      if (!std::isfinite(trial_loss))
        throw convergence_error("optimize_shape: non-finite loss at iteration " + std::to_string(it));
      if (trial_loss <= loss + tol) {
        if (trial_loss <= loss) {  // never report a worse loss than we started with
          p = trial;
          loss = trial_loss;
        }
        accepted = true;
        lr *= 1.3;
        break;
      }
      increased = true;
      lr *= 0.5;
      if (lr < 1e-14) break;
    }
    if (loss_trace) loss_trace->push_back(loss);
    if (!accepted && increased) {
      if (++bad_streak >= 10)
        throw convergence_error("optimize_shape: loss kept increasing for 10 consecutive steps (at iteration " +
                                std::to_string(it) + ")");
    } else {
      bad_streak = 0;
    }
    if (!accepted && lr < 1e-14) break;  // converged to numeric resolution
  }

  const auto [shape, pose] = unpack_fit(p);
  return {shape, pose};
}

}  // namespace hupor
