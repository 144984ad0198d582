#pragma once

// ground-truth map construction: gaussian keypoint heatmaps, 3d part affinity
// fields, root depth discs, and the visible/occluded/all split driven by
// per-joint occlusion labels.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "hupor/grid.hpp"
#include "hupor/occlusion.hpp"

namespace hupor {

inline constexpr int kPafChannels = 3 * kEdges;     // (unit x, unit y, depth delta) per edge
inline constexpr int kRootChannels = kTorsoJoints;  // one normalized-depth channel per torso joint

struct TargetParams {
  double sigma = 2.0;        // gaussian width, heatmap cells
  double truncate = 3.0;     // gaussian cutoff radius, in sigmas
  double limb_width = 1.5;   // paf support half-width, heatmap cells
  double disc_radius = 2.0;  // root depth disc radius, heatmap cells

  void validate() const {
    if (sigma <= 0) throw validation_error("target sigma must be positive");
    if (truncate <= 0) throw validation_error("target truncate must be positive");
    if (limb_width <= 0) throw validation_error("target limb_width must be positive");
    if (disc_radius <= 0) throw validation_error("target disc_radius must be positive");
  }
};

// the (keypoints, pafs, root depth) triple at heatmap resolution, used for
// training targets, network predictions, and reasoning i/o alike.
struct HeatmapSet {
  Grid keypoints;   // kJoints channels, values in [0, 1]
  Grid pafs;        // kPafChannels, (x, y) unit on support, depth delta in mm
  Grid root_depth;  // kRootChannels, normalized depth
};

inline HeatmapSet make_heatmap_set(int h, int w) {
  return {Grid(kJoints, h, w), Grid(kPafChannels, h, w), Grid(kRootChannels, h, w)};
}

inline HeatmapSet make_heatmap_set(const Camera& camera) {
  return make_heatmap_set(camera.heatmap_h(), camera.heatmap_w());
}

inline void validate_heatmap_set(const HeatmapSet& maps) {
  if (maps.keypoints.c != kJoints || maps.pafs.c != kPafChannels || maps.root_depth.c != kRootChannels)
    throw validation_error("heatmap set has wrong channel counts");
  if (maps.keypoints.h != maps.pafs.h || maps.keypoints.w != maps.pafs.w ||
      maps.keypoints.h != maps.root_depth.h || maps.keypoints.w != maps.root_depth.w)
    throw validation_error("heatmap set planes disagree on resolution");
}

// depth normalization shared by target encoding and inference decoding:
// zhat = z * heatmap_width / focal, dimensionless across image sizes.
inline double normalized_depth(double z_mm, const Camera& camera) {
  return z_mm * camera.heatmap_w() / camera.focal;
}

inline double denormalized_depth(double zhat, const Camera& camera) {
  return zhat * camera.focal / camera.heatmap_w();
}

// per-person inclusion masks used to build the visible / occluded / all splits.
using JointMask = std::vector<std::array<bool, kJoints>>;
using EdgeMask = std::vector<std::array<bool, kEdges>>;

inline JointMask full_joint_mask(size_t people) {
  JointMask mask(people);
  for (auto& row : mask) row.fill(true);
  return mask;
}

inline EdgeMask full_edge_mask(size_t people) {
  EdgeMask mask(people);
  for (auto& row : mask) row.fill(true);
  return mask;
}

namespace detail {

struct GridPoint {
  bool in_view = false;
  double gx = 0, gy = 0;  // heatmap cells: pixel / stride
  double z = 0;           // mm
};

inline GridPoint to_grid(const Camera& camera, const V3d& point) {
  if (!(point.z > 0)) return {};
  const auto [u, v] = project(camera, point);
  if (!in_image(camera, u, v)) return {};
  return {true, u / kStride, v / kStride, point.z};
}

inline void paint_keypoints(Grid& out, const std::vector<Pose3D>& poses, const Camera& camera,
                            const JointMask& mask, double sigma, double truncate) {
  const double radius = truncate * sigma;
  const double r2 = radius * radius;
  for (size_t i = 0; i < poses.size(); ++i)
    for (int j = 0; j < kJoints; ++j) {
      if (!mask[i][j]) continue;
      const GridPoint g = to_grid(camera, poses[i].joints[j]);
      if (!g.in_view) continue;
      const int x0 = std::max(0, static_cast<int>(std::ceil(g.gx - radius)));
      const int x1 = std::min(out.w - 1, static_cast<int>(std::floor(g.gx + radius)));
      const int y0 = std::max(0, static_cast<int>(std::ceil(g.gy - radius)));
      const int y1 = std::min(out.h - 1, static_cast<int>(std::floor(g.gy + radius)));
      // normalize each splat by its nearest in-grid cell so the peak cell is
      // exactly 1 and log ratios between cells stay those of a pure gaussian.
      double d2_min = std::numeric_limits<double>::infinity();
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double d2 = (x - g.gx) * (x - g.gx) + (y - g.gy) * (y - g.gy);
          if (d2 <= r2) d2_min = std::min(d2_min, d2);
        }
      if (!std::isfinite(d2_min)) continue;
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double d2 = (x - g.gx) * (x - g.gx) + (y - g.gy) * (y - g.gy);
          if (d2 > r2) continue;
          const double value = std::exp(-(d2 - d2_min) / (2.0 * sigma * sigma));
          out.at(j, y, x) = std::max(out.at(j, y, x), value);
        }
    }
}

inline void paint_pafs(Grid& out, const std::vector<Pose3D>& poses, const Camera& camera,
                       const EdgeMask& mask, double limb_width, int* degenerate_count) {
  const SkeletonSpec& sk = skeleton();
  std::vector<double> nearest(static_cast<size_t>(out.h) * out.w);
  for (int e = 0; e < kEdges; ++e) {
    std::fill(nearest.begin(), nearest.end(), std::numeric_limits<double>::infinity());
    for (size_t i = 0; i < poses.size(); ++i) {
      if (!mask[i][e]) continue;
      const auto [pj, cj] = sk.edges[e];
      const GridPoint a = to_grid(camera, poses[i].joints[pj]);
      const GridPoint b = to_grid(camera, poses[i].joints[cj]);
      if (!a.in_view || !b.in_view) continue;  // limbs with a truncated endpoint are dropped
      const double sx = b.gx - a.gx, sy = b.gy - a.gy;
      const double len = std::hypot(sx, sy);
      const bool degenerate = len < 1e-12;
      if (degenerate && degenerate_count) ++*degenerate_count;
      const double dirx = degenerate ? 0.0 : sx / len;
      const double diry = degenerate ? 0.0 : sy / len;
      const double dz = b.z - a.z;
      const int x0 = std::max(0, static_cast<int>(std::ceil(std::min(a.gx, b.gx) - limb_width)));
      const int x1 = std::min(out.w - 1, static_cast<int>(std::floor(std::max(a.gx, b.gx) + limb_width)));
      const int y0 = std::max(0, static_cast<int>(std::ceil(std::min(a.gy, b.gy) - limb_width)));
      const int y1 = std::min(out.h - 1, static_cast<int>(std::floor(std::max(a.gy, b.gy) + limb_width)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double t =
              degenerate ? 0.0 : std::clamp((x - a.gx) * dirx + (y - a.gy) * diry, 0.0, len);
          const double px = a.gx + t * dirx, py = a.gy + t * diry;
          const double dist = std::hypot(x - px, y - py);
          if (dist > limb_width) continue;
          // overlapping people: the one whose limb passes nearer the camera
          // at this cell wins, judged by depth interpolated along the bone.
          const double frac = degenerate ? 0.5 : t / len;
          const double z_here = a.z + frac * (b.z - a.z);
          double& best = nearest[static_cast<size_t>(y) * out.w + x];
          if (z_here >= best) continue;
          best = z_here;
          out.at(3 * e, y, x) = dirx;
          out.at(3 * e + 1, y, x) = diry;
          out.at(3 * e + 2, y, x) = dz;
        }
    }
  }
}

inline void paint_root(Grid& out, const std::vector<Pose3D>& poses, const Camera& camera,
                       const JointMask& mask, double disc_radius) {
  const SkeletonSpec& sk = skeleton();
  const double r2 = disc_radius * disc_radius;
  std::vector<double> nearest(static_cast<size_t>(out.h) * out.w);
  for (int slot = 0; slot < kTorsoJoints; ++slot) {
    const int j = sk.torso_set[slot];
    std::fill(nearest.begin(), nearest.end(), std::numeric_limits<double>::infinity());
    for (size_t i = 0; i < poses.size(); ++i) {
      if (!mask[i][j]) continue;
      const GridPoint g = to_grid(camera, poses[i].joints[j]);
      if (!g.in_view) continue;
      const double zhat = normalized_depth(g.z, camera);
      const int x0 = std::max(0, static_cast<int>(std::ceil(g.gx - disc_radius)));
      const int x1 = std::min(out.w - 1, static_cast<int>(std::floor(g.gx + disc_radius)));
      const int y0 = std::max(0, static_cast<int>(std::ceil(g.gy - disc_radius)));
      const int y1 = std::min(out.h - 1, static_cast<int>(std::floor(g.gy + disc_radius)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double d2 = (x - g.gx) * (x - g.gx) + (y - g.gy) * (y - g.gy);
          if (d2 > r2) continue;
          double& best = nearest[static_cast<size_t>(y) * out.w + x];
          if (g.z >= best) continue;  // overlapping discs: nearer person wins
          best = g.z;
          out.at(slot, y, x) = zhat;
        }
    }
  }
}

}  // namespace detail

inline Grid make_keypoint_maps(const std::vector<Pose3D>& poses, const Camera& camera,
                               double sigma = 2.0, double truncate = 3.0) {
  Grid out(kJoints, camera.heatmap_h(), camera.heatmap_w());
  detail::paint_keypoints(out, poses, camera, full_joint_mask(poses.size()), sigma, truncate);
  return out;
}

inline Grid make_paf_maps(const std::vector<Pose3D>& poses, const Camera& camera,
                          double limb_width = 1.5, int* degenerate_count = nullptr) {
  Grid out(kPafChannels, camera.heatmap_h(), camera.heatmap_w());
  detail::paint_pafs(out, poses, camera, full_edge_mask(poses.size()), limb_width, degenerate_count);
  return out;
}

inline Grid make_root_depth_maps(const std::vector<Pose3D>& poses, const Camera& camera,
                                 double disc_radius = 2.0) {
  Grid out(kRootChannels, camera.heatmap_h(), camera.heatmap_w());
  detail::paint_root(out, poses, camera, full_joint_mask(poses.size()), disc_radius);
  return out;
}

inline HeatmapSet build_heatmap_set(const std::vector<Pose3D>& poses, const Camera& camera,
                                    const JointMask& joints, const EdgeMask& edges,
                                    const TargetParams& params = {}, int* degenerate_count = nullptr) {
  HeatmapSet maps = make_heatmap_set(camera);
  detail::paint_keypoints(maps.keypoints, poses, camera, joints, params.sigma, params.truncate);
  detail::paint_pafs(maps.pafs, poses, camera, edges, params.limb_width, degenerate_count);
  detail::paint_root(maps.root_depth, poses, camera, joints, params.disc_radius);
  return maps;
}

struct TargetBundle {
  HeatmapSet all;       // every joint that projects into the image
  HeatmapSet visible;   // joints with label 2 / limbs with both endpoints visible
  HeatmapSet occluded;  // joints with label 1 / limbs with an occluded endpoint and none truncated
};

// a limb is visible only when both endpoints are visible, occluded when at
// least one endpoint is occluded and neither is truncated, and dropped when
// either endpoint leaves the image.
enum class EdgeClass { dropped, occluded, visible };

inline EdgeClass classify_edge(int parent_label, int child_label) {
  if (parent_label == 0 || child_label == 0) return EdgeClass::dropped;
  if (parent_label == 2 && child_label == 2) return EdgeClass::visible;
  return EdgeClass::occluded;
}

inline TargetBundle split_by_visibility(const std::vector<Pose3D>& poses, const Camera& camera,
                                        const OcclusionLabels& labels,
                                        const TargetParams& params = {},
                                        int* degenerate_count = nullptr) {
  params.validate();
  if (labels.labels.size() != poses.size())
    throw validation_error("occlusion labels do not match the person count");
  const size_t n = poses.size();
  JointMask all_j(n), vis_j(n), occ_j(n);
  EdgeMask all_e(n), vis_e(n), occ_e(n);
  const SkeletonSpec& sk = skeleton();
  for (size_t i = 0; i < n; ++i) {
    for (int j = 0; j < kJoints; ++j) {
      const int label = labels.at(static_cast<int>(i), j);
      all_j[i][j] = label != 0;
      vis_j[i][j] = label == 2;
      occ_j[i][j] = label == 1;
    }
    for (int e = 0; e < kEdges; ++e) {
      const auto [pj, cj] = sk.edges[e];
      const EdgeClass cls =
          classify_edge(labels.at(static_cast<int>(i), pj), labels.at(static_cast<int>(i), cj));
      all_e[i][e] = cls != EdgeClass::dropped;
      vis_e[i][e] = cls == EdgeClass::visible;
      occ_e[i][e] = cls == EdgeClass::occluded;
    }
  }
  TargetBundle bundle;
  bundle.all = build_heatmap_set(poses, camera, all_j, all_e, params, degenerate_count);
  bundle.visible = build_heatmap_set(poses, camera, vis_j, vis_e, params);
  bundle.occluded = build_heatmap_set(poses, camera, occ_j, occ_e, params);
  return bundle;
}

inline TargetBundle make_targets(const Scene& scene, const TargetParams& params = {},
                                 int* degenerate_count = nullptr) {
  return split_by_visibility(scene_poses(scene), scene.camera, scene_labels(scene), params,
                             degenerate_count);
}

// ground-truth (cell, normalized depth) samples at visible torso joints, the
// support of the root-depth regression loss.
struct RootSample {
  int person = 0;
  int slot = 0;  // torso channel
  int x = 0, y = 0;
  double zhat = 0;
};

inline std::vector<RootSample> visible_root_samples(const std::vector<Pose3D>& poses,
                                                    const Camera& camera,
                                                    const OcclusionLabels& labels) {
  if (labels.labels.size() != poses.size())
    throw validation_error("occlusion labels do not match the person count");
  const SkeletonSpec& sk = skeleton();
  std::vector<RootSample> samples;
  for (size_t i = 0; i < poses.size(); ++i)
    for (int slot = 0; slot < kTorsoJoints; ++slot) {
      const int j = sk.torso_set[slot];
      if (labels.at(static_cast<int>(i), j) != 2) continue;
      const detail::GridPoint g = detail::to_grid(camera, poses[i].joints[j]);
      if (!g.in_view) continue;
      const int x = std::clamp(static_cast<int>(std::lround(g.gx)), 0, camera.heatmap_w() - 1);
      const int y = std::clamp(static_cast<int>(std::lround(g.gy)), 0, camera.heatmap_h() - 1);
      samples.push_back({static_cast<int>(i), slot, x, y, normalized_depth(g.z, camera)});
    }
  return samples;
}

}  // namespace hupor
