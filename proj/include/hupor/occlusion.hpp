#pragma once

// ternary per-joint occlusion labels (0 truncated, 1 occluded, 2 visible).
// classify_joints reads the rasterized depth buffer at the joint's pixel;
// ray_oracle casts the exact ray through the joint's projection with no grid
// involved. both apply the same front-surface depth tolerance, so they can
// only disagree where pixel-center quantization matters: silhouette borders.

#include <array>
#include <cmath>
#include <vector>

#include "hupor/body.hpp"
#include "hupor/core.hpp"
#include "hupor/raster.hpp"
#include "hupor/scene.hpp"

namespace hupor {

struct OcclusionLabels {
  std::vector<std::array<int, kJoints>> labels;  // one row per person

  int at(int person, int joint) const { return labels[person][joint]; }
  int count(int value) const {
    int n = 0;
    for (const auto& row : labels)
      for (int l : row) n += (l == value);
    return n;
  }
};

inline OcclusionLabels classify_joints(const Scene& scene, const MaskSet& masks) {
  const Camera& cam = scene.camera;
  if (masks.width != cam.width || masks.height != cam.height)
    throw validation_error("classify_joints: mask dimensions do not match the scene camera");

  OcclusionLabels out;
  out.labels.resize(scene.people.size());
  for (int i = 0; i < static_cast<int>(scene.people.size()); ++i) {
    const PosedBody& body = scene.people[i];
    for (int j = 0; j < kJoints; ++j) {
      const V3d& joint = body.pose.joints[j];
      if (joint.z <= 0) { out.labels[i][j] = 0; continue; }
      const auto [u, v] = project(cam, joint);
      if (!in_image(cam, u, v)) { out.labels[i][j] = 0; continue; }

      const int px = std::clamp(static_cast<int>(std::floor(u)), 0, cam.width - 1);
      const int py = std::clamp(static_cast<int>(std::floor(v)), 0, cam.height - 1);
      const int inst = masks.instance(py, px);
      const OwnSurface own = own_surface(body, j);
      const double z_front = joint.z - own.max_radius;

      int label;
      if (inst == i + 1 && own.contains(masks.part(py, px))) {
        label = 2;  // pixel owned by the joint's own body surface
      } else if (inst == 0) {
        label = 2;  // nothing rendered in front at this pixel
      } else {
        label = masks.depth(py, px) >= z_front - depth_tolerance(own.max_radius) ? 2 : 1;
      }
      out.labels[i][j] = label;
    }
  }
  return out;
}

// scales the whole camera by an integer factor; projections scale exactly,
// truncation decisions are unchanged.
inline Scene upscale_camera(const Scene& scene, int factor) {
  Scene fine = scene;
  fine.camera.focal *= factor;
  fine.camera.cx *= factor;
  fine.camera.cy *= factor;
  fine.camera.width *= factor;
  fine.camera.height *= factor;
  return fine;
}

// production label generation: classify on a supersampled raster so pixel
// quantization shrinks, while the rule stays grid-based.
inline OcclusionLabels scene_labels(const Scene& scene, int supersample = 5) {
  if (supersample <= 1) return classify_joints(scene, rasterize(scene));
  const Scene fine = upscale_camera(scene, supersample);
  return classify_joints(fine, rasterize(fine));
}

// grid-free reference: the exact ray through the joint's projection.
inline int ray_oracle(const Scene& scene, int person_id, int joint_id) {
  return exact_joint_label(scene, person_id, joint_id);
}

inline OcclusionLabels oracle_labels(const Scene& scene) {
  OcclusionLabels out;
  out.labels.resize(scene.people.size());
  for (int i = 0; i < static_cast<int>(scene.people.size()); ++i)
    for (int j = 0; j < kJoints; ++j) out.labels[i][j] = ray_oracle(scene, i, j);
  return out;
}

// true when (u, v) lies within dist pixels of a silhouette boundary: a change
// of pixel ownership in instance or body part. part changes count because a
// limb's contour in front of the same person's body is a real silhouette edge
// even though the instance does not change across it.
inline bool near_silhouette_boundary(const MaskSet& masks, double u, double v, double dist = 1.5) {
  const int px = static_cast<int>(std::floor(u));
  const int py = static_cast<int>(std::floor(v));
  const int rad = static_cast<int>(std::ceil(dist)) + 1;
  auto owner = [&masks](int y, int x) {
    return std::pair<int, int>{masks.instance(y, x), masks.part(y, x)};
  };
  for (int y = std::max(0, py - rad); y <= std::min(masks.height - 1, py + rad); ++y) {
    for (int x = std::max(0, px - rad); x <= std::min(masks.width - 1, px + rad); ++x) {
      const auto own = owner(y, x);
      const bool boundary = (x > 0 && owner(y, x - 1) != own) ||
                            (x + 1 < masks.width && owner(y, x + 1) != own) ||
                            (y > 0 && owner(y - 1, x) != own) ||
                            (y + 1 < masks.height && owner(y + 1, x) != own);
      if (!boundary) continue;
      const double dx = x + 0.5 - u, dy = y + 0.5 - v;
      if (std::sqrt(dx * dx + dy * dy) <= dist) return true;
    }
  }
  return false;
}

}  // namespace hupor
