#pragma once

// canonical 15-joint skeleton, pinhole camera, and pose containers shared by
// every other header. all types are immutable value objects.

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hupor/geom.hpp"

namespace hupor {

struct validation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct convergence_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kJoints = 15;
inline constexpr int kEdges = 14;
inline constexpr int kTorsoJoints = 7;
inline constexpr int kStride = 4;

enum Joint : int {
  kPelvis = 0,
  kNeck = 1,
  kHead = 2,
  kLShoulder = 3,
  kLElbow = 4,
  kLWrist = 5,
  kRShoulder = 6,
  kRElbow = 7,
  kRWrist = 8,
  kLHip = 9,
  kLKnee = 10,
  kLAnkle = 11,
  kRHip = 12,
  kRKnee = 13,
  kRAnkle = 14,
};

struct SkeletonSpec {
  std::array<std::string, kJoints> joint_names;
  std::array<std::pair<int, int>, kEdges> edges;  // (parent, child), tree rooted at pelvis
  std::array<int, kTorsoJoints> torso_set;
  std::vector<std::pair<int, int>> symmetry_pairs;  // (left, right), torso joints only

  int parent_of(int joint) const {
    for (const auto& [p, c] : edges)
      if (c == joint) return p;
    return -1;  // pelvis
  }

  // index into torso_set, or -1 if the joint is not a torso joint.
  int torso_slot(int joint) const {
    for (int t = 0; t < kTorsoJoints; ++t)
      if (torso_set[t] == joint) return t;
    return -1;
  }

  bool is_torso(int joint) const { return torso_slot(joint) >= 0; }
};

inline const SkeletonSpec& skeleton() {
  static const SkeletonSpec spec = {
      {"pelvis", "neck", "head", "l_shoulder", "l_elbow", "l_wrist", "r_shoulder",
       "r_elbow", "r_wrist", "l_hip", "l_knee", "l_ankle", "r_hip", "r_knee", "r_ankle"},
      {{{0, 1}, {1, 2}, {1, 3}, {3, 4}, {4, 5}, {1, 6}, {6, 7}, {7, 8},
        {0, 9}, {9, 10}, {10, 11}, {0, 12}, {12, 13}, {13, 14}}},
      {kPelvis, kNeck, kHead, kLShoulder, kRShoulder, kLHip, kRHip},
      {{kLShoulder, kRShoulder}, {kLHip, kRHip}},
  };
  return spec;
}

// full left/right joint correspondence (torso and limbs), used for pose mirroring.
inline int mirror_joint(int j) {
  static constexpr std::array<int, kJoints> map = {0, 1, 2, 6, 7, 8, 3, 4, 5, 12, 13, 14, 9, 10, 11};
  return map[j];
}

struct Camera {
  double focal = 0;          // pixels
  double cx = 0, cy = 0;     // principal point, pixels
  int width = 0, height = 0; // image size in pixels; heatmaps are width/4 x height/4

  int heatmap_w() const { return width / kStride; }
  int heatmap_h() const { return height / kStride; }

  void validate() const {
    if (focal <= 0) throw validation_error("camera focal must be positive");
    if (width <= 0 || height <= 0) throw validation_error("camera image size must be positive");
    if (width % kStride != 0 || height % kStride != 0)
      throw validation_error("camera image size must be divisible by the heatmap stride");
  }
};

struct Pose3D {
  std::array<V3d, kJoints> joints;  // mm, camera coordinates
  int person_id = 0;
};

struct Pose2D {
  std::array<std::array<double, 2>, kJoints> joints{};  // pixels
  std::array<double, kJoints> confidences{};            // in [0,1]
  std::optional<std::array<double, kJoints>> depths;    // absolute mm, if known
};

template <class S> std::array<S, 2> project(const Camera& cam, const V3<S>& point) {
  if (!(point.z > S(0))) throw std::domain_error("project: point depth must be positive");
  return {S(cam.focal) * point.x / point.z + S(cam.cx),
          S(cam.focal) * point.y / point.z + S(cam.cy)};
}

inline V3d backproject(const Camera& cam, double u, double v, double depth) {
  if (!(depth > 0)) throw std::domain_error("backproject: depth must be positive");
  return {(u - cam.cx) * depth / cam.focal, (v - cam.cy) * depth / cam.focal, depth};
}

inline bool in_image(const Camera& cam, double u, double v) {
  return u >= 0 && v >= 0 && u < cam.width && v < cam.height;
}

}  // namespace hupor
