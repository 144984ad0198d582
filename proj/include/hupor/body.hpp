#pragma once

// parametric capsule human: 10 shape parameters (7 radii + 3 length/width
// scales), per-edge axis-angle pose, forward kinematics along the skeleton
// tree. templated on the scalar so shape fitting can push dual numbers
// through the same kinematics.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "hupor/core.hpp"
#include "hupor/geom.hpp"

namespace hupor {

inline constexpr int kShapeParams = 10;
inline constexpr int kHeadPart = 14;  // part ids: 0..13 edge capsules, 14 head sphere

// beta layout: [head r, neck r, torso r, upper-arm r, forearm r, thigh r,
// shin r, bone-length scale, shoulder-width scale, hip-width scale].
// radii in mm, scales dimensionless.
struct CapsuleShape {
  std::array<double, kShapeParams> beta{};

  void validate() const {
    for (int i = 0; i < 7; ++i)
      if (beta[i] < 20.0 || beta[i] > 200.0)
        throw validation_error("shape radius " + std::to_string(i) + " outside [20, 200] mm");
    for (int i = 7; i < 10; ++i)
      if (beta[i] < 0.7 || beta[i] > 1.3)
        throw validation_error("shape scale " + std::to_string(i) + " outside [0.7, 1.3]");
  }
};

inline CapsuleShape template_shape() {
  return {{105, 55, 140, 48, 38, 70, 52, 1.0, 1.0, 1.0}};
}

// child-joint offsets of the canonical body, mm, camera frame (x right,
// y down, z forward); the body faces the camera, its left side on +x.
inline const std::array<V3d, kJoints>& template_offsets() {
  static const std::array<V3d, kJoints> off = {{
      {0, 0, 0},       // pelvis (root, no offset)
      {0, -520, 0},    // neck from pelvis
      {0, -200, 0},    // head from neck
      {170, 30, 0},    // l_shoulder from neck
      {280, 0, 0},     // l_elbow
      {250, 0, 0},     // l_wrist
      {-170, 30, 0},   // r_shoulder from neck
      {-280, 0, 0},    // r_elbow
      {-250, 0, 0},    // r_wrist
      {95, 60, 0},     // l_hip from pelvis
      {0, 430, 0},     // l_knee
      {0, 420, 0},     // l_ankle
      {-95, 60, 0},    // r_hip
      {0, 430, 0},     // r_knee
      {0, 420, 0},     // r_ankle
  }};
  return off;
}

// beta index supplying each edge capsule's radius.
inline constexpr std::array<int, kEdges> kEdgeRadiusGroup = {
    2,  // pelvis-neck: torso
    1,  // neck-head: neck
    3, 3, 4,  // neck-l_shoulder, l_shoulder-l_elbow: upper arm; l_elbow-l_wrist: forearm
    3, 3, 4,  // right arm chain
    5, 5, 6,  // pelvis-l_hip, l_hip-l_knee: thigh; l_knee-l_ankle: shin
    5, 5, 6,  // right leg chain
};

// edge whose child is this edge's parent joint; -1 for pelvis-rooted edges.
inline constexpr std::array<int, kEdges> kParentEdge = {
    -1, 0, 0, 2, 3, 0, 5, 6, -1, 8, 9, -1, 11, 12,
};

struct CapsulePose {
  std::array<V3d, kEdges> theta{};  // axis-angle per edge, radians, |theta| <= pi
  V3d root_translation{};           // mm

  void validate() const {
    for (int e = 0; e < kEdges; ++e)
      if (norm(theta[e]) > M_PI + 1e-9)
        throw validation_error("pose axis-angle magnitude exceeds pi at edge " + std::to_string(e));
  }
};

// rewraps an axis-angle vector to magnitude <= pi (same rotation).
inline V3d wrap_axis_angle(V3d w) {
  double t = norm(w);
  while (t > M_PI) {
    w = w * ((t - 2.0 * M_PI) / t);
    t = norm(w);
  }
  return w;
}

template <class S> using JointArray = std::array<V3<S>, kJoints>;

// forward kinematics: rotations compose along the tree, root carries no
// rotation of its own (body yaw lives in the three pelvis-rooted edges).
template <class S>
JointArray<S> fk_joints(const std::array<S, kShapeParams>& beta,
                        const std::array<V3<S>, kEdges>& theta, const V3<S>& trans) {
  const auto& spec = skeleton();
  const auto& off = template_offsets();
  JointArray<S> joints;
  std::array<M3<S>, kEdges> rot;
  joints[0] = trans;
  for (int e = 0; e < kEdges; ++e) {
    const auto [parent, child] = spec.edges[e];
    const M3<S> local = rodrigues(theta[e]);
    rot[e] = kParentEdge[e] < 0 ? local : rot[kParentEdge[e]] * local;
    V3<S> o = {S(off[child].x), S(off[child].y), S(off[child].z)};
    o *= beta[7];
    if (child == kLShoulder || child == kRShoulder) o *= beta[8];
    if (child == kLHip || child == kRHip) o *= beta[9];
    joints[child] = joints[parent] + rot[e] * o;
  }
  return joints;
}

// one volumetric primitive: capsule when a != b, sphere when a == b.
template <class S> struct CapsuleT {
  V3<S> a, b;
  S r;
  int part = -1;
};
using Capsule = CapsuleT<double>;

inline constexpr int kBodyPrimitives = kEdges + 1;

// the 14 edge capsules plus the head sphere, from already-computed joints.
template <class S>
std::array<CapsuleT<S>, kBodyPrimitives> body_primitives(const JointArray<S>& joints,
                                                         const std::array<S, kShapeParams>& beta) {
  const auto& spec = skeleton();
  std::array<CapsuleT<S>, kBodyPrimitives> prims;
  for (int e = 0; e < kEdges; ++e) {
    const auto [parent, child] = spec.edges[e];
    prims[e] = {joints[parent], joints[child], beta[kEdgeRadiusGroup[e]], e};
  }
  prims[kEdges] = {joints[kHead], joints[kHead], beta[0], kHeadPart};
  return prims;
}

struct PosedBody {
  std::array<Capsule, kBodyPrimitives> capsules;  // last entry is the head sphere
  Pose3D pose;
  int person_id = 0;
};

inline PosedBody pose_body(const CapsuleShape& shape, const CapsulePose& pose, int person_id = 0) {
  shape.validate();
  pose.validate();
  std::array<V3d, kEdges> theta = pose.theta;
  const auto joints = fk_joints<double>(shape.beta, theta, pose.root_translation);
  PosedBody body;
  body.capsules = body_primitives<double>(joints, shape.beta);
  body.pose.joints = joints;
  body.pose.person_id = person_id;
  body.person_id = person_id;
  return body;
}

inline constexpr std::array<int, kEdges> kMirrorEdge = {0, 1, 5, 6, 7, 2, 3, 4, 11, 12, 13, 8, 9, 10};

// reflection about the x=0 plane: swap left/right chains, conjugate each
// axis-angle by the flip (x kept, y/z negated), negate root x.
inline CapsulePose mirror_pose(const CapsulePose& pose) {
  CapsulePose out;
  for (int e = 0; e < kEdges; ++e) {
    const V3d& w = pose.theta[kMirrorEdge[e]];
    out.theta[e] = {w.x, -w.y, -w.z};
  }
  out.root_translation = {-pose.root_translation.x, pose.root_translation.y, pose.root_translation.z};
  return out;
}

// whether a body part (edge capsule or head sphere) touches the given joint.
inline bool part_incident(int part, int joint) {
  if (part == kHeadPart) return joint == kHead;
  if (part < 0 || part >= kEdges) return false;
  const auto [parent, child] = skeleton().edges[part];
  return parent == joint || child == joint;
}

// the body surface a joint belongs to: every capsule of the same person whose
// volume contains the joint center (incident capsules always do, and e.g. the
// hips sit inside the torso capsule's bottom cap). surfaces in this set never
// occlude the joint, and the thickest of them bounds the joint's own front
// surface depth.
struct OwnSurface {
  std::uint32_t parts = 0;  // bit per part id
  double max_radius = 0;

  bool contains(int part) const { return part >= 0 && (parts >> part) & 1u; }
};

inline OwnSurface own_surface(const PosedBody& body, int joint) {
  OwnSurface own;
  const V3d& center = body.pose.joints[joint];
  for (const auto& cap : body.capsules) {
    if (part_incident(cap.part, joint) || point_segment_dist(center, cap.a, cap.b) <= cap.r + 1e-9) {
      own.parts |= 1u << cap.part;
      own.max_radius = std::max(own.max_radius, cap.r);
    }
  }
  return own;
}

}  // namespace hupor
