#pragma once

// synthetic multi-person scenes: randomly shaped and posed capsule bodies plus
// box/sphere occluders, authored directly in the camera frame. also hosts the
// exact per-joint visibility test that both scene sampling and the label
// oracle rely on.

#include <cstdint>
#include <string>
#include <vector>

#include "hupor/body.hpp"
#include "hupor/core.hpp"
#include "hupor/primitives.hpp"
#include "hupor/rng.hpp"

namespace hupor {

struct Occluder {
  enum class Kind { box, sphere };
  Kind kind = Kind::box;
  V3d center;       // mm
  V3d half;         // box half extents, mm
  double radius = 0;  // sphere radius, mm
};

struct Scene {
  std::vector<PosedBody> people;
  std::vector<CapsuleShape> shapes;       // generating parameters, aligned with people
  std::vector<CapsulePose> pose_params;
  std::vector<Occluder> occluders;
  Camera camera;
  std::uint64_t seed = 0;
};

struct SceneConfig {
  int min_people = 1;
  int max_people = 3;
  double pose_perturbation = 0.35;  // max per-edge axis-angle magnitude, radians
  double occluder_density = 0.5;    // per-slot probability; 5 slots, so 0..5 occluders
  bool guarantee_visible = false;   // require at least one fully visible person
  double z_min = 2200, z_max = 4200;                 // pelvis depth range, mm
  double occluded_band_lo = 0.10, occluded_band_hi = 0.40;  // regression band for label-1 rate
  Camera camera{110.0, 64.0, 64.0, 128, 128};

  void validate() const {
    if (max_people < 1) throw validation_error("scene config max_people must be at least 1");
    if (min_people < 1 || min_people > max_people)
      throw validation_error("scene config min_people must be in [1, max_people]");
    if (max_people > 6) throw validation_error("scene config max_people must be at most 6");
    if (occluder_density < 0 || occluder_density > 1)
      throw validation_error("scene config occluder_density must be in [0, 1]");
    if (pose_perturbation < 0 || pose_perturbation > M_PI)
      throw validation_error("scene config pose_perturbation must be in [0, pi]");
    if (!(z_min > 0) || z_max < z_min) throw validation_error("scene config depth range invalid");
    camera.validate();
  }
};

// depth slack when deciding visibility: the joint center sits inside the body
// volume, so a surface this close in front of the joint's front surface still
// counts as the joint's own.
inline double depth_tolerance(double joint_radius) { return 0.25 * joint_radius + 5.0; }

namespace detail {

struct RayHit {
  double t = 0;
  int person = -1;  // index into scene.people, -1 for occluders
  int part = -1;
};

// nearest surface along the pixel ray over every primitive in the scene.
inline std::optional<RayHit> nearest_hit(const Scene& scene, const V3d& dir) {
  std::optional<RayHit> best;
  auto keep = [&best](std::optional<double> t, int person, int part) {
    if (t && (!best || *t < best->t)) best = RayHit{*t, person, part};
  };
  for (int p = 0; p < static_cast<int>(scene.people.size()); ++p)
    for (const auto& cap : scene.people[p].capsules)
      keep(ray_capsule(dir, cap.a, cap.b, cap.r), p, cap.part);
  for (const auto& occ : scene.occluders) {
    if (occ.kind == Occluder::Kind::sphere)
      keep(ray_sphere(dir, occ.center, occ.radius), -1, -1);
    else
      keep(ray_box(dir, occ.center, occ.half), -1, -1);
  }
  return best;
}

}  // namespace detail

// exact ternary label for one joint: 0 out of view, 2 visible, 1 occluded.
// visible means the nearest surface along the joint's own view ray belongs to
// the joint's own body surface, or lies no deeper than the joint's front
// surface minus the depth tolerance.
inline int exact_joint_label(const Scene& scene, int person_id, int joint_id) {
  const PosedBody& body = scene.people.at(person_id);
  const V3d& joint = body.pose.joints[joint_id];
  if (joint.z <= 0) return 0;
  const auto [u, v] = project(scene.camera, joint);
  if (!in_image(scene.camera, u, v)) return 0;

  const V3d dir{(u - scene.camera.cx) / scene.camera.focal,
                (v - scene.camera.cy) / scene.camera.focal, 1.0};
  const OwnSurface own = own_surface(body, joint_id);
  const double z_front = joint.z - own.max_radius;

  const auto hit = detail::nearest_hit(scene, dir);
  if (!hit) return 2;  // ray through the joint center always hits its own capsule, but stay safe
  if (hit->person == person_id && own.contains(hit->part)) return 2;
  if (hit->t >= z_front - depth_tolerance(own.max_radius)) return 2;
  return 1;
}

inline bool fully_visible(const Scene& scene, int person_id) {
  for (int j = 0; j < kJoints; ++j)
    if (exact_joint_label(scene, person_id, j) != 2) return false;
  return true;
}

namespace detail {

inline CapsuleShape sample_shape(Rng& rng) {
  CapsuleShape s = template_shape();
  for (int i = 0; i < 7; ++i)
    s.beta[i] = std::clamp(s.beta[i] * rng.uniform(0.85, 1.15), 20.0, 200.0);
  for (int i = 7; i < 10; ++i) s.beta[i] = rng.uniform(0.9, 1.1);
  return s;
}

inline CapsulePose sample_pose(Rng& rng, const SceneConfig& config) {
  CapsulePose p;
  for (int e = 0; e < kEdges; ++e) {
    const double mag = rng.uniform(0.0, config.pose_perturbation);
    p.theta[e] = rng.unit_vector() * mag;
  }
  const Camera& cam = config.camera;
  const double z = rng.uniform(config.z_min, config.z_max);
  const double u = rng.uniform(0.25 * cam.width, 0.75 * cam.width);
  const double v = rng.uniform(0.375 * cam.height, 0.625 * cam.height);
  p.root_translation = backproject(cam, u, v, z);
  return p;
}

// occluders are aimed at a joint of some person, placed partway along the
// camera ray to it, so they produce genuine occlusions at any depth.
inline Occluder sample_occluder(Rng& rng, const std::vector<PosedBody>& people) {
  const auto& target = people[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(people.size()) - 1))];
  const V3d joint = target.pose.joints[rng.uniform_int(0, kJoints - 1)];
  const double frac = rng.uniform(0.35, 0.8);
  const V3d jitter{rng.uniform(-150.0, 150.0), rng.uniform(-150.0, 150.0), 0.0};
  Occluder occ;
  occ.center = joint * frac + jitter;
  if (rng.canonical() < 0.5) {
    occ.kind = Occluder::Kind::box;
    occ.half = {rng.uniform(60.0, 180.0), rng.uniform(60.0, 180.0), rng.uniform(30.0, 100.0)};
  } else {
    occ.kind = Occluder::Kind::sphere;
    occ.radius = rng.uniform(60.0, 160.0);
  }
  return occ;
}

}  // namespace detail

inline Scene sample_scene(std::uint64_t seed, const SceneConfig& config) {
  config.validate();
  Rng rng(seed);
  constexpr int kAttempts = 300;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    Scene scene;
    scene.camera = config.camera;
    scene.seed = seed;
    const int n = rng.uniform_int(config.min_people, config.max_people);
    for (int i = 0; i < n; ++i) {
      scene.shapes.push_back(detail::sample_shape(rng));
      scene.pose_params.push_back(detail::sample_pose(rng, config));
      scene.people.push_back(pose_body(scene.shapes.back(), scene.pose_params.back(), i));
    }
    for (int slot = 0; slot < 5; ++slot)
      if (rng.canonical() < config.occluder_density)
        scene.occluders.push_back(detail::sample_occluder(rng, scene.people));
    if (!config.guarantee_visible) return scene;
    for (int i = 0; i < n; ++i)
      if (fully_visible(scene, i)) return scene;
  }
  throw validation_error("sample_scene: no fully visible person after " +
                         std::to_string(kAttempts) + " attempts; relax the scene config");
}

inline std::vector<Pose3D> scene_poses(const Scene& scene) {
  std::vector<Pose3D> poses;
  poses.reserve(scene.people.size());
  for (const PosedBody& person : scene.people) poses.push_back(person.pose);
  return poses;
}

}  // namespace hupor
