#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hupor/rng.hpp"
#include "hupor/shape_fit.hpp"

using namespace hupor;

namespace {

bool close(double a, double b, double tol = 1e-4) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

Camera fit_camera() {
  Camera cam;
  cam.focal = 110.0;
  cam.cx = 64.0;
  cam.cy = 64.0;
  cam.width = 128;
  cam.height = 128;
  return cam;
}

CapsuleShape random_shape(Rng& rng) {
  CapsuleShape s = template_shape();
  for (int i = 0; i < 7; ++i) s.beta[i] *= rng.uniform(0.85, 1.15);
  for (int i = 7; i < 10; ++i) s.beta[i] = rng.uniform(0.8, 1.2);
  return s;
}

CapsulePose random_pose(Rng& rng, double magnitude, const V3d& trans) {
  CapsulePose p;
  for (int e = 0; e < kEdges; ++e)
    p.theta[e] = {rng.uniform(-magnitude, magnitude), rng.uniform(-magnitude, magnitude),
                  rng.uniform(-magnitude, magnitude)};
  p.root_translation = trans;
  return p;
}

double max_joint_gap(const Pose3D& a, const Pose3D& b) {
  double worst = 0;
  for (int j = 0; j < kJoints; ++j) worst = std::max(worst, norm(a.joints[j] - b.joints[j]));
  return worst;
}

}  // namespace

TEST_CASE("fit parameter packing round-trips and projection clamps to bounds") {
  Rng rng(2);
  const CapsuleShape shape = random_shape(rng);
  const CapsulePose pose = random_pose(rng, 0.8, {12, -40, 3000});
  const FitVec p = pack_fit(shape, pose);
  const auto [shape2, pose2] = unpack_fit(p);
  CHECK(shape2.beta == shape.beta);
  for (int e = 0; e < kEdges; ++e) {
    CHECK(pose2.theta[e].x == pose.theta[e].x);
    CHECK(pose2.theta[e].z == pose.theta[e].z);
  }
  CHECK(pose2.root_translation.y == pose.root_translation.y);

  FitVec wild = p;
  wild[2] = 9999.0;   // radius above the box
  wild[8] = 0.1;      // width scale below the box
  wild[kShapeParams] = 7.0;  // axis-angle way past pi
  const FitVec proj = project_fit(wild);
  CHECK(proj[2] == 200.0);
  CHECK(proj[8] == 0.7);
  const auto [ps, pp] = unpack_fit(proj);
  CHECK(norm(pp.theta[0]) <= M_PI + 1e-9);
  pp.validate();
  ps.validate();
}

TEST_CASE("shape initialization recovers the generating scales") {
  Rng rng(5);

  // template body, arbitrary rotations: scales recovered exactly
  CapsuleShape shape = template_shape();
  CapsulePose pose = random_pose(rng, 0.6, {0, 0, 3000});
  Pose3D joints = pose_body(shape, pose).pose;
  CapsuleShape est = shape_init(joints);
  CHECK(close(est.beta[7], 1.0, 1e-6));
  CHECK(close(est.beta[8], 1.0, 1e-6));
  CHECK(close(est.beta[9], 1.0, 1e-6));

  // global scale 1.2 comes back as 1.2, widths stay 1.0
  shape.beta[7] = 1.2;
  joints = pose_body(shape, pose).pose;
  est = shape_init(joints);
  CHECK(close(est.beta[7], 1.2, 1e-6));
  CHECK(close(est.beta[8], 1.0, 1e-6));

  // random bodies: every recovered bone length within 1% of the input pose
  for (int trial = 0; trial < 10; ++trial) {
    const CapsuleShape truth = random_shape(rng);
    const CapsulePose rand_pose = random_pose(rng, 0.7, {0, 0, 2800});
    const Pose3D target = pose_body(truth, rand_pose).pose;
    const CapsuleShape fit = shape_init(target);
    const auto& off = template_offsets();
    for (const auto& [parent, child] : skeleton().edges) {
      double expect = norm(off[child]) * fit.beta[7];
      if (child == kLShoulder || child == kRShoulder) expect *= fit.beta[8];
      if (child == kLHip || child == kRHip) expect *= fit.beta[9];
      const double actual = norm(target.joints[child] - target.joints[parent]);
      CHECK(std::abs(expect - actual) <= 0.01 * actual);
    }
  }

  // a collapsed skeleton has no torso to measure
  Pose3D degenerate;
  for (auto& j : degenerate.joints) j = {0, 0, 3000};
  CHECK_THROWS_AS(shape_init(degenerate), validation_error);
}

TEST_CASE("inverse kinematics reproduces joint positions exactly") {
  Rng rng(9);
  const CapsuleShape shape = template_shape();

  // a zero pose comes back as (numerically) zero rotations
  CapsulePose rest;
  rest.root_translation = {0, 0, 3000};
  const Pose3D rest_joints = pose_body(shape, rest).pose;
  const CapsulePose rec = skeleton_to_pose(rest_joints, shape);
  for (int e = 0; e < kEdges; ++e) CHECK(norm(rec.theta[e]) < 1e-9);
  CHECK(norm(rec.root_translation - rest.root_translation) < 1e-12);

  // forward/inverse round trip: twist is lost, joints are not
  for (int trial = 0; trial < 20; ++trial) {
    const CapsuleShape body_shape = random_shape(rng);
    const CapsulePose truth = random_pose(rng, 2.0, {rng.uniform(-300, 300), rng.uniform(-200, 200),
                                                     rng.uniform(2400, 3600)});
    const Pose3D target = pose_body(body_shape, truth).pose;
    const CapsulePose fit = skeleton_to_pose(target, body_shape);
    fit.validate();
    const Pose3D rebuilt = pose_body(body_shape, fit).pose;
    CHECK(max_joint_gap(target, rebuilt) < 1e-6);
  }

  // an exactly antiparallel bone still resolves (pi rotation)
  Pose3D flipped = rest_joints;
  flipped.joints[kLElbow] =
      flipped.joints[kLShoulder] + V3d{-300, 0, 0};
  flipped.joints[kLWrist] = flipped.joints[kLElbow] + V3d{-250, 0, 0};
  const CapsulePose bent = skeleton_to_pose(flipped, shape);
  const Pose3D rebuilt = pose_body(shape, bent).pose;
  // directions must match; lengths come from the shape
  const V3d dir = normalized(rebuilt.joints[kLElbow] - rebuilt.joints[kLShoulder]);
  CHECK(close(dir.x, -1.0, 1e-9));

  // zero-length bones are rejected
  Pose3D broken = rest_joints;
  broken.joints[kLElbow] = broken.joints[kLShoulder];
  CHECK_THROWS_AS(skeleton_to_pose(broken, shape), validation_error);
}

TEST_CASE("fitting loss vanishes at the ground truth and has closed forms") {
  const Camera cam = fit_camera();
  Rng rng(13);
  const CapsuleShape shape = template_shape();
  const CapsulePose pose = random_pose(rng, 0.3, {0, 0, 3000});
  const Pose3D target = pose_body(shape, pose).pose;
  const Grid mask = soft_silhouette(shape, pose, cam);

  SSFWeights w;
  SSFBreakdown bd;
  const double at_gt = loss_hs(shape, pose, &shape, &pose, target, mask, cam, w, &bd);
  CHECK(at_gt == 0.0);
  CHECK(bd.beta == 0.0);
  CHECK(bd.theta == 0.0);
  CHECK(bd.pose == 0.0);
  CHECK(bd.sil == 0.0);

  // shifting the body 10mm along x costs exactly 15 * 100 mm^2 in the joint term
  CapsulePose shifted = pose;
  shifted.root_translation.x += 10.0;
  SSFWeights pose_only;
  pose_only.lambda_sil = 0.0;
  const double moved =
      loss_hs(shape, shifted, nullptr, nullptr, target, mask, cam, pose_only, &bd);
  CHECK(close(bd.pose, 1500.0, 1e-12));
  CHECK(close(moved, 1500.0, 1e-12));

  // the priors are plain l2 norms
  CapsuleShape off_shape = shape;
  off_shape.beta[3] += 3.0;
  loss_hs(off_shape, pose, &shape, &pose, target, mask, cam, pose_only, &bd);
  CHECK(close(bd.beta, 3.0, 1e-12));
  CapsulePose off_pose = pose;
  off_pose.theta[2].y += 0.2;
  loss_hs(shape, off_pose, &shape, &pose, target, mask, cam, pose_only, &bd);
  CHECK(close(bd.theta, 0.2, 1e-12));

  SSFWeights bad;
  bad.lambda_sil = -1.0;
  CHECK_THROWS_AS(loss_hs(shape, pose, nullptr, nullptr, target, mask, cam, bad), validation_error);
  CHECK_THROWS_AS(loss_hs(shape, pose, nullptr, nullptr, target, Grid(1, 4, 4), cam, w),
                  validation_error);
}

TEST_CASE("fitting loss gradient matches central finite differences") {
  const Camera cam = fit_camera();
  Rng rng(17);

  const CapsuleShape shape = random_shape(rng);
  const CapsulePose pose = random_pose(rng, 0.4, {25, -30, 2900});

  // targets from a nearby but different body, so every term pulls somewhere
  CapsuleShape other = shape;
  for (int i = 0; i < kShapeParams; ++i) other.beta[i] *= rng.uniform(0.97, 1.03);
  other.validate();
  CapsulePose other_pose = pose;
  for (int e = 0; e < kEdges; ++e)
    other_pose.theta[e] += V3d{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
                               rng.uniform(-0.05, 0.05)};
  other_pose.root_translation += V3d{8, -6, 25};
  const Pose3D target = pose_body(other, other_pose).pose;
  const Grid mask = soft_silhouette(other, other_pose, cam);

  SSFWeights w;
  w.lambda_beta = 2.0;
  w.lambda_theta = 1.5;
  w.lambda_pos = 1.0;
  w.lambda_sil = 100.0;

  FitVec grad;
  loss_hs(shape, pose, &other, &other_pose, target, mask, cam, w, nullptr, &grad);

  const FitVec scales = fit_scales();
  const FitVec p0 = pack_fit(shape, pose);
  auto value_at = [&](const FitVec& q) {
    const auto [s, t] = unpack_fit(q);
    return loss_hs(s, t, &other, &other_pose, target, mask, cam, w);
  };
  for (int k = 0; k < kFitParams; ++k) {
    const double h = 1e-5 * scales[k];
    FitVec q = p0;
    q[k] = p0[k] + h;
    const double up = value_at(q);
    q[k] = p0[k] - h;
    const double dn = value_at(q);
    const double fd = (up - dn) / (2.0 * h);
    INFO("parameter slot " << k);
    REQUIRE(close(grad[k], fd, 1e-4));
  }
}

TEST_CASE("the soft silhouette agrees with the exact raster") {
  const Camera cam = fit_camera();
  Rng rng(21);
  const CapsuleShape shape = template_shape();
  const CapsulePose pose = random_pose(rng, 0.4, {0, 40, 2800});

  Scene solo;
  solo.camera = cam;
  solo.people.push_back(pose_body(shape, pose));
  const Grid exact = person_silhouette(solo, 0);
  const Grid soft = soft_silhouette(shape, pose, cam);

  for (double v : soft.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(silhouette_iou(soft, exact) >= 0.95);

  // deep inside the torso the occupancy saturates; far away it dies
  const auto [u, v] = project(cam, pose_body(shape, pose).pose.joints[kPelvis]);
  CHECK(soft.at(0, static_cast<int>(v), static_cast<int>(u)) > 0.99);
  CHECK(soft.at(0, 0, 0) < 0.01);
}

TEST_CASE("the optimizer recovers a perturbed body and never raises the loss") {
  const Camera cam = fit_camera();
  Rng rng(25);
  const CapsuleShape truth = template_shape();
  const CapsulePose truth_pose = random_pose(rng, 0.3, {0, 0, 3000});
  const Pose3D target = pose_body(truth, truth_pose).pose;

  Scene solo;
  solo.camera = cam;
  solo.people.push_back(pose_body(truth, truth_pose));
  const Grid mask = person_silhouette(solo, 0);

  SSFWeights w;
  w.lambda_pos = 1.0;
  w.lambda_sil = 1e6;

  // zero weights: a strict no-op
  SSFWeights zero;
  zero.lambda_beta = zero.lambda_theta = zero.lambda_pos = zero.lambda_sil = 0.0;
  const auto [s0, p0] = optimize_shape(truth, truth_pose, target, mask, cam, zero, 5);
  CHECK(pack_fit(s0, p0) == pack_fit(truth, truth_pose));

  // starting at the truth with a self-consistent mask: nothing moves
  const Grid perfect = soft_silhouette(truth, truth_pose, cam);
  const auto [s1, p1] = optimize_shape(truth, truth_pose, target, perfect, cam, w, 10);
  const FitVec before = pack_fit(truth, truth_pose), after = pack_fit(s1, p1);
  double moved = 0;
  for (int k = 0; k < kFitParams; ++k) moved = std::max(moved, std::abs(after[k] - before[k]));
  CHECK(moved < 1e-6);

  // a 10% global-scale error plus a translation offset is pulled back in
  CapsuleShape init = truth;
  for (int i = 0; i < kShapeParams; ++i) init.beta[i] *= 1.10;
  init.beta[7] = std::min(init.beta[7], 1.3);
  CapsulePose init_pose = truth_pose;
  init_pose.root_translation += V3d{25, -15, 60};

  std::vector<double> trace;
  const auto [fit_shape, fit_pose] =
      optimize_shape(init, init_pose, target, mask, cam, w, 120, &trace);
  REQUIRE(trace.size() >= 2);
  for (size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
  CHECK(trace.back() < 0.2 * trace.front());

  const Pose3D fitted = pose_body(fit_shape, fit_pose).pose;
  CHECK(max_joint_gap(fitted, target) < 30.0);
  CHECK(silhouette_iou(soft_silhouette(fit_shape, fit_pose, cam), mask) >= 0.9);

  // basic input validation
  CHECK_THROWS_AS(optimize_shape(truth, truth_pose, target, mask, cam, w, 0), validation_error);
  SSFWeights blowup = w;
  blowup.lambda_pos = 1e308;  // overflows the squared-mm joint term to infinity
  CHECK_THROWS_AS(optimize_shape(init, init_pose, target, mask, cam, blowup, 3),
                  convergence_error);
}
