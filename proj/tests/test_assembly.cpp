#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hupor/assembly.hpp"
#include "hupor/body.hpp"
#include "hupor/rng.hpp"
#include "hupor/targets.hpp"

using namespace hupor;

namespace {

bool close(double a, double b, double tol = 1e-4) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

Camera map_camera() {
  Camera cam;
  cam.focal = 110.0;
  cam.cx = 64.0;
  cam.cy = 64.0;
  cam.width = 128;
  cam.height = 128;
  return cam;
}

Pose3D standing_pose(const V3d& pelvis) {
  CapsulePose p;
  p.root_translation = pelvis;
  return pose_body(template_shape(), p).pose;
}

const JointCandidate* find_candidate(const std::vector<JointCandidate>& cands, int type) {
  for (const auto& c : cands)
    if (c.type == type) return &c;
  return nullptr;
}

}  // namespace

TEST_CASE("peak extraction finds gaussian maxima with exact sub-pixel positions") {
  const Camera cam = map_camera();
  const Pose3D pose = standing_pose({37.0, -21.0, 3000.0});
  const HeatmapSet maps = build_heatmap_set({pose}, cam, full_joint_mask(1), full_edge_mask(1));

  const std::vector<JointCandidate> cands = extract_peaks(maps, 0.3);
  REQUIRE(cands.size() == kJoints);
  for (int j = 0; j < kJoints; ++j) {
    const JointCandidate* c = find_candidate(cands, j);
    REQUIRE(c != nullptr);
    const detail::GridPoint g = detail::to_grid(cam, pose.joints[j]);
    // the log-quadratic fit inverts the gaussian painting exactly
    CHECK(std::abs(c->u - g.gx) < 1e-9);
    CHECK(std::abs(c->v - g.gy) < 1e-9);
    CHECK(c->confidence == 1.0);
  }

  // sorted by confidence, descending
  for (size_t i = 1; i < cands.size(); ++i)
    CHECK(cands[i - 1].confidence >= cands[i].confidence);

  // an empty map yields no candidates
  const HeatmapSet blank = make_heatmap_set(cam);
  CHECK(extract_peaks(blank, 0.3).empty());

  // two peaks one cell apart: non-maximum suppression keeps the larger
  HeatmapSet pair = make_heatmap_set(cam);
  pair.keypoints.at(0, 20, 10) = 1.0;
  pair.keypoints.at(0, 20, 11) = 0.95;
  const auto nms = extract_peaks(pair, 0.3);
  REQUIRE(nms.size() == 1);
  CHECK(nms[0].u == 10.0);  // zero-valued far neighbour disables the sub-pixel fit
  CHECK(nms[0].v == 20.0);

  // a two-cell plateau keeps only its first cell in scan order
  HeatmapSet flat = make_heatmap_set(cam);
  flat.keypoints.at(2, 7, 7) = 0.8;
  flat.keypoints.at(2, 7, 8) = 0.8;
  const auto plateau = extract_peaks(flat, 0.3);
  REQUIRE(plateau.size() == 1);
  CHECK(plateau[0].u == 7.0);

  CHECK_THROWS_AS(extract_peaks(maps, 0.0), validation_error);
  CHECK_THROWS_AS(extract_peaks(maps, 1.0), validation_error);
}

TEST_CASE("limb scoring rewards alignment and gates on depth consistency") {
  const Camera cam = map_camera();
  const int edge = 3;  // shoulder to elbow, canonical length 280mm
  const double bone = norm(template_offsets()[skeleton().edges[edge].second]);
  const double hint = 3000.0;
  const double cells = bone * cam.focal / (hint * kStride);  // 2d extent implying dz = 0

  Grid pafs(kPafChannels, 32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) pafs.at(3 * edge, y, x) = 1.0;  // unit +x everywhere

  const JointCandidate a{skeleton().edges[edge].first, 8.0, 16.0, 1.0};
  const JointCandidate b{skeleton().edges[edge].second, 8.0 + cells, 16.0, 1.0};

  // perfectly aligned paf and a depth delta the geometry implies: score 1
  // (up to rounding in the implied-extent arithmetic)
  const LimbScore perfect = score_limb(pafs, edge, a, b, hint, cam);
  CHECK(perfect.alignment == 1.0);
  CHECK(close(perfect.depth_gate, 1.0, 1e-6));
  CHECK(close(perfect.total, 1.0, 1e-6));

  // an orthogonal field contributes nothing
  Grid ortho(kPafChannels, 32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) ortho.at(3 * edge + 1, y, x) = 1.0;
  CHECK(score_limb(ortho, edge, a, b, hint, cam).alignment == 0.0);
  CHECK(score_limb(ortho, edge, a, b, hint, cam).total == 0.0);

  // an inconsistent depth channel is penalized exponentially
  Grid deep = pafs;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) deep.at(3 * edge + 2, y, x) = 400.0;
  const LimbScore gated = score_limb(deep, edge, a, b, hint, cam);
  CHECK(close(gated.depth_gate, std::exp(-400.0 / 300.0), 1e-5));
  CHECK(close(gated.rel_depth, 400.0, 1e-12));
  CHECK(gated.total < 0.3);

  // coincident endpoints cannot form a limb
  CHECK(score_limb(pafs, edge, a, a, hint, cam).total == 0.0);

  CHECK_THROWS_AS(score_limb(pafs, -1, a, b, hint, cam), validation_error);
  CHECK_THROWS_AS(score_limb(pafs, edge, a, b, 0.0, cam), validation_error);
  CHECK_THROWS_AS(score_limb(Grid(3, 32, 32), edge, a, b, hint, cam), validation_error);
}

TEST_CASE("depth gating separates crossing people at distinct depths") {
  const Camera cam = map_camera();
  const int edge = 4;  // elbow to wrist, canonical length 250mm
  const double bone = 250.0;

  // near person: forearm fully in-plane, pointing +x
  Pose3D near = standing_pose({-400.0, 0.0, 2600.0});
  near.joints[kLElbow] = backproject(cam, 48.0, 64.0, 2600.0);
  near.joints[kLWrist] = backproject(cam, 48.0 + bone * cam.focal / 2600.0, 64.0, 2600.0);

  // far person: forearm mostly toward the camera, collinear with the near
  // forearm in the image, so either wrist continues either elbow's direction
  Pose3D far = standing_pose({400.0, 0.0, 3400.0});
  far.joints[kLElbow] = backproject(cam, 72.0, 64.0, 3400.0);
  const double dx = 86.6;  // small in-plane part of the far forearm
  const V3d fe = far.joints[kLElbow];
  far.joints[kLWrist] = {fe.x + dx, fe.y, fe.z - std::sqrt(bone * bone - dx * dx)};

  const Grid pafs = make_paf_maps({near, far}, cam);
  auto cand = [&](const Pose3D& p, int j) {
    const detail::GridPoint g = detail::to_grid(cam, p.joints[j]);
    return JointCandidate{j, g.gx, g.gy, 1.0};
  };
  // each person scores with its own root depth, as assembly would decode it
  const LimbScore near_true = score_limb(pafs, edge, cand(near, kLElbow), cand(near, kLWrist), 2600.0, cam);
  const LimbScore far_true = score_limb(pafs, edge, cand(far, kLElbow), cand(far, kLWrist), 3400.0, cam);
  const LimbScore near_crossed = score_limb(pafs, edge, cand(near, kLElbow), cand(far, kLWrist), 2600.0, cam);
  const LimbScore far_crossed = score_limb(pafs, edge, cand(far, kLElbow), cand(near, kLWrist), 3400.0, cam);

  // the crossed continuation is perfectly aligned in 2d; the depth gate alone
  // votes it down
  CHECK(close(near_crossed.alignment, 1.0, 1e-12));
  CHECK(near_crossed.depth_gate < 0.85);
  CHECK(near_true.total > near_crossed.total + 0.15);
  CHECK(far_true.total > 0.9);
  CHECK(far_crossed.total <= 0.0);  // runs against the field direction
}

TEST_CASE("greedy assembly groups perfect maps into complete people") {
  const Camera cam = map_camera();
  AssembleConfig config;

  // one person
  const Pose3D solo = standing_pose({0.0, 0.0, 3000.0});
  const HeatmapSet maps = build_heatmap_set({solo}, cam, full_joint_mask(1), full_edge_mask(1));
  const auto cands = extract_peaks(maps, config.peak_threshold);
  const auto people = assemble(cands, maps.pafs, cam, config, &maps.root_depth);
  REQUIRE(people.size() == 1);
  for (int j = 0; j < kJoints; ++j) {
    REQUIRE(people[0].joints2d[j].has_value());
    CHECK(people[0].provenance[j] == JointSource::detected);
    const detail::GridPoint g = detail::to_grid(cam, solo.joints[j]);
    CHECK(std::abs((*people[0].joints2d[j])[0] - g.gx) < 0.05);
    CHECK(std::abs((*people[0].joints2d[j])[1] - g.gy) < 0.05);
  }
  for (int e = 0; e < kEdges; ++e) {
    CHECK(people[0].edge_present[e]);
    const auto [pj, cj] = skeleton().edges[e];
    const double dz = solo.joints[cj].z - solo.joints[pj].z;
    CHECK(close(people[0].rel_depths[e], dz, 1e-9));
  }

  // deterministic: the same candidates assemble identically
  const auto again = assemble(cands, maps.pafs, cam, config, &maps.root_depth);
  REQUIRE(again.size() == people.size());
  for (int j = 0; j < kJoints; ++j)
    CHECK((*again[0].joints2d[j])[0] == (*people[0].joints2d[j])[0]);

  // no candidates, no people
  CHECK(assemble({}, maps.pafs, cam, config).empty());

  // three well-separated people come back complete with zero joint swaps
  const std::vector<Pose3D> trio = {standing_pose({-950.0, 0.0, 3200.0}),
                                    standing_pose({0.0, 0.0, 3200.0}),
                                    standing_pose({950.0, 0.0, 3200.0})};
  const HeatmapSet trio_maps = build_heatmap_set(trio, cam, full_joint_mask(3), full_edge_mask(3));
  const auto trio_people = assemble(extract_peaks(trio_maps, config.peak_threshold),
                                    trio_maps.pafs, cam, config, &trio_maps.root_depth);
  REQUIRE(trio_people.size() == 3);
  for (const PersonEstimate& person : trio_people) {
    REQUIRE(person.joints2d[kPelvis].has_value());
    // identify the owner by the pelvis, then demand every joint is theirs
    int owner = -1;
    for (size_t i = 0; i < trio.size(); ++i) {
      const detail::GridPoint g = detail::to_grid(cam, trio[i].joints[kPelvis]);
      if (std::abs((*person.joints2d[kPelvis])[0] - g.gx) < 1.0) owner = static_cast<int>(i);
    }
    REQUIRE(owner >= 0);
    for (int j = 0; j < kJoints; ++j) {
      REQUIRE(person.joints2d[j].has_value());
      const detail::GridPoint g = detail::to_grid(cam, trio[owner].joints[j]);
      CHECK(std::abs((*person.joints2d[j])[0] - g.gx) < 0.5);
      CHECK(std::abs((*person.joints2d[j])[1] - g.gy) < 0.5);
    }
  }

  // the people cap holds
  AssembleConfig capped = config;
  capped.max_people = 2;
  CHECK(assemble(extract_peaks(trio_maps, 0.3), trio_maps.pafs, cam, capped,
                 &trio_maps.root_depth).size() == 2);

  // an orphan candidate far from everyone is dropped and counted
  auto with_orphan = cands;
  with_orphan.push_back({kNeck, 1.0, 1.0, 0.9});
  int dropped = -1;
  assemble(with_orphan, maps.pafs, cam, config, &maps.root_depth, &dropped);
  CHECK(dropped == 1);
}

TEST_CASE("root depth search follows the torso priority order") {
  const Camera cam = map_camera();
  const Pose3D pose = standing_pose({120.0, -60.0, 3100.0});
  const Grid roots = make_root_depth_maps({pose}, cam);
  const SkeletonSpec& sk = skeleton();

  PersonEstimate person;
  for (int j : sk.torso_set) {
    const detail::GridPoint g = detail::to_grid(cam, pose.joints[j]);
    person.joints2d[j] = {{g.gx, g.gy}};
    person.confidences[j] = 0.9;
  }

  std::string source;
  auto z = infer_root_depth(person, roots, cam, {}, &source);
  REQUIRE(z.has_value());
  CHECK(source == "pelvis");
  CHECK(close(*z, pose.joints[kPelvis].z, 1e-9));

  // a hesitant pelvis falls back to the hip pair
  person.confidences[kPelvis] = 0.2;
  z = infer_root_depth(person, roots, cam, {}, &source);
  REQUIRE(z.has_value());
  CHECK(source == "hip_pair");
  const double hip_mean = 0.5 * (pose.joints[kLHip].z + pose.joints[kRHip].z);
  CHECK(close(*z, hip_mean, 1e-9));

  // no hips either: the shoulder pair with its (zero) torso offset
  person.confidences[kLHip] = person.confidences[kRHip] = 0.0;
  z = infer_root_depth(person, roots, cam, {}, &source);
  REQUIRE(z.has_value());
  CHECK(source == "shoulder_pair");
  CHECK(close(*z, 0.5 * (pose.joints[kLShoulder].z + pose.joints[kRShoulder].z), 1e-9));

  // a single confident torso joint still resolves
  person.confidences[kLShoulder] = 0.0;
  person.confidences[kHead] = 0.0;
  person.confidences[kRShoulder] = 0.0;
  z = infer_root_depth(person, roots, cam, {}, &source);
  REQUIRE(z.has_value());
  CHECK(source == "single_neck");
  CHECK(close(*z, pose.joints[kNeck].z, 1e-9));

  // nothing confident: unresolved, not an exception
  person.confidences.fill(0.0);
  z = infer_root_depth(person, roots, cam, {}, &source);
  CHECK(!z.has_value());
  CHECK(source == "unresolved");

  // a confident joint whose map channel is empty cannot be decoded
  PersonEstimate blind;
  const detail::GridPoint g = detail::to_grid(cam, pose.joints[kPelvis]);
  blind.joints2d[kPelvis] = {{g.gx, g.gy}};
  blind.confidences[kPelvis] = 0.9;
  Grid no_pelvis = roots;
  for (int y = 0; y < no_pelvis.h; ++y)
    for (int x = 0; x < no_pelvis.w; ++x) no_pelvis.at(0, y, x) = 0.0;
  CHECK(!infer_root_depth(blind, no_pelvis, cam, {}, &source).has_value());

  // the documented mean: hips decoding to 2900 and 3100 average to 3000
  Grid two(kRootChannels, 32, 32);
  two.at(5, 16, 10) = normalized_depth(2900.0, cam);
  two.at(6, 16, 20) = normalized_depth(3100.0, cam);
  PersonEstimate hips;
  hips.joints2d[kLHip] = {{10.0, 16.0}};
  hips.joints2d[kRHip] = {{20.0, 16.0}};
  hips.confidences[kLHip] = hips.confidences[kRHip] = 0.8;
  z = infer_root_depth(hips, two, cam, {}, &source);
  REQUIRE(z.has_value());
  CHECK(source == "hip_pair");
  CHECK(close(*z, 3000.0, 1e-9));
}

TEST_CASE("lifting reconstructs the scene geometry from perfect maps") {
  const Camera cam = map_camera();
  const std::vector<Pose3D> duo = {standing_pose({-600.0, 0.0, 2800.0}),
                                   standing_pose({600.0, 0.0, 3300.0})};
  const HeatmapSet maps = build_heatmap_set(duo, cam, full_joint_mask(2), full_edge_mask(2));
  const auto people = decode_people(maps, cam);
  REQUIRE(people.size() == 2);

  for (const PersonEstimate& person : people) {
    REQUIRE(person.root_depth_mm.has_value());
    REQUIRE(person.pose3d.has_value());
    CHECK(person.root_source == "pelvis");
    int owner = std::abs(*person.root_depth_mm - 2800.0) < 100.0 ? 0 : 1;
    double mpjpe = 0;
    for (int j = 0; j < kJoints; ++j) {
      REQUIRE(person.lifted[j]);
      mpjpe += norm(person.pose3d->joints[j] - duo[owner].joints[j]) / kJoints;
      // reprojection returns exactly to the 2d estimate
      const auto [u, v] = project(cam, person.pose3d->joints[j]);
      CHECK(std::abs(u / kStride - (*person.joints2d[j])[0]) < 1e-6);
      CHECK(std::abs(v / kStride - (*person.joints2d[j])[1]) < 1e-6);
    }
    CHECK(mpjpe < 0.01);  // perfect inputs decode to sub-hundredth-mm error
    CHECK(mpjpe < 20.0);
  }

  // zero relative depths put every joint on the root plane
  PersonEstimate flat;
  flat.joints2d[kPelvis] = {{16.0, 16.0}};
  flat.joints2d[kNeck] = {{16.0, 12.0}};
  flat.joints2d[kHead] = {{16.0, 10.0}};
  flat.edge_present[0] = flat.edge_present[1] = true;
  flat.root_depth_mm = 3000.0;
  const Pose3D plane = lift_to_3d(flat, cam);
  CHECK(plane.joints[kPelvis].z == 3000.0);
  CHECK(plane.joints[kNeck].z == 3000.0);
  CHECK(plane.joints[kHead].z == 3000.0);

  // a missing link leaves the subtree unlifted without crashing
  PersonEstimate gap = flat;
  gap.edge_present[1] = false;
  std::array<bool, kJoints> lifted{};
  lift_to_3d(gap, cam, &lifted);
  CHECK(lifted[kNeck]);
  CHECK(!lifted[kHead]);

  // an impossible relative depth stops the chain instead of crashing
  PersonEstimate sunk = flat;
  sunk.rel_depths[1] = -5000.0;
  lift_to_3d(sunk, cam, &lifted);
  CHECK(!lifted[kHead]);

  // lifting demands a resolved root and a pelvis
  PersonEstimate rootless = flat;
  rootless.root_depth_mm.reset();
  CHECK_THROWS_AS(lift_to_3d(rootless, cam), validation_error);
  PersonEstimate pelvisless = flat;
  pelvisless.joints2d[kPelvis].reset();
  CHECK_THROWS_AS(lift_to_3d(pelvisless, cam), validation_error);
}

TEST_CASE("joints absent from the detected maps are marked as reasoned") {
  const Camera cam = map_camera();
  const Pose3D pose = standing_pose({0.0, 0.0, 3000.0});
  const HeatmapSet fused = build_heatmap_set({pose}, cam, full_joint_mask(1), full_edge_mask(1));

  Grid detected = fused.keypoints;
  for (int y = 0; y < detected.h; ++y)
    for (int x = 0; x < detected.w; ++x) detected.at(kLWrist, y, x) = 0.0;

  const auto people = decode_people(fused, cam, {}, {}, &detected);
  REQUIRE(people.size() == 1);
  CHECK(people[0].provenance[kLWrist] == JointSource::reasoned);
  CHECK(people[0].provenance[kLElbow] == JointSource::detected);
  CHECK(people[0].provenance[kPelvis] == JointSource::detected);
}
