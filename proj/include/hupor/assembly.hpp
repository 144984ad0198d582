#pragma once

// from fused maps to people: heatmap peak extraction, depth-gated limb
// scoring, greedy tree-order grouping, torso-symmetry root depth search,
// and perspective lifting of grouped 2d skeletons into camera space.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "hupor/body.hpp"
#include "hupor/core.hpp"
#include "hupor/grid.hpp"
#include "hupor/targets.hpp"

namespace hupor {

struct JointCandidate {
  int type = 0;         // joint index
  double u = 0, v = 0;  // heatmap cells, sub-pixel
  double confidence = 0;
};

enum class JointSource { missing, detected, reasoned, refined };

inline const char* joint_source_name(JointSource s) {
  switch (s) {
    case JointSource::detected: return "detected";
    case JointSource::reasoned: return "reasoned";
    case JointSource::refined: return "refined";
    default: return "missing";
  }
}

// one grouped person. 2d fields are filled by assemble; root depth and the
// lifted pose by the later stages. pose3d joints are only meaningful where
// lifted[j] is set; everything else awaits refinement.
struct PersonEstimate {
  std::array<std::optional<std::array<double, 2>>, kJoints> joints2d;  // heatmap cells
  std::array<double, kJoints> confidences{};
  std::array<double, kEdges> rel_depths{};  // mm, parent -> child, matched edges only
  std::array<bool, kEdges> edge_present{};
  std::optional<double> root_depth_mm;
  std::string root_source = "unresolved";
  std::optional<Pose3D> pose3d;
  std::array<bool, kJoints> lifted{};
  std::array<JointSource, kJoints> provenance{};  // value-init -> missing
};

// local maxima of every keypoint channel above tau, refined to sub-pixel by
// a quadratic fit on log values (exact for the gaussian targets, whose
// per-splat normalization preserves log ratios). sorted by confidence, ties
// kept in channel-major scan order.
inline std::vector<JointCandidate> extract_peaks(const HeatmapSet& maps, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw validation_error("peak threshold must lie in (0, 1)");
  const Grid& k = maps.keypoints;
  std::vector<JointCandidate> out;
  auto log_offset = [&](double left, double centre, double right) {
    if (left <= 0 || right <= 0) return 0.0;
    const double l = std::log(left), c = std::log(centre), r = std::log(right);
    const double denom = l + r - 2.0 * c;
    if (denom >= -1e-12) return 0.0;
    return std::clamp((l - r) / (2.0 * denom), -0.5, 0.5);
  };
  for (int j = 0; j < k.c; ++j)
    for (int y = 0; y < k.h; ++y)
      for (int x = 0; x < k.w; ++x) {
        const double v = k.at(j, y, x);
        if (v < tau) continue;
        bool peak = true;
        for (int dy = -1; dy <= 1 && peak; ++dy)
          for (int dx = -1; dx <= 1 && peak; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= k.h || nx < 0 || nx >= k.w) continue;
            const double nv = k.at(j, ny, nx);
            // plateaus keep only their first cell in scan order
            if (nv > v || (nv == v && (dy < 0 || (dy == 0 && dx < 0)))) peak = false;
          }
        if (!peak) continue;
        const double dx = (x > 0 && x + 1 < k.w) ? log_offset(k.at(j, y, x - 1), v, k.at(j, y, x + 1)) : 0.0;
        const double dy = (y > 0 && y + 1 < k.h) ? log_offset(k.at(j, y - 1, x), v, k.at(j, y + 1, x)) : 0.0;
        out.push_back({j, x + dx, y + dy, v});
      }
  std::stable_sort(out.begin(), out.end(),
                   [](const JointCandidate& a, const JointCandidate& b) {
                     return a.confidence > b.confidence;
                   });
  return out;
}

struct LimbScore {
  double alignment = 0;   // mean paf dot along the segment, in [-1, 1]
  double depth_gate = 1;  // multiplicative depth-consistency penalty, in (0, 1]
  double rel_depth = 0;   // mean sampled depth channel, mm
  double total = 0;       // alignment * depth_gate
};

// line integral of paf alignment from a to b, gated by how well the sampled
// depth delta agrees with the delta the canonical bone length implies at the
// hint depth. coincident endpoints score zero.
inline LimbScore score_limb(const Grid& pafs, int edge, const JointCandidate& a,
                            const JointCandidate& b, double root_depth_hint, const Camera& cam,
                            int samples = 10) {
  if (edge < 0 || edge >= kEdges) throw validation_error("limb edge index out of range");
  if (pafs.c != kPafChannels) throw validation_error("paf grid has wrong channel count");
  if (!(root_depth_hint > 0)) throw validation_error("root depth hint must be positive");
  if (samples < 1) throw validation_error("limb sampling needs at least one point");
  const double sx = b.u - a.u, sy = b.v - a.v;
  const double len = std::hypot(sx, sy);
  LimbScore score;
  if (len < 1e-9) return {0, 0, 0, 0};
  const double ux = sx / len, uy = sy / len;
  double align = 0, dz = 0;
  for (int s = 0; s < samples; ++s) {
    const double t = (s + 0.5) / samples;
    const int x = static_cast<int>(std::lround(a.u + t * sx));
    const int y = static_cast<int>(std::lround(a.v + t * sy));
    if (x < 0 || x >= pafs.w || y < 0 || y >= pafs.h) continue;  // off-grid samples contribute 0
    align += pafs.at(3 * edge, y, x) * ux + pafs.at(3 * edge + 1, y, x) * uy;
    dz += pafs.at(3 * edge + 2, y, x);
  }
  score.alignment = std::clamp(align / samples, -1.0, 1.0);
  score.rel_depth = dz / samples;
  // |dz| the canonical bone implies once its 2d extent is accounted for
  const int child = skeleton().edges[edge].second;
  const double bone = norm(template_offsets()[child]);
  const double mm_per_cell = kStride * root_depth_hint / cam.focal;
  const double ext2 = (sx * sx + sy * sy) * mm_per_cell * mm_per_cell;
  const double implied = std::sqrt(std::max(0.0, bone * bone - ext2));
  score.depth_gate =
      std::exp(-std::abs(std::abs(score.rel_depth) - implied) / (0.1 * root_depth_hint));
  score.total = score.alignment * score.depth_gate;
  return score;
}

namespace detail {

// read the person's depth off one torso channel; discs are constant per
// person, so the nearest cell decodes exactly.
inline std::optional<double> decode_root_at(const Grid& root_maps, int slot, double u, double v,
                                            const Camera& cam) {
  const int x = static_cast<int>(std::lround(u));
  const int y = static_cast<int>(std::lround(v));
  if (x < 0 || x >= root_maps.w || y < 0 || y >= root_maps.h) return std::nullopt;
  const double zhat = root_maps.at(slot, y, x);
  if (zhat <= 0) return std::nullopt;
  return denormalized_depth(zhat, cam);
}

}  // namespace detail

struct AssembleConfig {
  double peak_threshold = 0.3;  // tau for extract_peaks
  double min_limb_score = 0.05;
  int max_people = 20;
  double depth_hint_mm = 3000;  // cells-to-mm conversion for the depth gate
  int limb_samples = 10;

  void validate() const {
    if (!(peak_threshold > 0 && peak_threshold < 1))
      throw validation_error("peak threshold must lie in (0, 1)");
    if (max_people < 1) throw validation_error("max people must be positive");
    if (!(depth_hint_mm > 0)) throw validation_error("depth hint must be positive");
    if (limb_samples < 1) throw validation_error("limb sampling needs at least one point");
  }
};

// greedy grouping: people are seeded from pelvis candidates in confidence
// order, then each edge in tree order matches owners of the parent joint to
// unused child candidates, best limb score first. every candidate is used at
// most once; leftovers are dropped (counted into *dropped if given). when
// root maps are given, each person's depth hint is decoded at its pelvis,
// which keeps the gate honest across the depth range; otherwise the
// configured hint applies to everyone.
inline std::vector<PersonEstimate> assemble(const std::vector<JointCandidate>& candidates,
                                            const Grid& pafs, const Camera& cam,
                                            const AssembleConfig& config,
                                            const Grid* root_maps = nullptr,
                                            int* dropped = nullptr) {
  config.validate();
  std::vector<std::vector<int>> by_type(kJoints);
  for (size_t i = 0; i < candidates.size(); ++i) {
    const JointCandidate& c = candidates[i];
    if (c.type < 0 || c.type >= kJoints) throw validation_error("candidate joint type out of range");
    by_type[c.type].push_back(static_cast<int>(i));
  }

  std::vector<PersonEstimate> people;
  std::vector<double> hints;
  std::vector<char> used(candidates.size(), 0);
  for (int idx : by_type[kPelvis]) {
    if (static_cast<int>(people.size()) >= config.max_people) break;
    PersonEstimate p;
    p.joints2d[kPelvis] = {{candidates[idx].u, candidates[idx].v}};
    p.confidences[kPelvis] = candidates[idx].confidence;
    p.provenance[kPelvis] = JointSource::detected;
    used[idx] = 1;
    double hint = config.depth_hint_mm;
    if (root_maps)
      if (auto z = detail::decode_root_at(*root_maps, 0, candidates[idx].u, candidates[idx].v, cam))
        hint = *z;
    hints.push_back(hint);
    people.push_back(std::move(p));
  }

  struct Pair {
    double score;
    double rel_depth;
    int person, cand;
  };
  for (int e = 0; e < kEdges; ++e) {
    const auto [pj, cj] = skeleton().edges[e];
    std::vector<Pair> pairs;
    for (size_t pi = 0; pi < people.size(); ++pi) {
      if (!people[pi].joints2d[pj]) continue;
      const JointCandidate parent{pj, (*people[pi].joints2d[pj])[0], (*people[pi].joints2d[pj])[1],
                                  people[pi].confidences[pj]};
      for (int ci : by_type[cj]) {
        if (used[ci]) continue;
        const LimbScore s =
            score_limb(pafs, e, parent, candidates[ci], hints[pi], cam, config.limb_samples);
        if (s.total >= config.min_limb_score)
          pairs.push_back({s.total, s.rel_depth, static_cast<int>(pi), ci});
      }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.person != b.person) return a.person < b.person;
      return a.cand < b.cand;
    });
    for (const Pair& pr : pairs) {
      PersonEstimate& p = people[pr.person];
      if (p.joints2d[cj] || used[pr.cand]) continue;
      p.joints2d[cj] = {{candidates[pr.cand].u, candidates[pr.cand].v}};
      p.confidences[cj] = candidates[pr.cand].confidence;
      p.provenance[cj] = JointSource::detected;
      p.rel_depths[e] = pr.rel_depth;
      p.edge_present[e] = true;
      used[pr.cand] = 1;
    }
  }

  if (dropped) *dropped = static_cast<int>(std::count(used.begin(), used.end(), 0));
  return people;
}

struct RootSearchConfig {
  double conf_thresh = 0.5;
  // depth offsets from the canonical body, which has every torso joint in
  // the pelvis plane when facing the camera: all zero.
  double shoulder_depth_offset = 0;
  std::array<double, kTorsoJoints> single_joint_offset{};
};

// torso-symmetry root depth search: a confident pelvis is decoded directly;
// otherwise the first confident symmetric pair (hips, then shoulders) is
// averaged; otherwise a single confident torso joint plus its offset. returns
// nothing when no torso joint is both confident and decodable.
inline std::optional<double> infer_root_depth(const PersonEstimate& person, const Grid& root_maps,
                                              const Camera& cam,
                                              const RootSearchConfig& config = {},
                                              std::string* source = nullptr) {
  if (root_maps.c != kRootChannels) throw validation_error("root map has wrong channel count");
  const SkeletonSpec& sk = skeleton();
  auto decoded = [&](int joint) -> std::optional<double> {
    if (!person.joints2d[joint] || person.confidences[joint] < config.conf_thresh)
      return std::nullopt;
    const auto& uv = *person.joints2d[joint];
    return detail::decode_root_at(root_maps, sk.torso_slot(joint), uv[0], uv[1], cam);
  };
  auto report = [&](const std::string& s) {
    if (source) *source = s;
  };

  if (auto z = decoded(kPelvis)) {
    report("pelvis");
    return z;
  }
  const std::array<std::pair<int, int>, 2> pairs = {{{kLHip, kRHip}, {kLShoulder, kRShoulder}}};
  for (const auto& [left, right] : pairs) {
    const auto zl = decoded(left), zr = decoded(right);
    if (zl && zr) {
      const bool hips = left == kLHip;
      report(hips ? "hip_pair" : "shoulder_pair");
      return 0.5 * (*zl + *zr) + (hips ? 0.0 : config.shoulder_depth_offset);
    }
  }
  for (int slot = 0; slot < kTorsoJoints; ++slot) {
    const int j = sk.torso_set[slot];
    if (auto z = decoded(j)) {
      report("single_" + sk.joint_names[j]);
      return *z + config.single_joint_offset[slot];
    }
  }
  report("unresolved");
  return std::nullopt;
}

// perspective lifting: the pelvis is backprojected at the resolved root
// depth, then each matched edge adds its relative depth to place the child.
// joints whose 2d estimate or edge is missing stay unlifted.
inline Pose3D lift_to_3d(const PersonEstimate& person, const Camera& cam,
                         std::array<bool, kJoints>* lifted_out = nullptr) {
  if (!person.root_depth_mm) throw validation_error("lifting requires a resolved root depth");
  if (!person.joints2d[kPelvis]) throw validation_error("lifting requires a pelvis estimate");
  Pose3D pose;
  std::array<bool, kJoints> lifted{};
  std::array<double, kJoints> depth{};
  const auto& root_uv = *person.joints2d[kPelvis];
  depth[kPelvis] = *person.root_depth_mm;
  pose.joints[kPelvis] =
      backproject(cam, root_uv[0] * kStride, root_uv[1] * kStride, depth[kPelvis]);
  lifted[kPelvis] = true;
  const SkeletonSpec& sk = skeleton();
  for (int e = 0; e < kEdges; ++e) {
    const auto [pj, cj] = sk.edges[e];
    if (!person.edge_present[e] || !lifted[pj] || !person.joints2d[cj]) continue;
    const double z = depth[pj] + person.rel_depths[e];
    if (!(z > 0)) continue;  // an impossible depth leaves the subtree unlifted
    const auto& uv = *person.joints2d[cj];
    depth[cj] = z;
    pose.joints[cj] = backproject(cam, uv[0] * kStride, uv[1] * kStride, z);
    lifted[cj] = true;
  }
  if (lifted_out) *lifted_out = lifted;
  return pose;
}

// full map-to-people decode. when the pre-reasoning keypoint maps are given,
// candidates that only exist in the fused maps are marked as reasoned.
inline std::vector<PersonEstimate> decode_people(const HeatmapSet& maps, const Camera& cam,
                                                 const AssembleConfig& config = {},
                                                 const RootSearchConfig& root_config = {},
                                                 const Grid* detected_keypoints = nullptr) {
  std::vector<JointCandidate> candidates = extract_peaks(maps, config.peak_threshold);
  std::vector<PersonEstimate> people = assemble(candidates, maps.pafs, cam, config, &maps.root_depth);
  for (PersonEstimate& p : people) {
    if (detected_keypoints) {
      for (int j = 0; j < kJoints; ++j) {
        if (!p.joints2d[j] || p.provenance[j] != JointSource::detected) continue;
        const auto& uv = *p.joints2d[j];
        const int x = std::clamp(static_cast<int>(std::lround(uv[0])), 0, maps.keypoints.w - 1);
        const int y = std::clamp(static_cast<int>(std::lround(uv[1])), 0, maps.keypoints.h - 1);
        if (detected_keypoints->at(j, y, x) < config.peak_threshold)
          p.provenance[j] = JointSource::reasoned;
      }
    }
    p.root_depth_mm = infer_root_depth(p, maps.root_depth, cam, root_config, &p.root_source);
    if (p.root_depth_mm) p.pose3d = lift_to_3d(p, cam, &p.lifted);
  }
  return people;
}

}  // namespace hupor
