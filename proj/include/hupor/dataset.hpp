#pragma once

// on-disk dataset records: a json sidecar carrying the generating parameters
// of a scene (shapes, poses, occluders, camera, seed) plus a binary array
// container with the rasterized masks and, optionally, cached target maps.
// people are rebuilt from the generating parameters on load, so a round trip
// reproduces every joint bit for bit.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "hupor/io.hpp"
#include "hupor/occlusion.hpp"
#include "hupor/raster.hpp"
#include "hupor/scene.hpp"
#include "hupor/targets.hpp"

namespace hupor {

namespace detail {

inline JsonValue vec3_json(const V3d& v) {
  JsonValue a = JsonValue::array();
  a.items.push_back(JsonValue::of(v.x));
  a.items.push_back(JsonValue::of(v.y));
  a.items.push_back(JsonValue::of(v.z));
  return a;
}

inline V3d vec3_from_json(const JsonValue& v, const std::string& what) {
  if (!v.is_array() || v.items.size() != 3)
    throw validation_error(what + " must be a 3-element array");
  return {v.items[0].as_number(what), v.items[1].as_number(what), v.items[2].as_number(what)};
}

}  // namespace detail

inline JsonValue camera_to_json(const Camera& cam) {
  JsonValue o = JsonValue::object();
  o.set("focal", JsonValue::of(cam.focal));
  o.set("cx", JsonValue::of(cam.cx));
  o.set("cy", JsonValue::of(cam.cy));
  o.set("width", JsonValue::of(static_cast<double>(cam.width)));
  o.set("height", JsonValue::of(static_cast<double>(cam.height)));
  return o;
}

inline Camera camera_from_json(const JsonValue& v) {
  if (!v.is_object()) throw validation_error("camera must be an object");
  Camera cam;
  cam.focal = v.must("focal").as_number("camera.focal");
  cam.cx = v.must("cx").as_number("camera.cx");
  cam.cy = v.must("cy").as_number("camera.cy");
  cam.width = static_cast<int>(v.must("width").as_number("camera.width"));
  cam.height = static_cast<int>(v.must("height").as_number("camera.height"));
  cam.validate();
  return cam;
}

inline JsonValue scene_to_json(const Scene& scene) {
  JsonValue root = JsonValue::object();
  root.set("seed", JsonValue::of(std::to_string(scene.seed)));
  root.set("camera", camera_to_json(scene.camera));

  JsonValue people = JsonValue::array();
  for (std::size_t i = 0; i < scene.shapes.size(); ++i) {
    JsonValue p = JsonValue::object();
    const int person_id = i < scene.people.size() ? scene.people[i].person_id
                                                  : static_cast<int>(i) + 1;
    p.set("person_id", JsonValue::of(static_cast<double>(person_id)));
    JsonValue beta = JsonValue::array();
    for (double b : scene.shapes[i].beta) beta.items.push_back(JsonValue::of(b));
    p.set("shape", beta);
    JsonValue pose = JsonValue::object();
    pose.set("root", detail::vec3_json(scene.pose_params[i].root_translation));
    JsonValue theta = JsonValue::array();
    for (const V3d& t : scene.pose_params[i].theta) theta.items.push_back(detail::vec3_json(t));
    pose.set("theta", theta);
    p.set("pose", pose);
    people.items.push_back(p);
  }
  root.set("people", people);

  JsonValue occluders = JsonValue::array();
  for (const Occluder& occ : scene.occluders) {
    JsonValue o = JsonValue::object();
    o.set("kind", JsonValue::of(occ.kind == Occluder::Kind::box ? "box" : "sphere"));
    o.set("center", detail::vec3_json(occ.center));
    if (occ.kind == Occluder::Kind::box) o.set("half", detail::vec3_json(occ.half));
    else o.set("radius", JsonValue::of(occ.radius));
    occluders.items.push_back(o);
  }
  root.set("occluders", occluders);
  return root;
}

inline Scene scene_from_json(const JsonValue& root) {
  if (!root.is_object()) throw validation_error("scene record must be a json object");
  Scene scene;
  scene.seed = parse_seed_text(root.must("seed").as_string("seed"));
  scene.camera = camera_from_json(root.must("camera"));

  const JsonValue& people = root.must("people");
  if (!people.is_array()) throw validation_error("people must be an array");
  for (const JsonValue& p : people.items) {
    if (!p.is_object()) throw validation_error("person entry must be an object");
    CapsuleShape shape;
    const JsonValue& beta = p.must("shape");
    if (!beta.is_array() || beta.items.size() != shape.beta.size())
      throw validation_error("shape must hold " + std::to_string(shape.beta.size()) + " numbers");
    for (std::size_t i = 0; i < shape.beta.size(); ++i)
      shape.beta[i] = beta.items[i].as_number("shape");
    shape.validate();

    CapsulePose pose;
    const JsonValue& pj = p.must("pose");
    pose.root_translation = detail::vec3_from_json(pj.must("root"), "pose.root");
    const JsonValue& theta = pj.must("theta");
    if (!theta.is_array() || theta.items.size() != pose.theta.size())
      throw validation_error("pose.theta must hold " + std::to_string(pose.theta.size()) +
                             " entries");
    for (std::size_t e = 0; e < pose.theta.size(); ++e)
      pose.theta[e] = detail::vec3_from_json(theta.items[e], "pose.theta");
    pose.validate();

    const int person_id = static_cast<int>(p.must("person_id").as_number("person_id"));
    scene.shapes.push_back(shape);
    scene.pose_params.push_back(pose);
    scene.people.push_back(pose_body(shape, pose, person_id));
  }

  const JsonValue& occluders = root.must("occluders");
  if (!occluders.is_array()) throw validation_error("occluders must be an array");
  for (const JsonValue& o : occluders.items) {
    Occluder occ;
    const std::string kind = o.must("kind").as_string("occluder.kind");
    if (kind == "box") {
      occ.kind = Occluder::Kind::box;
      occ.half = detail::vec3_from_json(o.must("half"), "occluder.half");
    } else if (kind == "sphere") {
      occ.kind = Occluder::Kind::sphere;
      occ.radius = o.must("radius").as_number("occluder.radius");
    } else {
      throw validation_error("occluder.kind must be \"box\" or \"sphere\"");
    }
    occ.center = detail::vec3_from_json(o.must("center"), "occluder.center");
    scene.occluders.push_back(occ);
  }
  return scene;
}

// occlusion labels stored in the sidecar as an array of per-person 15-int rows.
inline JsonValue labels_to_json(const OcclusionLabels& labels) {
  JsonValue rows = JsonValue::array();
  for (const auto& person : labels.labels) {
    JsonValue row = JsonValue::array();
    for (int l : person) row.items.push_back(JsonValue::of(static_cast<double>(l)));
    rows.items.push_back(row);
  }
  return rows;
}

inline OcclusionLabels labels_from_json(const JsonValue& rows) {
  if (!rows.is_array()) throw validation_error("labels must be an array of rows");
  OcclusionLabels labels;
  for (const JsonValue& row : rows.items) {
    if (!row.is_array() || row.items.size() != static_cast<std::size_t>(kJoints))
      throw validation_error("label row must hold " + std::to_string(kJoints) + " entries");
    std::array<int, kJoints> person{};
    for (int j = 0; j < kJoints; ++j) {
      const int v = static_cast<int>(row.items[j].as_number("label"));
      if (v < 0 || v > 2) throw validation_error("labels must be 0, 1, or 2");
      person[j] = v;
    }
    labels.labels.push_back(person);
  }
  return labels;
}

namespace detail {

inline ArrayData mask_plane_i32(const std::vector<int>& plane, int h, int w) {
  std::vector<std::int32_t> v(plane.begin(), plane.end());
  return ArrayData::of(std::move(v), {static_cast<std::uint64_t>(h), static_cast<std::uint64_t>(w)});
}

// grids are stored channel-last so per-pixel channel vectors sit contiguously.
inline ArrayData grid_hwc(const Grid& g) {
  std::vector<double> v(static_cast<std::size_t>(g.h) * g.w * g.c);
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x)
      for (int c = 0; c < g.c; ++c)
        v[(static_cast<std::size_t>(y) * g.w + x) * g.c + c] = g.at(c, y, x);
  return ArrayData::of(std::move(v), {static_cast<std::uint64_t>(g.h),
                                      static_cast<std::uint64_t>(g.w),
                                      static_cast<std::uint64_t>(g.c)});
}

inline Grid grid_from_hwc(const ArrayData& a, const std::string& name) {
  if (a.dtype != ArrayData::DType::f64 || a.dims.size() != 3)
    throw validation_error("array " + name + " must be a rank-3 float array");
  Grid g(static_cast<int>(a.dims[2]), static_cast<int>(a.dims[0]), static_cast<int>(a.dims[1]));
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x)
      for (int c = 0; c < g.c; ++c)
        g.at(c, y, x) = a.f64[(static_cast<std::size_t>(y) * g.w + x) * g.c + c];
  return g;
}

inline std::string record_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "record_%05d", index);
  return buf;
}

}  // namespace detail

struct DatasetRecord {
  Scene scene;
  MaskSet masks;
  std::optional<OcclusionLabels> labels;
  std::optional<HeatmapSet> targets_full;     // occluded joints supervised like visible ones
  std::optional<HeatmapSet> targets_visible;  // visible-only supervision
};

inline void save_record(const std::string& dir, int index, const DatasetRecord& rec) {
  const std::string stem = dir + "/" + detail::record_stem(index);
  JsonValue side = scene_to_json(rec.scene);
  if (rec.labels) side.set("labels", labels_to_json(*rec.labels));

  ArrayMap arrays;
  arrays.emplace_back("instance",
                      detail::mask_plane_i32(rec.masks.instance_map, rec.masks.height,
                                             rec.masks.width));
  arrays.emplace_back("part", detail::mask_plane_i32(rec.masks.part_map, rec.masks.height,
                                                     rec.masks.width));
  ArrayData depth;
  depth = ArrayData::of(rec.masks.depth_buffer,
                        {static_cast<std::uint64_t>(rec.masks.height),
                         static_cast<std::uint64_t>(rec.masks.width)});
  arrays.emplace_back("depth", std::move(depth));

  JsonValue channels = JsonValue::array();
  const auto cache = [&](const char* prefix, const HeatmapSet& set) {
    const std::string base = std::string("targets/") + prefix + "/";
    arrays.emplace_back(base + "keypoints", detail::grid_hwc(set.keypoints));
    arrays.emplace_back(base + "pafs", detail::grid_hwc(set.pafs));
    arrays.emplace_back(base + "root_depth", detail::grid_hwc(set.root_depth));
    channels.items.push_back(JsonValue::of(prefix));
  };
  if (rec.targets_full) cache("full", *rec.targets_full);
  if (rec.targets_visible) cache("visible", *rec.targets_visible);
  if (!channels.items.empty()) side.set("target_sets", channels);

  write_text_file(stem + ".json", dump_json(side));
  write_arrays(stem + ".bin", arrays);
}

inline DatasetRecord load_record(const std::string& dir, int index) {
  const std::string stem = dir + "/" + detail::record_stem(index);
  DatasetRecord rec;
  const JsonValue side = parse_json(read_text_file(stem + ".json"));
  rec.scene = scene_from_json(side);
  if (const JsonValue* labels = side.find("labels")) rec.labels = labels_from_json(*labels);

  const ArrayMap arrays = read_arrays(stem + ".bin");
  const ArrayData& inst = require_array(arrays, "instance");
  const ArrayData& part = require_array(arrays, "part");
  const ArrayData& depth = require_array(arrays, "depth");
  if (inst.dtype != ArrayData::DType::i32 || inst.dims.size() != 2)
    throw validation_error("array instance must be a rank-2 int array");
  if (!ArrayData::same_dims(inst.dims, part.dims) || !ArrayData::same_dims(inst.dims, depth.dims))
    throw validation_error("mask arrays disagree on shape");
  rec.masks.height = static_cast<int>(inst.dims[0]);
  rec.masks.width = static_cast<int>(inst.dims[1]);
  rec.masks.instance_map.assign(inst.i32.begin(), inst.i32.end());
  rec.masks.part_map.assign(part.i32.begin(), part.i32.end());
  rec.masks.depth_buffer = depth.f64;

  if (const JsonValue* sets = side.find("target_sets")) {
    for (const JsonValue& entry : sets->items) {
      const std::string prefix = entry.as_string("target_sets");
      const std::string base = "targets/" + prefix + "/";
      HeatmapSet set;
      set.keypoints = detail::grid_from_hwc(require_array(arrays, base + "keypoints"),
                                            base + "keypoints");
      set.pafs = detail::grid_from_hwc(require_array(arrays, base + "pafs"), base + "pafs");
      set.root_depth = detail::grid_from_hwc(require_array(arrays, base + "root_depth"),
                                             base + "root_depth");
      if (prefix == "full") rec.targets_full = std::move(set);
      else if (prefix == "visible") rec.targets_visible = std::move(set);
      else throw validation_error("unknown target set \"" + prefix + "\"");
    }
  }
  return rec;
}

inline void write_dataset_manifest(const std::string& dir, int count, const JsonValue& config) {
  JsonValue m = JsonValue::object();
  m.set("format", JsonValue::of("hupor-dataset-v1"));
  m.set("count", JsonValue::of(static_cast<double>(count)));
  m.set("config", config);
  write_text_file(dir + "/manifest.json", dump_json(m));
}

inline int dataset_count(const std::string& dir) {
  const JsonValue m = parse_json(read_text_file(dir + "/manifest.json"));
  const std::string format = m.must("format").as_string("format");
  if (format != "hupor-dataset-v1")
    throw validation_error("unsupported dataset format \"" + format + "\"");
  const int count = static_cast<int>(m.must("count").as_number("count"));
  if (count < 0) throw validation_error("dataset count must be non-negative");
  return count;
}

inline std::vector<Scene> load_dataset_scenes(const std::string& dir) {
  const int count = dataset_count(dir);
  std::vector<Scene> scenes;
  scenes.reserve(count);
  for (int i = 0; i < count; ++i) {
    const JsonValue side = parse_json(read_text_file(dir + "/" + detail::record_stem(i) + ".json"));
    scenes.push_back(scene_from_json(side));
  }
  return scenes;
}

// labels stored in sidecars, aligned with load_dataset_scenes order. records
// without labels yield an empty optional so callers can demand them explicitly.
inline std::vector<std::optional<OcclusionLabels>> load_dataset_labels(const std::string& dir) {
  const int count = dataset_count(dir);
  std::vector<std::optional<OcclusionLabels>> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const JsonValue side = parse_json(read_text_file(dir + "/" + detail::record_stem(i) + ".json"));
    if (const JsonValue* labels = side.find("labels")) out.push_back(labels_from_json(*labels));
    else out.push_back(std::nullopt);
  }
  return out;
}

// rewrite one record's sidecar with labels attached, leaving arrays untouched.
inline void attach_labels(const std::string& dir, int index, const OcclusionLabels& labels) {
  const std::string path = dir + "/" + detail::record_stem(index) + ".json";
  JsonValue side = parse_json(read_text_file(path));
  side.set("labels", labels_to_json(labels));
  write_text_file(path, dump_json(side));
}

}  // namespace hupor
