#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "hupor/config.hpp"
#include "hupor/dataset.hpp"
#include "hupor/imageio.hpp"
#include "hupor/io.hpp"
#include "hupor/occlusion.hpp"
#include "hupor/raster.hpp"
#include "hupor/refine.hpp"
#include "hupor/scene.hpp"
#include "hupor/targets.hpp"

using namespace hupor;

namespace {

std::string fresh_dir(const std::string& name) {
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

std::vector<std::uint8_t> file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f),
                                   std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("json values survive a dump and parse round trip") {
  JsonValue root = JsonValue::object();
  root.set("name", JsonValue::of("hello \"world\"\nline\ttwo\\"));
  root.set("flag", JsonValue::of(true));
  root.set("off", JsonValue::of(false));
  root.set("tenth", JsonValue::of(0.1));
  root.set("tiny", JsonValue::of(5e-324));
  root.set("huge", JsonValue::of(-3.5e300));
  root.set("negzero", JsonValue::of(-0.0));
  JsonValue arr = JsonValue::array();
  arr.items.push_back(JsonValue::of(1.0));
  arr.items.push_back(JsonValue());  // null
  JsonValue inner = JsonValue::object();
  inner.set("k", JsonValue::of(2.5));
  arr.items.push_back(inner);
  root.set("list", arr);
  root.set("empty_obj", JsonValue::object());
  root.set("empty_arr", JsonValue::array());

  for (int indent : {0, 2}) {
    const std::string text = dump_json(root, indent);
    const JsonValue back = parse_json(text);
    REQUIRE(back.is_object());
    CHECK(back.must("name").as_string() == "hello \"world\"\nline\ttwo\\");
    CHECK(back.must("flag").as_bool());
    CHECK_FALSE(back.must("off").as_bool());
    // doubles must come back bit for bit, not merely close
    CHECK(back.must("tenth").as_number() == 0.1);
    CHECK(back.must("tiny").as_number() == 5e-324);
    CHECK(back.must("huge").as_number() == -3.5e300);
    CHECK(std::signbit(back.must("negzero").as_number()));
    REQUIRE(back.must("list").items.size() == 3);
    CHECK(back.must("list").items[1].kind == JsonValue::Kind::null);
    CHECK(back.must("list").items[2].must("k").as_number() == 2.5);
    CHECK(back.must("empty_obj").members.empty());
    CHECK(back.must("empty_arr").items.empty());
    // the dump itself must be stable: dump(parse(dump)) == dump
    CHECK(dump_json(back, indent) == text);
  }

  // member order is preserved, so output is deterministic
  const std::string compact = dump_json(root, 0);
  CHECK(compact.find("\"name\"") < compact.find("\"flag\""));
  CHECK(compact.find("\"flag\"") < compact.find("\"tenth\""));
}

TEST_CASE("json parser rejects malformed input") {
  CHECK_THROWS_AS(parse_json(""), validation_error);
  CHECK_THROWS_AS(parse_json("{"), validation_error);
  CHECK_THROWS_AS(parse_json("{\"a\":1,}"), validation_error);
  CHECK_THROWS_AS(parse_json("[1 2]"), validation_error);
  CHECK_THROWS_AS(parse_json("tru"), validation_error);
  CHECK_THROWS_AS(parse_json("{\"a\":1} extra"), validation_error);
  CHECK_THROWS_AS(parse_json("{\"a\":1,\"a\":2}"), validation_error);
  CHECK_THROWS_AS(parse_json("\"unterminated"), validation_error);
  CHECK_THROWS_AS(parse_json("{\"a\":nope}"), validation_error);

  // escapes and unicode (ascii range) decode
  const JsonValue v = parse_json("{\"s\": \"a\\u0041\\n\\t\\\\\\\"\"}");
  CHECK(v.must("s").as_string() == "aA\n\t\\\"");

  // accessor type errors name the context
  CHECK_THROWS_WITH(v.must("s").as_number("width"),
                    Catch::Matchers::ContainsSubstring("width"));
  CHECK_THROWS_WITH(v.must("missing").as_number(),
                    Catch::Matchers::ContainsSubstring("missing"));
}

TEST_CASE("seed strings cover the full 64-bit range") {
  CHECK(parse_seed_text("0") == 0);
  CHECK(parse_seed_text("18446744073709551615") == std::numeric_limits<std::uint64_t>::max());
  CHECK_THROWS_AS(parse_seed_text(""), validation_error);
  CHECK_THROWS_AS(parse_seed_text("12x"), validation_error);
  CHECK_THROWS_AS(parse_seed_text("-3"), validation_error);

  // round trip through the scene sidecar representation
  const std::uint64_t big = 0xfedcba9876543210ull;
  const JsonValue v = parse_json(dump_json(JsonValue::of(std::to_string(big))));
  CHECK(parse_seed_text(v.as_string()) == big);
}

TEST_CASE("array container round trips every dtype bit for bit") {
  const std::string dir = fresh_dir("hupor_io_arrays");
  const std::string path = dir + "/arrays.bin";

  ArrayMap arrays;
  arrays.emplace_back("f", ArrayData::of(std::vector<double>{0.1, -0.0, 5e-324, 1e308, -2.5},
                                         {5}));
  arrays.emplace_back("i", ArrayData::of(std::vector<std::int32_t>{-7, 0, 2147483647}, {3}));
  arrays.emplace_back("b", ArrayData::of(std::vector<std::uint8_t>{0, 255, 42}, {3, 1}));
  write_arrays(path, arrays);

  const ArrayMap back = read_arrays(path);
  REQUIRE(back.size() == 3);
  CHECK(back[0].first == "f");
  const ArrayData& f = require_array(back, "f");
  REQUIRE(f.dtype == ArrayData::DType::f64);
  REQUIRE(f.dims == std::vector<std::uint64_t>{5});
  for (int k = 0; k < 5; ++k)
    CHECK(std::memcmp(&f.f64[k], &arrays[0].second.f64[k], sizeof(double)) == 0);
  CHECK(require_array(back, "i").i32 == std::vector<std::int32_t>{-7, 0, 2147483647});
  CHECK(require_array(back, "b").dims == std::vector<std::uint64_t>{3, 1});
  CHECK(require_array(back, "b").u8 == std::vector<std::uint8_t>{0, 255, 42});
  CHECK(find_array(back, "nope") == nullptr);
  CHECK_THROWS_AS(require_array(back, "nope"), validation_error);

  // identical content writes identical bytes
  write_arrays(dir + "/arrays2.bin", arrays);
  CHECK(file_bytes(path) == file_bytes(dir + "/arrays2.bin"));
}

TEST_CASE("array container rejects corrupt files and bad shapes") {
  const std::string dir = fresh_dir("hupor_io_corrupt");
  const std::string path = dir + "/arrays.bin";

  // dims claim more elements than stored
  ArrayMap bad;
  bad.emplace_back("x", ArrayData::of(std::vector<double>{1.0, 2.0}, {3}));
  CHECK_THROWS_AS(write_arrays(path, bad), validation_error);

  ArrayMap good;
  good.emplace_back("x", ArrayData::of(std::vector<double>{1.0, 2.0, 3.0}, {3}));
  write_arrays(path, good);

  // truncation anywhere must be caught
  const std::vector<std::uint8_t> bytes = file_bytes(path);
  for (size_t cut : {size_t(2), size_t(10), bytes.size() - 4}) {
    std::ofstream f(dir + "/cut.bin", std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(cut));
    f.close();
    CHECK_THROWS_AS(read_arrays(dir + "/cut.bin"), io_error);
  }

  // wrong magic
  std::vector<std::uint8_t> wrong = bytes;
  wrong[0] = 'X';
  std::ofstream f(dir + "/magic.bin", std::ios::binary);
  f.write(reinterpret_cast<const char*>(wrong.data()), static_cast<std::streamsize>(wrong.size()));
  f.close();
  CHECK_THROWS_AS(read_arrays(dir + "/magic.bin"), io_error);

  CHECK_THROWS_AS(read_arrays(dir + "/does_not_exist.bin"), io_error);
}

TEST_CASE("checkpoints restore a model exactly and reject mismatches") {
  const std::string dir = fresh_dir("hupor_io_ckpt");
  const std::string path = dir + "/model.ckpt";

  RefineConfig cfg;
  cfg.hidden = 8;
  RefineNet net(cfg);
  Rng rng(123);
  net.init(rng);
  save_checkpoint(path, net, "{\"hidden\": 8}");

  // capture, clobber, reload, compare bitwise
  std::vector<std::vector<double>> saved;
  net.visit_params([&](const std::string&, std::vector<double>& p, std::vector<double>&) {
    saved.push_back(p);
  });
  net.visit_params([&](const std::string&, std::vector<double>& p, std::vector<double>&) {
    for (double& x : p) x = -99.0;
  });
  const std::string echo = load_checkpoint(path, net);
  CHECK(echo == "{\"hidden\": 8}");
  size_t slot = 0;
  net.visit_params([&](const std::string&, std::vector<double>& p, std::vector<double>&) {
    CHECK(p == saved[slot]);
    ++slot;
  });
  CHECK(slot == saved.size());

  // a differently shaped model cannot absorb this checkpoint
  RefineConfig other_cfg;
  other_cfg.hidden = 16;
  RefineNet other(other_cfg);
  CHECK_THROWS_AS(load_checkpoint(path, other), validation_error);

  // a non-checkpoint container is rejected up front
  ArrayMap not_ckpt;
  not_ckpt.emplace_back("x", ArrayData::of(std::vector<double>{1.0}, {1}));
  write_arrays(dir + "/plain.bin", not_ckpt);
  CHECK_THROWS_AS(load_checkpoint(dir + "/plain.bin", net), io_error);
}

TEST_CASE("config schema rejects unknown keys by dotted path") {
  JsonValue root = parse_json(
      "{\"epochs\": 3, \"scene\": {\"camera\": {\"focal\": 110}}, \"out\": \"runs/a\"}");
  const std::vector<std::string> allowed = {"epochs", "scene", "out"};
  CHECK_NOTHROW(reject_unknown_keys(root, allowed));

  JsonValue typo = parse_json("{\"epoch\": 3}");
  CHECK_THROWS_WITH(reject_unknown_keys(typo, allowed),
                    Catch::Matchers::ContainsSubstring("epoch"));

  // interior objects pass only when an allowed key lives beneath them
  JsonValue nested = parse_json("{\"train\": {\"lr\": 0.1, \"misspelled\": 1}}");
  CHECK_THROWS_WITH(reject_unknown_keys(nested, {"train.lr"}),
                    Catch::Matchers::ContainsSubstring("train.misspelled"));
  JsonValue ok = parse_json("{\"train\": {\"lr\": 0.1}}");
  CHECK_NOTHROW(reject_unknown_keys(ok, {"train.lr"}));

  // declaring a parent admits the whole subtree
  JsonValue deep = parse_json("{\"scene\": {\"anything\": {\"goes\": 1}}}");
  CHECK_NOTHROW(reject_unknown_keys(deep, {"scene"}));

  CHECK_THROWS_AS(reject_unknown_keys(parse_json("[1]"), allowed), config_error);
}

TEST_CASE("typed config accessors enforce types and name the key") {
  const JsonValue root = parse_json(
      "{\"lr\": 0.05, \"epochs\": 12, \"all_joints\": true, \"out\": \"runs/x\","
      " \"seed_num\": 42, \"seed_str\": \"18446744073709551615\","
      " \"nest\": {\"inner\": 7}}");

  CHECK(cfg_number(root, "lr", 1.0) == 0.05);
  CHECK(cfg_number(root, "absent", 1.5) == 1.5);
  CHECK(cfg_int(root, "epochs", 1) == 12);
  CHECK(cfg_int(root, "nest.inner", 0) == 7);
  CHECK(cfg_bool(root, "all_joints", false));
  CHECK(cfg_string(root, "out", "") == "runs/x");
  CHECK(cfg_seed(root, "seed_num", 0) == 42);
  CHECK(cfg_seed(root, "seed_str", 0) == std::numeric_limits<std::uint64_t>::max());
  CHECK(cfg_seed(root, "absent", 9) == 9);

  CHECK_THROWS_WITH(cfg_number(root, "out", 0.0), Catch::Matchers::ContainsSubstring("out"));
  CHECK_THROWS_AS(cfg_int(root, "lr", 0), config_error);
  CHECK_THROWS_AS(cfg_bool(root, "lr", false), config_error);
  CHECK_THROWS_AS(cfg_string(root, "lr", ""), config_error);
  CHECK_THROWS_AS(cfg_seed(parse_json("{\"s\": -1}"), "s", 0), config_error);
  CHECK_THROWS_AS(cfg_seed(parse_json("{\"s\": 1.5}"), "s", 0), config_error);
  CHECK_THROWS_AS(cfg_seed(parse_json("{\"s\": \"12x\"}"), "s", 0), config_error);

  CHECK_NOTHROW(validate_precision(parse_json("{}")));
  CHECK_NOTHROW(validate_precision(parse_json("{\"precision\": \"64\"}")));
  CHECK_THROWS_AS(validate_precision(parse_json("{\"precision\": \"32\"}")), config_error);
}

TEST_CASE("flag overrides write typed leaves at dotted paths") {
  JsonValue root = parse_json("{\"scene\": {\"max_people\": 2}}");
  apply_override(root, "scene.max_people", "4");
  apply_override(root, "scene.guarantee_visible", "true");
  apply_override(root, "train.lr", "0.01");
  apply_override(root, "out", "runs/override");

  CHECK(cfg_int(root, "scene.max_people", 0) == 4);
  CHECK(cfg_bool(root, "scene.guarantee_visible", false));
  CHECK(cfg_number(root, "train.lr", 0.0) == 0.01);
  CHECK(cfg_string(root, "out", "") == "runs/override");

  CHECK_THROWS_AS(apply_override(root, "", "1"), config_error);
  CHECK_THROWS_AS(apply_override(root, "a..b", "1"), config_error);
  // crossing a scalar with a deeper path is an error
  CHECK_THROWS_AS(apply_override(root, "out.deeper", "1"), config_error);
}

TEST_CASE("bmp writer produces a well-formed file") {
  const std::string dir = fresh_dir("hupor_io_bmp");
  const std::string path = dir + "/img.bmp";

  Canvas canvas(3, 2);
  canvas.set(0, 0, {255, 0, 0});
  canvas.set(2, 0, {0, 255, 0});
  canvas.set(1, 1, {0, 0, 255});
  write_bmp(path, canvas);

  const std::vector<std::uint8_t> bytes = file_bytes(path);
  // 3 pixels * 3 bytes = 9, padded to 12 per row, 2 rows
  REQUIRE(bytes.size() == 54 + 24);
  CHECK(bytes[0] == 'B');
  CHECK(bytes[1] == 'M');
  const auto u32at = [&](size_t off) {
    return static_cast<std::uint32_t>(bytes[off]) | (bytes[off + 1] << 8) |
           (bytes[off + 2] << 16) | (static_cast<std::uint32_t>(bytes[off + 3]) << 24);
  };
  CHECK(u32at(2) == bytes.size());   // file size
  CHECK(u32at(10) == 54);            // data offset
  CHECK(u32at(14) == 40);            // info header
  CHECK(u32at(18) == 3);             // width
  CHECK(u32at(22) == 2);             // height
  CHECK(bytes[28] == 24);            // bpp

  // bottom-up, bgr: first stored row is canvas row y=1
  const size_t row0 = 54, row1 = 54 + 12;
  CHECK(bytes[row0 + 3 * 1 + 2] == 0);    // (1,1) red byte
  CHECK(bytes[row0 + 3 * 1 + 0] == 255);  // (1,1) blue byte
  CHECK(bytes[row1 + 3 * 0 + 2] == 255);  // (0,0) red byte
  CHECK(bytes[row1 + 3 * 2 + 1] == 255);  // (2,0) green byte

  CHECK_THROWS_AS(Canvas(0, 5), validation_error);
}

TEST_CASE("drawing primitives stay inside the canvas") {
  Canvas c(16, 16);
  c.line(-5, 3, 30, 3, {1, 2, 3});
  for (int x = 0; x < 16; ++x) CHECK(c.get(x, 3).g == 2);
  c.disc(0, 0, 4, {9, 9, 9});  // clipped at the corner
  CHECK(c.get(0, 0).r == 9);
  CHECK(c.get(15, 15).r == 255);

  const Canvas heat = render_heatmap(Grid(2, 4, 4), 1, 3);
  CHECK(heat.width == 12);
  CHECK(heat.height == 12);
  CHECK_THROWS_AS(render_heatmap(Grid(2, 4, 4), 2), validation_error);

  const Canvas curve = render_curve({0, 1, 2}, {5, 3, 4});
  CHECK(curve.width == 640);
  CHECK_THROWS_AS(render_curve({0, 1}, {5}), validation_error);
  CHECK_THROWS_AS(render_curve({}, {}), validation_error);
}

TEST_CASE("scene records round trip bit for bit") {
  SceneConfig config;
  config.min_people = 2;
  config.max_people = 3;
  const Scene scene = sample_scene(9001, config);
  const MaskSet masks = rasterize(scene);
  const OcclusionLabels labels = classify_joints(scene, masks);

  DatasetRecord rec;
  rec.scene = scene;
  rec.masks = masks;
  rec.labels = labels;
  rec.targets_full = make_targets(scene).all;
  rec.targets_visible = make_targets(scene).visible;

  const std::string dir = fresh_dir("hupor_io_record");
  save_record(dir, 0, rec);
  const DatasetRecord back = load_record(dir, 0);

  CHECK(back.scene.seed == scene.seed);
  CHECK(back.scene.camera.focal == scene.camera.focal);
  REQUIRE(back.scene.people.size() == scene.people.size());
  for (size_t p = 0; p < scene.people.size(); ++p) {
    CHECK(back.scene.people[p].person_id == scene.people[p].person_id);
    for (int j = 0; j < kJoints; ++j) {
      // rebuilt from generating parameters, so exact equality is required
      CHECK(back.scene.people[p].pose.joints[j].x == scene.people[p].pose.joints[j].x);
      CHECK(back.scene.people[p].pose.joints[j].y == scene.people[p].pose.joints[j].y);
      CHECK(back.scene.people[p].pose.joints[j].z == scene.people[p].pose.joints[j].z);
    }
    for (size_t c = 0; c < scene.people[p].capsules.size(); ++c) {
      CHECK(back.scene.people[p].capsules[c].r == scene.people[p].capsules[c].r);
      CHECK(back.scene.people[p].capsules[c].a.x == scene.people[p].capsules[c].a.x);
      CHECK(back.scene.people[p].capsules[c].b.z == scene.people[p].capsules[c].b.z);
    }
  }
  REQUIRE(back.scene.occluders.size() == scene.occluders.size());
  for (size_t i = 0; i < scene.occluders.size(); ++i) {
    CHECK(back.scene.occluders[i].kind == scene.occluders[i].kind);
    CHECK(back.scene.occluders[i].center.x == scene.occluders[i].center.x);
  }

  CHECK(back.masks.instance_map == masks.instance_map);
  CHECK(back.masks.part_map == masks.part_map);
  CHECK(back.masks.depth_buffer == masks.depth_buffer);

  REQUIRE(back.labels.has_value());
  CHECK(back.labels->labels == labels.labels);

  REQUIRE(back.targets_full.has_value());
  REQUIRE(back.targets_visible.has_value());
  CHECK(back.targets_full->keypoints.data == rec.targets_full->keypoints.data);
  CHECK(back.targets_full->pafs.data == rec.targets_full->pafs.data);
  CHECK(back.targets_full->root_depth.data == rec.targets_full->root_depth.data);
  CHECK(back.targets_visible->keypoints.data == rec.targets_visible->keypoints.data);

  // rewriting the same record reproduces identical files
  const std::string dir2 = fresh_dir("hupor_io_record2");
  save_record(dir2, 0, rec);
  CHECK(file_bytes(dir + "/record_00000.json") == file_bytes(dir2 + "/record_00000.json"));
  CHECK(file_bytes(dir + "/record_00000.bin") == file_bytes(dir2 + "/record_00000.bin"));
}

TEST_CASE("dataset directory loaders follow the manifest") {
  const std::string dir = fresh_dir("hupor_io_dataset");
  SceneConfig config;
  for (int i = 0; i < 3; ++i) {
    DatasetRecord rec;
    rec.scene = sample_scene(100 + static_cast<std::uint64_t>(i), config);
    rec.masks = rasterize(rec.scene);
    save_record(dir, i, rec);
  }
  JsonValue echo = JsonValue::object();
  echo.set("count", JsonValue::of(3.0));
  write_dataset_manifest(dir, 3, echo);

  CHECK(dataset_count(dir) == 3);
  const std::vector<Scene> scenes = load_dataset_scenes(dir);
  REQUIRE(scenes.size() == 3);
  CHECK(scenes[0].seed == 100);
  CHECK(scenes[2].seed == 102);

  // labels are absent until attached
  auto labels = load_dataset_labels(dir);
  REQUIRE(labels.size() == 3);
  CHECK_FALSE(labels[0].has_value());

  const MaskSet masks = rasterize(scenes[1]);
  attach_labels(dir, 1, classify_joints(scenes[1], masks));
  labels = load_dataset_labels(dir);
  CHECK_FALSE(labels[0].has_value());
  REQUIRE(labels[1].has_value());
  CHECK(labels[1]->labels.size() == scenes[1].people.size());

  // binary payloads remain loadable alongside the sidecar
  const DatasetRecord rec1 = load_record(dir, 1);
  CHECK(rec1.masks.instance_map == masks.instance_map);
  REQUIRE(rec1.labels.has_value());
  CHECK_FALSE(rec1.targets_full.has_value());

  CHECK_THROWS_AS(load_record(dir, 7), io_error);
  CHECK_THROWS_AS(dataset_count(fresh_dir("hupor_io_empty")), io_error);
}
