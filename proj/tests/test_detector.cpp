#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hupor/detector.hpp"

using namespace hupor;

namespace {

Grid random_grid(Rng& rng, int c, int h, int w, double sd = 1.0) {
  Grid g(c, h, w);
  for (double& v : g.data) v = rng.normal(0.0, sd);
  return g;
}

HeatmapSet random_maps(Rng& rng, int h, int w) {
  HeatmapSet maps = make_heatmap_set(h, w);
  for (double& v : maps.keypoints.data) v = rng.normal(0.0, 0.5);
  for (double& v : maps.pafs.data) v = rng.normal(0.0, 0.5);
  for (double& v : maps.root_depth.data) v = rng.normal(0.0, 0.5);
  return maps;
}

bool close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

template <class F> double fd(double& slot, const F& eval, double h = 1e-6) {
  const double orig = slot;
  slot = orig + h;
  const double up = eval();
  slot = orig - h;
  const double down = eval();
  slot = orig;
  return (up - down) / (2.0 * h);
}

double maps_dot(const std::vector<HeatmapSet>& preds, const std::vector<HeatmapSet>& coeffs) {
  double s = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    for (size_t k = 0; k < preds[i].keypoints.data.size(); ++k)
      s += preds[i].keypoints.data[k] * coeffs[i].keypoints.data[k];
    for (size_t k = 0; k < preds[i].pafs.data.size(); ++k)
      s += preds[i].pafs.data[k] * coeffs[i].pafs.data[k];
    for (size_t k = 0; k < preds[i].root_depth.data.size(); ++k)
      s += preds[i].root_depth.data[k] * coeffs[i].root_depth.data[k];
  }
  return s;
}

}  // namespace

TEST_CASE("detector emits one full heatmap set per stack at quarter resolution") {
  DetectorConfig config;
  config.base_channels = 8;
  Detector net(config);
  Rng rng(7);
  net.init(rng);
  const Grid features = random_grid(rng, kFeatureChannels, 128, 128, 0.5);
  const std::vector<HeatmapSet> preds = net.forward(features, false);
  REQUIRE(preds.size() == 2);
  for (const HeatmapSet& maps : preds) {
    CHECK(maps.keypoints.c == kJoints);
    CHECK(maps.pafs.c == kPafChannels);
    CHECK(maps.root_depth.c == kRootChannels);
    CHECK(maps.keypoints.h == 32);
    CHECK(maps.keypoints.w == 32);
  }
  // a different input size obeys the same stride contract
  const Grid small = random_grid(rng, kFeatureChannels, 64, 64, 0.5);
  CHECK(net.forward(small, false)[0].keypoints.h == 16);
  // wrong channel count is rejected
  const Grid bad = random_grid(rng, kFeatureChannels + 1, 64, 64, 0.5);
  CHECK_THROWS_AS(net.forward(bad, false), validation_error);
}

TEST_CASE("detector forward is deterministic and finite") {
  DetectorConfig config;
  config.base_channels = 6;
  config.hourglass_depth = 2;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Detector net(config);
    Rng rng(seed);
    net.init(rng);
    const Grid features = random_grid(rng, kFeatureChannels, 32, 32, 0.5);
    const std::vector<HeatmapSet> a = net.forward(features, false);
    for (const HeatmapSet& maps : a) {
      REQUIRE(grid_finite(maps.keypoints));
      REQUIRE(grid_finite(maps.pafs));
      REQUIRE(grid_finite(maps.root_depth));
    }
    if (seed < 5) {
      const std::vector<HeatmapSet> b = net.forward(features, false);
      REQUIRE(a[1].keypoints.data == b[1].keypoints.data);
      REQUIRE(a[1].pafs.data == b[1].pafs.data);
      REQUIRE(a[1].root_depth.data == b[1].root_depth.data);
    }
  }
  // identical seeds produce identical parameters
  Detector n1(config), n2(config);
  Rng r1(99), r2(99);
  n1.init(r1);
  n2.init(r2);
  bool same = true;
  n1.visit_params([&](const std::string& name, std::vector<double>& w, std::vector<double>&) {
    n2.visit_params([&](const std::string& name2, std::vector<double>& w2, std::vector<double>&) {
      if (name == name2 && w != w2) same = false;
    });
  });
  REQUIRE(same);
}

TEST_CASE("visible loss is zero at the targets and has the closed quadratic form") {
  Rng rng(11);
  const int h = 8, w = 8;
  TargetBundle targets;
  targets.visible = random_maps(rng, h, w);
  targets.all = targets.visible;
  targets.occluded = make_heatmap_set(h, w);
  std::vector<RootSample> roots = {{0, 2, 3, 4, 7.5}, {0, 5, 6, 1, -2.0}};
  for (RootSample& r : roots) r.zhat = targets.visible.root_depth.at(r.slot, r.y, r.x);

  LossWeights unit;
  unit.lam_r_vis = 1.0;
  CHECK(loss_vis({targets.visible}, targets, roots, unit) == 0.0);

  // keypoints off by a constant epsilon: loss = h * w * joints * eps^2
  const double eps = 0.25;
  HeatmapSet pred = targets.visible;
  for (double& v : pred.keypoints.data) v += eps;
  CHECK(loss_vis({pred}, targets, roots, unit) ==
        Catch::Approx(h * w * kJoints * eps * eps).epsilon(1e-12));

  // two identical stacks double the loss
  CHECK(loss_vis({pred, pred}, targets, roots, unit) ==
        Catch::Approx(2.0 * h * w * kJoints * eps * eps).epsilon(1e-12));
}

TEST_CASE("visible loss ignores occluded-target content") {
  Rng rng(12);
  TargetBundle targets;
  targets.visible = random_maps(rng, 8, 8);
  targets.all = targets.visible;
  targets.occluded = make_heatmap_set(8, 8);
  const std::vector<RootSample> roots = {{0, 1, 2, 2, 3.0}};
  const HeatmapSet pred = random_maps(rng, 8, 8);
  LossWeights weights;
  const double before = loss_vis({pred}, targets, roots, weights);
  targets.occluded = random_maps(rng, 8, 8);
  CHECK(loss_vis({pred}, targets, roots, weights) == before);
}

TEST_CASE("visible loss gradient matches finite differences") {
  Rng rng(13);
  TargetBundle targets;
  targets.visible = random_maps(rng, 8, 8);
  targets.all = targets.visible;
  targets.occluded = make_heatmap_set(8, 8);
  const std::vector<RootSample> roots = {{0, 0, 1, 1, 0.4}, {0, 3, 5, 2, -1.2}, {1, 3, 5, 2, 0.1}};
  LossWeights weights;  // default lambdas, including the 0.1 root weight
  std::vector<HeatmapSet> preds = {random_maps(rng, 8, 8)};
  std::vector<HeatmapSet> grads;
  loss_vis(preds, targets, roots, weights, &grads);
  const auto eval = [&] { return loss_vis(preds, targets, roots, weights); };

  for (size_t i = 0; i < preds[0].keypoints.data.size(); ++i)
    REQUIRE(close(grads[0].keypoints.data[i], fd(preds[0].keypoints.data[i], eval), 1e-6));
  for (size_t i = 0; i < preds[0].pafs.data.size(); ++i)
    REQUIRE(close(grads[0].pafs.data[i], fd(preds[0].pafs.data[i], eval), 1e-6));
  for (size_t i = 0; i < preds[0].root_depth.data.size(); ++i)
    REQUIRE(close(grads[0].root_depth.data[i], fd(preds[0].root_depth.data[i], eval), 1e-6));
}

TEST_CASE("detector backward matches finite differences through the whole net") {
  DetectorConfig config;
  config.stacks = 2;
  config.base_channels = 6;
  config.hourglass_depth = 2;
  Detector net(config);
  Rng rng(14);
  net.init(rng);
  const Grid features = random_grid(rng, kFeatureChannels, 32, 32, 0.5);
  std::vector<HeatmapSet> coeffs;
  for (int s = 0; s < 2; ++s) coeffs.push_back(random_maps(rng, 8, 8));

  net.forward(features, true);
  zero_grads(net);
  net.backward(coeffs);
  const auto eval = [&] { return maps_dot(net.forward(features, false), coeffs); };

  std::vector<std::pair<double*, double*>> slots;
  net.visit_params([&](const std::string&, std::vector<double>& w, std::vector<double>& g) {
    for (size_t i = 0; i < w.size(); ++i) slots.push_back({&w[i], &g[i]});
  });
  Rng pick(15);
  for (int trial = 0; trial < 150; ++trial) {
    auto [w, g] = slots[static_cast<size_t>(pick.uniform_int(0, static_cast<int>(slots.size()) - 1))];
    REQUIRE(close(*g, fd(*w, eval), 1e-4));
  }
}

TEST_CASE("a one-scene dataset is memorized") {
  SceneConfig scfg;
  scfg.camera.focal = 110;
  scfg.camera.cx = 32;
  scfg.camera.cy = 32;
  scfg.camera.width = 64;
  scfg.camera.height = 64;
  scfg.max_people = 1;
  scfg.occluder_density = 0.0;
  const Scene scene = sample_scene(4242, scfg);

  DetectorConfig config;
  config.stacks = 1;
  config.base_channels = 8;
  config.hourglass_depth = 2;
  LossWeights weights;
  TrainOptions opts;
  opts.epochs = 350;
  opts.lr = 2e-3;
  opts.seed = 5;
  std::vector<LossCurvePoint> curve;
  const Detector net = train_detector({scene}, config, weights, opts, &curve);

  REQUIRE(!curve.empty());
  double initial = 0, final_loss = 0;
  for (const LossCurvePoint& pt : curve) {
    if (pt.term != "total") continue;
    if (pt.epoch == 0) initial = pt.value;
    final_loss = pt.value;
  }
  INFO("initial " << initial << " final " << final_loss);
  CHECK(final_loss < 0.01 * initial);
}

TEST_CASE("training is reproducible for a fixed seed") {
  SceneConfig scfg;
  scfg.camera.focal = 110;
  scfg.camera.cx = 32;
  scfg.camera.cy = 32;
  scfg.camera.width = 64;
  scfg.camera.height = 64;
  scfg.max_people = 2;
  std::vector<Scene> scenes;
  for (int s = 0; s < 3; ++s) scenes.push_back(sample_scene(900 + s, scfg));

  DetectorConfig config;
  config.stacks = 1;
  config.base_channels = 4;
  config.hourglass_depth = 2;
  TrainOptions opts;
  opts.epochs = 2;
  opts.seed = 77;
  Detector a = train_detector(scenes, config, LossWeights{}, opts);
  Detector b = train_detector(scenes, config, LossWeights{}, opts);
  bool identical = true;
  std::vector<std::vector<double>> wa;
  a.visit_params([&](const std::string&, std::vector<double>& w, std::vector<double>&) {
    wa.push_back(w);
  });
  size_t i = 0;
  b.visit_params([&](const std::string&, std::vector<double>& w, std::vector<double>&) {
    if (w != wa[i++]) identical = false;
  });
  REQUIRE(identical);
}
