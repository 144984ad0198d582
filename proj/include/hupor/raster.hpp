#pragma once

// z-buffer rasterization of a scene by analytic ray casting at pixel centers,
// plus the multi-channel feature rendering the detector consumes in place of
// an RGB image. each primitive is scanned only over its projected bounding
// box; a per-pixel loop over the whole primitive list must reproduce the
// depth buffer exactly.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "hupor/core.hpp"
#include "hupor/grid.hpp"
#include "hupor/primitives.hpp"
#include "hupor/scene.hpp"

namespace hupor {

struct MaskSet {
  int width = 0, height = 0;
  std::vector<int> instance_map;      // 0 background, k > 0 person k, -(j+1) occluder j
  std::vector<int> part_map;          // -1 none, else 0..14 where a person owns the pixel
  std::vector<double> depth_buffer;   // mm; 0 at background pixels

  int instance(int y, int x) const { return instance_map[static_cast<size_t>(y) * width + x]; }
  int part(int y, int x) const { return part_map[static_cast<size_t>(y) * width + x]; }
  double depth(int y, int x) const { return depth_buffer[static_cast<size_t>(y) * width + x]; }
};

namespace detail {

struct PixelRect {
  int x0, y0, x1, y1;  // inclusive
  bool empty() const { return x0 > x1 || y0 > y1; }
};

// conservative pixel bounds of a primitive from its world-space box; the
// projection of a convex solid in front of the camera is the hull of its
// projected corners. boxes straddling the camera plane scan the full image.
inline PixelRect project_bounds(const Camera& cam, const V3d& lo, const V3d& hi) {
  if (lo.z <= 1e-6) return {0, 0, cam.width - 1, cam.height - 1};
  double umin = std::numeric_limits<double>::infinity(), umax = -umin;
  double vmin = umin, vmax = -umin;
  for (int corner = 0; corner < 8; ++corner) {
    const V3d p{corner & 1 ? hi.x : lo.x, corner & 2 ? hi.y : lo.y, corner & 4 ? hi.z : lo.z};
    const double u = cam.focal * p.x / p.z + cam.cx;
    const double v = cam.focal * p.y / p.z + cam.cy;
    umin = std::min(umin, u); umax = std::max(umax, u);
    vmin = std::min(vmin, v); vmax = std::max(vmax, v);
  }
  return {std::max(0, static_cast<int>(std::floor(umin - 1))),
          std::max(0, static_cast<int>(std::floor(vmin - 1))),
          std::min(cam.width - 1, static_cast<int>(std::ceil(umax + 1))),
          std::min(cam.height - 1, static_cast<int>(std::ceil(vmax + 1)))};
}

template <class Intersect>
void scan_primitive(const Camera& cam, const PixelRect& rect, int instance, int part,
                    MaskSet& masks, Intersect&& intersect) {
  if (rect.empty()) return;
  for (int y = rect.y0; y <= rect.y1; ++y) {
    for (int x = rect.x0; x <= rect.x1; ++x) {
      const V3d dir{(x + 0.5 - cam.cx) / cam.focal, (y + 0.5 - cam.cy) / cam.focal, 1.0};
      const auto t = intersect(dir);
      if (!t) continue;
      const size_t idx = static_cast<size_t>(y) * cam.width + x;
      if (*t < masks.depth_buffer[idx]) {
        masks.depth_buffer[idx] = *t;
        masks.instance_map[idx] = instance;
        masks.part_map[idx] = part;
      }
    }
  }
}

}  // namespace detail

inline MaskSet rasterize(const Scene& scene) {
  const Camera& cam = scene.camera;
  cam.validate();
  MaskSet masks;
  masks.width = cam.width;
  masks.height = cam.height;
  const size_t n = static_cast<size_t>(cam.width) * cam.height;
  masks.instance_map.assign(n, 0);
  masks.part_map.assign(n, -1);
  masks.depth_buffer.assign(n, std::numeric_limits<double>::infinity());

  for (int p = 0; p < static_cast<int>(scene.people.size()); ++p) {
    for (const auto& cap : scene.people[p].capsules) {
      const V3d lo{std::min(cap.a.x, cap.b.x) - cap.r, std::min(cap.a.y, cap.b.y) - cap.r,
                   std::min(cap.a.z, cap.b.z) - cap.r};
      const V3d hi{std::max(cap.a.x, cap.b.x) + cap.r, std::max(cap.a.y, cap.b.y) + cap.r,
                   std::max(cap.a.z, cap.b.z) + cap.r};
      detail::scan_primitive(cam, detail::project_bounds(cam, lo, hi), p + 1, cap.part, masks,
                             [&cap](const V3d& dir) { return ray_capsule(dir, cap.a, cap.b, cap.r); });
    }
  }
  for (int j = 0; j < static_cast<int>(scene.occluders.size()); ++j) {
    const Occluder& occ = scene.occluders[j];
    const V3d ext = occ.kind == Occluder::Kind::sphere
                        ? V3d{occ.radius, occ.radius, occ.radius}
                        : occ.half;
    const V3d lo = occ.center - ext, hi = occ.center + ext;
    detail::scan_primitive(cam, detail::project_bounds(cam, lo, hi), -(j + 1), -1, masks,
                           [&occ](const V3d& dir) {
                             return occ.kind == Occluder::Kind::sphere
                                        ? ray_sphere(dir, occ.center, occ.radius)
                                        : ray_box(dir, occ.center, occ.half);
                           });
  }
  for (size_t i = 0; i < n; ++i)
    if (masks.instance_map[i] == 0) masks.depth_buffer[i] = 0.0;
  return masks;
}

inline constexpr int kFeatureChannels = 5;

// channels, all in [0,1]:
//   0: depth min-max normalized over person pixels, 0 elsewhere
//   1: person mask
//   2: occluder mask
//   3: body-part label, (part + 1) / 15, where a person owns the pixel
//   4: silhouette edges: any 4-neighbor owner change on the instance map
inline Grid render_features(const MaskSet& masks) {
  const int w = masks.width, h = masks.height;
  Grid img(kFeatureChannels, h, w);
  double dmin = std::numeric_limits<double>::infinity(), dmax = -dmin;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (masks.instance(y, x) > 0) {
        dmin = std::min(dmin, masks.depth(y, x));
        dmax = std::max(dmax, masks.depth(y, x));
      }
  const double dspan = dmax - dmin;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int inst = masks.instance(y, x);
      if (inst > 0) {
        img.at(0, y, x) = dspan > 0 ? (masks.depth(y, x) - dmin) / dspan : 0.0;
        img.at(1, y, x) = 1.0;
        img.at(3, y, x) = (masks.part(y, x) + 1) / 15.0;
      } else if (inst < 0) {
        img.at(2, y, x) = 1.0;
      }
      const bool edge = (x > 0 && masks.instance(y, x - 1) != inst) ||
                        (x + 1 < w && masks.instance(y, x + 1) != inst) ||
                        (y > 0 && masks.instance(y - 1, x) != inst) ||
                        (y + 1 < h && masks.instance(y + 1, x) != inst);
      if (edge) img.at(4, y, x) = 1.0;
    }
  }
  return img;
}

inline Grid render_features(const Scene& scene) { return render_features(rasterize(scene)); }

}  // namespace hupor
