#pragma once

// analytic intersections of camera rays (origin at the camera center) with
// spheres, capsules, and axis-aligned boxes. directions follow the pixel-ray
// convention dir = ((u-cx)/f, (v-cy)/f, 1), so a hit parameter t is the hit's
// camera depth in mm directly.

#include <cmath>
#include <limits>
#include <optional>

#include "hupor/geom.hpp"

namespace hupor {

inline constexpr double kRayEps = 1e-9;

inline std::optional<double> ray_sphere(const V3d& dir, const V3d& center, double r) {
  const double a = dot(dir, dir);
  const double b = -2.0 * dot(dir, center);
  const double c = dot(center, center) - r * r;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0) return std::nullopt;
  const double s = std::sqrt(disc);
  const double t0 = (-b - s) / (2.0 * a);
  if (t0 > kRayEps) return t0;
  const double t1 = (-b + s) / (2.0 * a);
  if (t1 > kRayEps) return t1;
  return std::nullopt;
}

// capsule = cylinder around segment [a,b] plus spherical caps; degenerate
// segments fall back to the sphere test.
inline std::optional<double> ray_capsule(const V3d& dir, const V3d& a, const V3d& b, double r) {
  const V3d ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 < 1e-12) return ray_sphere(dir, a, r);

  std::optional<double> best;
  auto keep = [&best](std::optional<double> t) {
    if (t && (!best || *t < *best)) best = t;
  };

  // infinite cylinder: |(t*dir - a) - (((t*dir - a)·u) u)|^2 = r^2, u = ab/|ab|
  const V3d u = ab / std::sqrt(len2);
  const V3d m = -a;  // ray origin relative to a
  const double dd = dot(dir, dir), du = dot(dir, u), mu = dot(m, u);
  const double qa = dd - du * du;
  const double qb = 2.0 * (dot(m, dir) - mu * du);
  const double qc = dot(m, m) - mu * mu - r * r;
  if (qa > 1e-14) {
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc >= 0) {
      const double s = std::sqrt(disc);
      for (const double t : {(-qb - s) / (2.0 * qa), (-qb + s) / (2.0 * qa)}) {
        if (t <= kRayEps) continue;
        const double axial = dot(dir * t - a, u);
        if (axial >= 0 && axial * axial <= len2) keep(t);
      }
    }
  }
  keep(ray_sphere(dir, a, r));
  keep(ray_sphere(dir, b, r));
  return best;
}

// slab test; a camera inside the box sees the exit face.
inline std::optional<double> ray_box(const V3d& dir, const V3d& center, const V3d& half) {
  double tnear = -std::numeric_limits<double>::infinity();
  double tfar = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double d = dir[axis], lo = center[axis] - half[axis], hi = center[axis] + half[axis];
    if (std::abs(d) < 1e-14) {
      if (0 < lo || 0 > hi) return std::nullopt;  // ray parallel and outside the slab
      continue;
    }
    double t0 = lo / d, t1 = hi / d;
    if (t0 > t1) std::swap(t0, t1);
    tnear = std::max(tnear, t0);
    tfar = std::min(tfar, t1);
    if (tnear > tfar) return std::nullopt;
  }
  if (tfar <= kRayEps) return std::nullopt;
  return tnear > kRayEps ? tnear : tfar;
}

}  // namespace hupor
