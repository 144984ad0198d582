#pragma once

// small fixed-size vector/matrix types templated on the scalar so the same
// geometry code runs on float, double, and forward-mode dual numbers.

#include <array>
#include <cmath>
#include <cstddef>
#include <ostream>

namespace hupor {

template <class S> struct V3 {
  S x{}, y{}, z{};

  constexpr V3() = default;
  constexpr V3(S x_, S y_, S z_) : x(x_), y(y_), z(z_) {}

  constexpr V3 operator+(const V3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr V3 operator-(const V3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr V3 operator-() const { return {-x, -y, -z}; }
  constexpr V3 operator*(S s) const { return {x * s, y * s, z * s}; }
  constexpr V3 operator/(S s) const { return {x / s, y / s, z / s}; }
  V3& operator+=(const V3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  V3& operator-=(const V3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  V3& operator*=(S s) { x *= s; y *= s; z *= s; return *this; }

  S& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  const S& operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

template <class S> constexpr V3<S> operator*(S s, const V3<S>& v) { return v * s; }

template <class S> constexpr S dot(const V3<S>& a, const V3<S>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <class S> constexpr V3<S> cross(const V3<S>& a, const V3<S>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <class S> S norm2(const V3<S>& v) { return dot(v, v); }

template <class S> S norm(const V3<S>& v) {
  using std::sqrt;
  return sqrt(dot(v, v));
}

template <class S> V3<S> normalized(const V3<S>& v) { return v / norm(v); }

template <class S> std::ostream& operator<<(std::ostream& os, const V3<S>& v) {
  return os << "(" << v.x << ", " << v.y << ", " << v.z << ")";
}

// row-major 3x3 matrix.
template <class S> struct M3 {
  std::array<S, 9> m{};

  static M3 identity() {
    M3 r;
    r.m = {S(1), S(0), S(0), S(0), S(1), S(0), S(0), S(0), S(1)};
    return r;
  }

  S& operator()(int r, int c) { return m[3 * r + c]; }
  const S& operator()(int r, int c) const { return m[3 * r + c]; }

  V3<S> operator*(const V3<S>& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  M3 operator*(const M3& o) const {
    M3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        S s = S(0);
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }

  M3 transposed() const {
    M3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }
};

// rotation matrix from an axis-angle vector (Rodrigues). safe at w ~ 0 via the
// series expansion of sin(t)/t and (1-cos(t))/t^2, which also keeps dual-number
// derivatives finite through the origin.
template <class S> M3<S> rodrigues(const V3<S>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const S t2 = dot(w, w);
  S a, b;  // a = sin(t)/t, b = (1-cos(t))/t^2
  if (t2 < S(1e-16)) {
    a = S(1) - t2 / S(6);
    b = S(0.5) - t2 / S(24);
  } else {
    const S t = sqrt(t2);
    a = sin(t) / t;
    b = (S(1) - cos(t)) / t2;
  }
  M3<S> r = M3<S>::identity();
  // r = I + a*[w]_x + b*[w]_x^2
  const S wx = w.x, wy = w.y, wz = w.z;
  r(0, 0) += b * (-wy * wy - wz * wz);
  r(0, 1) += -a * wz + b * wx * wy;
  r(0, 2) += a * wy + b * wx * wz;
  r(1, 0) += a * wz + b * wx * wy;
  r(1, 1) += b * (-wx * wx - wz * wz);
  r(1, 2) += -a * wx + b * wy * wz;
  r(2, 0) += -a * wy + b * wx * wz;
  r(2, 1) += a * wx + b * wy * wz;
  r(2, 2) += b * (-wx * wx - wy * wy);
  return r;
}

using V3d = V3<double>;
using M3d = M3<double>;

// distance from point p to segment [a,b]; t of the closest point is clamped to [0,1].
template <class S> S point_segment_dist(const V3<S>& p, const V3<S>& a, const V3<S>& b) {
  const V3<S> ab = b - a;
  const S len2 = dot(ab, ab);
  S t;
  if (len2 < S(1e-12)) {
    t = S(0);
  } else {
    t = dot(p - a, ab) / len2;
    if (t < S(0)) t = S(0);
    if (t > S(1)) t = S(1);
  }
  return norm(p - (a + ab * t));
}

}  // namespace hupor
