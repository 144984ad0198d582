#pragma once

// forward-mode dual numbers with a fixed number of derivative slots. used to
// get exact jacobians of the forward kinematics without a tape.

#include <array>
#include <cmath>
#include <cstddef>

namespace hupor {

template <int N> struct Dual {
  double v{};
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit promotion from constants is the point
  static Dual var(double value, int slot) {
    Dual r(value);
    r.d[slot] = 1.0;
    return r;
  }

  Dual operator-() const {
    Dual r(-v);
    for (int i = 0; i < N; ++i) r.d[i] = -d[i];
    return r;
  }
  Dual operator+(const Dual& o) const {
    Dual r(v + o.v);
    for (int i = 0; i < N; ++i) r.d[i] = d[i] + o.d[i];
    return r;
  }
  Dual operator-(const Dual& o) const {
    Dual r(v - o.v);
    for (int i = 0; i < N; ++i) r.d[i] = d[i] - o.d[i];
    return r;
  }
  Dual operator*(const Dual& o) const {
    Dual r(v * o.v);
    for (int i = 0; i < N; ++i) r.d[i] = d[i] * o.v + v * o.d[i];
    return r;
  }
  Dual operator/(const Dual& o) const {
    Dual r(v / o.v);
    const double inv = 1.0 / (o.v * o.v);
    for (int i = 0; i < N; ++i) r.d[i] = (d[i] * o.v - v * o.d[i]) * inv;
    return r;
  }
  Dual& operator+=(const Dual& o) { *this = *this + o; return *this; }
  Dual& operator-=(const Dual& o) { *this = *this - o; return *this; }
  Dual& operator*=(const Dual& o) { *this = *this * o; return *this; }

  bool operator<(const Dual& o) const { return v < o.v; }
  bool operator>(const Dual& o) const { return v > o.v; }
  bool operator<=(const Dual& o) const { return v <= o.v; }
  bool operator>=(const Dual& o) const { return v >= o.v; }
};

template <int N> Dual<N> operator+(double a, const Dual<N>& b) { return Dual<N>(a) + b; }
template <int N> Dual<N> operator-(double a, const Dual<N>& b) { return Dual<N>(a) - b; }
template <int N> Dual<N> operator*(double a, const Dual<N>& b) { return Dual<N>(a) * b; }
template <int N> Dual<N> operator/(double a, const Dual<N>& b) { return Dual<N>(a) / b; }

template <int N> Dual<N> chain(double fv, double dfv, const Dual<N>& x) {
  Dual<N> r(fv);
  for (int i = 0; i < N; ++i) r.d[i] = dfv * x.d[i];
  return r;
}

template <int N> Dual<N> sqrt(const Dual<N>& x) {
  const double s = std::sqrt(x.v);
  return chain(s, 0.5 / s, x);
}
template <int N> Dual<N> sin(const Dual<N>& x) { return chain(std::sin(x.v), std::cos(x.v), x); }
template <int N> Dual<N> cos(const Dual<N>& x) { return chain(std::cos(x.v), -std::sin(x.v), x); }
template <int N> Dual<N> exp(const Dual<N>& x) {
  const double e = std::exp(x.v);
  return chain(e, e, x);
}
template <int N> Dual<N> log(const Dual<N>& x) { return chain(std::log(x.v), 1.0 / x.v, x); }
template <int N> Dual<N> abs(const Dual<N>& x) { return x.v < 0 ? -x : x; }
template <int N> Dual<N> max(const Dual<N>& a, const Dual<N>& b) { return a.v >= b.v ? a : b; }
template <int N> Dual<N> min(const Dual<N>& a, const Dual<N>& b) { return a.v <= b.v ? a : b; }

}  // namespace hupor
