#pragma once

#include <cmath>
#include <type_traits>

#include "lgm/autodiff/tape.hpp"

namespace lgm {

// Forward-mode scalar carrying one tangent component.  The inner type can
// be double, Var, or another Dual; stacking Duals over a Var builds the
// scalar tower used for higher-order sweeps, with the reverse (tape) level
// innermost so the final traversal differentiates everything above it.
// Nesting depth is fixed by the static type, never at runtime.
template <class T>
struct Dual {
  T v{};
  T d{};

  Dual() = default;
  Dual(const T& value) : v(value), d() {}
  Dual(T value, T tangent) : v(std::move(value)), d(std::move(tangent)) {}

  template <class U,
            std::enable_if_t<std::is_arithmetic_v<U> && !std::is_same_v<U, T>,
                             int> = 0>
  Dual(U value) : v(static_cast<double>(value)), d() {}
};

template <class T>
double value_of(const Dual<T>& x) {
  return value_of(x.v);
}

// Number of stacked derivative levels a scalar carries.
template <class T>
struct tower_depth : std::integral_constant<int, 0> {};
template <>
struct tower_depth<Var> : std::integral_constant<int, 1> {};
template <class T>
struct tower_depth<Dual<T>>
    : std::integral_constant<int, 1 + tower_depth<T>::value> {};

template <class T>
inline Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return {a.v + b.v, a.d + b.d};
}
template <class T>
inline Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  return {a.v - b.v, a.d - b.d};
}
template <class T>
inline Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.v * b.v, a.v * b.d + a.d * b.v};
}
template <class T>
inline Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  T q = a.v / b.v;
  return {q, (a.d - q * b.d) / b.v};
}
template <class T>
inline Dual<T> operator-(const Dual<T>& a) {
  return {-a.v, -a.d};
}
template <class T>
inline Dual<T> operator+(const Dual<T>& a) {
  return a;
}

template <class T, class U,
          std::enable_if_t<std::is_arithmetic_v<U>, int> = 0>
inline Dual<T> operator+(const Dual<T>& a, U b) {
  return {a.v + static_cast<double>(b), a.d};
}
template <class T, class U,
          std::enable_if_t<std::is_arithmetic_v<U>, int> = 0>
inline Dual<T> operator+(U a, const Dual<T>& b) {
  return b + a;
}
template <class T, class U,
          std::enable_if_t<std::is_arithmetic_v<U>, int> = 0>
inline Dual<T> operator-(const Dual<T>& a, U b) {
  return {a.v - static_cast<double>(b), a.d};
}
template <class T, class U,
          std::enable_if_t<std::is_arithmetic_v<U>, int> = 0>
inline Dual<T> operator-(U a, const Dual<T>& b) {
  return {static_cast<double>(a) - b.v, -b.d};
}
template <class T, class U,
          std::enable_if_t<std::is_arithmetic_v<U>, int> = 0>
inline Dual<T> operator*(const Dual<T>& a, U b) {
  double c = static_cast<double>(b);
  return {a.v * c, a.d * c};
}
template <class T, class U,
          std::enable_if_t<std::is_arithmetic_v<U>, int> = 0>
inline Dual<T> operator*(U a, const Dual<T>& b) {
  return b * a;
}
template <class T, class U,
          std::enable_if_t<std::is_arithmetic_v<U>, int> = 0>
inline Dual<T> operator/(const Dual<T>& a, U b) {
  double c = static_cast<double>(b);
  return {a.v / c, a.d / c};
}
template <class T, class U,
          std::enable_if_t<std::is_arithmetic_v<U>, int> = 0>
inline Dual<T> operator/(U a, const Dual<T>& b) {
  T q = static_cast<double>(a) / b.v;
  return {q, -(q * b.d) / b.v};
}

template <class T>
inline Dual<T>& operator+=(Dual<T>& a, const Dual<T>& b) {
  return a = a + b;
}
template <class T>
inline Dual<T>& operator-=(Dual<T>& a, const Dual<T>& b) {
  return a = a - b;
}
template <class T>
inline Dual<T>& operator*=(Dual<T>& a, const Dual<T>& b) {
  return a = a * b;
}
template <class T>
inline Dual<T>& operator/=(Dual<T>& a, const Dual<T>& b) {
  return a = a / b;
}

template <class T>
inline Dual<T> exp(const Dual<T>& x) {
  using std::exp;
  T e = exp(x.v);
  return {e, x.d * e};
}
template <class T>
inline Dual<T> log(const Dual<T>& x) {
  using std::log;
  return {log(x.v), x.d / x.v};
}
template <class T>
inline Dual<T> log1p(const Dual<T>& x) {
  using std::log1p;
  return {log1p(x.v), x.d / (1.0 + x.v)};
}
template <class T>
inline Dual<T> sqrt(const Dual<T>& x) {
  using std::sqrt;
  T s = sqrt(x.v);
  return {s, x.d / (2.0 * s)};
}
template <class T>
inline Dual<T> sin(const Dual<T>& x) {
  using std::cos;
  using std::sin;
  return {sin(x.v), x.d * cos(x.v)};
}
template <class T>
inline Dual<T> cos(const Dual<T>& x) {
  using std::cos;
  using std::sin;
  return {cos(x.v), -(x.d * sin(x.v))};
}
template <class T>
inline Dual<T> tan(const Dual<T>& x) {
  using std::tan;
  T t = tan(x.v);
  return {t, x.d * (1.0 + t * t)};
}
template <class T>
inline Dual<T> tanh(const Dual<T>& x) {
  using std::tanh;
  T t = tanh(x.v);
  return {t, x.d * (1.0 - t * t)};
}
template <class T>
inline Dual<T> atan(const Dual<T>& x) {
  using std::atan;
  return {atan(x.v), x.d / (1.0 + x.v * x.v)};
}
template <class T>
inline Dual<T> pow(const Dual<T>& x, double p) {
  using std::pow;
  return {pow(x.v, p), x.d * (p * pow(x.v, p - 1.0))};
}

}  // namespace lgm
