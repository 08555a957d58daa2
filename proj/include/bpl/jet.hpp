#pragma once

#include <cmath>
#include <span>
#include <stdexcept>

namespace bpl {

/// Truncated Taylor jet carrying a value, first derivatives in x and t, and
/// the second derivative in x. Arithmetic follows the exact coefficient
/// rules, so propagating seeded coordinates through an expression yields the
/// expression's derivatives.
struct Jet2 {
  double val = 0.0;
  double dx = 0.0;
  double dt = 0.0;
  double dxx = 0.0;

  static Jet2 constant(double c) { return {c, 0.0, 0.0, 0.0}; }
  static Jet2 seed_x(double x) { return {x, 1.0, 0.0, 0.0}; }
  static Jet2 seed_t(double t) { return {t, 0.0, 1.0, 0.0}; }
};

inline Jet2 operator+(const Jet2& f, const Jet2& g) {
  return {f.val + g.val, f.dx + g.dx, f.dt + g.dt, f.dxx + g.dxx};
}

inline Jet2 operator-(const Jet2& f, const Jet2& g) {
  return {f.val - g.val, f.dx - g.dx, f.dt - g.dt, f.dxx - g.dxx};
}

inline Jet2 operator-(const Jet2& f) { return {-f.val, -f.dx, -f.dt, -f.dxx}; }

inline Jet2 operator*(const Jet2& f, const Jet2& g) {
  return {f.val * g.val,
          f.dx * g.val + f.val * g.dx,
          f.dt * g.val + f.val * g.dt,
          f.dxx * g.val + 2.0 * f.dx * g.dx + f.val * g.dxx};
}

inline Jet2 operator*(double c, const Jet2& f) {
  return {c * f.val, c * f.dx, c * f.dt, c * f.dxx};
}
inline Jet2 operator*(const Jet2& f, double c) { return c * f; }

inline Jet2 operator+(const Jet2& f, double c) { return f + Jet2::constant(c); }
inline Jet2 operator+(double c, const Jet2& f) { return f + c; }
inline Jet2 operator-(const Jet2& f, double c) { return f - Jet2::constant(c); }
inline Jet2 operator-(double c, const Jet2& f) { return Jet2::constant(c) - f; }

inline Jet2 operator/(const Jet2& f, const Jet2& g) {
  if (g.val == 0.0) throw std::domain_error("Jet2: division by zero value");
  const double v = f.val / g.val;
  const double dx = (f.dx - v * g.dx) / g.val;
  const double dt = (f.dt - v * g.dt) / g.val;
  const double dxx = (f.dxx - 2.0 * dx * g.dx - v * g.dxx) / g.val;
  return {v, dx, dt, dxx};
}

namespace detail {
// Unary lift: phi with first and second derivative at f.val.
inline Jet2 lift(const Jet2& f, double p, double p1, double p2) {
  return {p, p1 * f.dx, p1 * f.dt, p1 * f.dxx + p2 * f.dx * f.dx};
}
} // namespace detail

inline Jet2 tanh(const Jet2& f) {
  const double h = std::tanh(f.val);
  const double s = 1.0 - h * h;
  return detail::lift(f, h, s, -2.0 * h * s);
}

inline Jet2 exp(const Jet2& f) {
  const double e = std::exp(f.val);
  return detail::lift(f, e, e, e);
}

inline Jet2 sin(const Jet2& f) {
  const double s = std::sin(f.val);
  const double c = std::cos(f.val);
  return detail::lift(f, s, c, -s);
}

inline Jet2 recip(const Jet2& f) {
  if (f.val == 0.0) throw std::domain_error("Jet2: reciprocal of zero value");
  const double r = 1.0 / f.val;
  return detail::lift(f, r, -r * r, 2.0 * r * r * r);
}

/// Elementary operations the differentiation engine understands.
enum class ElemOp { add, sub, mul, div, tanh, exp, sin, scale };

/// Applies one elementary op to jet arguments. `c` is the factor for scale.
inline Jet2 jet_apply(ElemOp op, std::span<const Jet2> args, double c = 0.0) {
  switch (op) {
    case ElemOp::add: return args[0] + args[1];
    case ElemOp::sub: return args[0] - args[1];
    case ElemOp::mul: return args[0] * args[1];
    case ElemOp::div: return args[0] / args[1];
    case ElemOp::tanh: return tanh(args[0]);
    case ElemOp::exp: return exp(args[0]);
    case ElemOp::sin: return sin(args[0]);
    case ElemOp::scale: return c * args[0];
  }
  throw std::invalid_argument("jet_apply: unknown op");
}

} // namespace bpl
