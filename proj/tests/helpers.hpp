#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

// Shared finite-difference oracles. First derivatives use the spec step
// 1e-5; second derivatives use a larger step because the roundoff term of a
// second central difference grows as eps/h^2, so h ~ 1e-4 balances it
// against the O(h^2) truncation error for O(1) quantities.
namespace oracle {

inline constexpr double kStep1 = 1e-5;
inline constexpr double kStep2 = 2e-4;

inline double diff1(const std::function<double(double)>& f, double x, double h = kStep1) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double diff2(const std::function<double(double)>& f, double x, double h = kStep2) {
  return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
}

/// Relative error with an absolute floor of 1 (for near-zero pairs).
inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1.0});
}

} // namespace oracle
