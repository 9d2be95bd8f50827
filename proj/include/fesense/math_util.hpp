#pragma once

#include <cmath>
#include <numbers>

namespace fesense {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Default NV gyromagnetic ratio, Hz per tesla (frequency convention).
inline constexpr double kDefaultGyromagneticHzPerT = 2.8024e10;

// Default projection angle between the applied field axis and the NV
// axis, radians (54.7 degrees for a [100]-cut diamond).
inline constexpr double kDefaultProjectionAngleRad = 54.7 * std::numbers::pi / 180.0;

// Wrap into [-pi, pi).
inline double wrap_angle(double x) {
  double y = std::remainder(x, kTwoPi);
  if (y >= kPi) y -= kTwoPi;  // remainder returns (-pi, pi]; fold the top edge
  return y;
}

inline bool nearly_equal(double a, double b, double rel, double abs_floor = 0.0) {
  double scale = std::max(std::abs(a), std::abs(b));
  return std::abs(a - b) <= std::max(rel * scale, abs_floor);
}

}  // namespace fesense
