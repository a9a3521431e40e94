#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace safenav {

inline constexpr double kPi = std::numbers::pi;

/// Raised when an input (config, record, call arguments) fails validation.
/// The CLI maps it to exit code 1; every other exception maps to 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Vec2 {
  double x{0.0};
  double y{0.0};

  bool operator==(const Vec2&) const = default;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::sqrt(x * x + y * y); }
  double squared_norm() const { return x * x + y * y; }
};

/// Rotate counter-clockwise by `angle`.
inline Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Wrap to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

/// Velocity command: linear in m/s along the heading, angular in rad/s.
struct Action {
  double linear{0.0};
  double angular{0.0};

  bool operator==(const Action&) const = default;
};

struct ActionBounds {
  Action min{0.0, -kPi};
  Action max{1.0, kPi};

  bool operator==(const ActionBounds&) const = default;

  Action clamp(Action a) const {
    return {std::clamp(a.linear, min.linear, max.linear), std::clamp(a.angular, min.angular, max.angular)};
  }
  bool contains(Action a) const {
    return a.linear >= min.linear && a.linear <= max.linear && a.angular >= min.angular &&
           a.angular <= max.angular;
  }
  Action midpoint() const {
    return {0.5 * (min.linear + max.linear), 0.5 * (min.angular + max.angular)};
  }
  void validate() const {
    if (!(min.linear < max.linear) || !(min.angular < max.angular)) {
      throw ValidationError("action bounds: a_min must be < a_max componentwise");
    }
  }
};

/// Uniform double in [lo, hi) from the top 53 bits; identical on every platform,
/// unlike std::uniform_real_distribution.
inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

/// Standard normal via Box-Muller on `uniform`, for the same portability reason.
inline double standard_normal(std::mt19937_64& rng) {
  double u1 = uniform(rng, 0.0, 1.0);
  while (u1 <= 0.0) u1 = uniform(rng, 0.0, 1.0);
  const double u2 = uniform(rng, 0.0, 1.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(n))) % n;
}

}  // namespace safenav
