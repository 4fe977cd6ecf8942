#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace lanerob {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kPi = std::numbers::pi;

constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Planar point or vector. Ground coordinates use x ahead and y to the right.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;

  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
};

enum class AttackDirection { left, right };

inline const char* to_string(AttackDirection d) { return d == AttackDirection::left ? "left" : "right"; }

inline AttackDirection parse_direction(const std::string& s) {
  if (s == "left") return AttackDirection::left;
  if (s == "right") return AttackDirection::right;
  throw Error("unknown attack direction: " + s);
}

/// +1 for rightward attacks, -1 for leftward ones.
constexpr double direction_sign(AttackDirection d) { return d == AttackDirection::right ? 1.0 : -1.0; }

inline double clamp_gray(double v) { return std::clamp(v, 0.0, 255.0); }

}  // namespace lanerob
