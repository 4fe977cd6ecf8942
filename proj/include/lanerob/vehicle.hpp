#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lanerob/common.hpp"

namespace lanerob {

/// Planar vehicle state at the rear-axle reference point. Heading and steering are positive
/// toward the right (x ahead, y right).
struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  double steering = 0.0;

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

/// One explicit kinematic bicycle step with the commanded steering angle held over dt.
inline VehicleState bicycle_step(const VehicleState& s, double steering_cmd, double dt, double wheelbase) {
  if (!(dt > 0.0)) throw Error("bicycle_step: dt must be positive");
  VehicleState n = s;
  n.steering = steering_cmd;
  n.heading = s.heading + (s.speed / wheelbase) * std::tan(steering_cmd) * dt;
  n.x = s.x + s.speed * std::cos(s.heading) * dt;
  n.y = s.y + s.speed * std::sin(s.heading) * dt;
  return n;
}

/// Moves `current` toward `desired` by at most `max_step`, then clamps to +-max_abs.
inline double rate_limit(double current, double desired, double max_step, double max_abs) {
  const double next = current + std::clamp(desired - current, -max_step, max_step);
  return std::clamp(next, -max_abs, max_abs);
}

struct TrajectorySample {
  double t = 0.0;
  VehicleState state;
  double lateral_offset = 0.0;  // from ego-lane centre, positive right
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  bool valid = true;
  bool degraded = false;      // at least one frame without ego lines (steering held)
  double max_steer_step = 0.0;  // largest |delta change| over all actuation substeps, rad
  int actuation_substeps = 0;
  std::string error;
};

}  // namespace lanerob
