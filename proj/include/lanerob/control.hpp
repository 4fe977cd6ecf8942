#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "lanerob/geometry.hpp"
#include "lanerob/lanes.hpp"
#include "lanerob/vehicle.hpp"

namespace lanerob {

/// One ego line on the ground plane (vehicle frame), with the index of the y-sample each
/// point came from so left and right lines can be paired pointwise.
struct BevLine {
  LineRole role = LineRole::other;
  std::vector<int> sample;
  std::vector<Vec2> pts;
};

struct BevLanes {
  std::vector<BevLine> lines;
};

/// Back-projects canonical detector-input lines onto the ground. Samples at or above the
/// horizon are dropped.
inline BevLanes to_bev(const LabeledLanes& lanes, const CameraModel& cam) {
  BevLanes out;
  for (const auto& l : lanes.lines) {
    BevLine b;
    b.role = l.role;
    for (std::size_t i = 0; i < l.x.size(); ++i) {
      if (!l.x[i]) continue;
      const auto g = cam.try_back_project(cam.detector_to_camera({*l.x[i], lanes.ys[i]}));
      if (!g || g->x <= 0.0) continue;
      b.sample.push_back(static_cast<int>(i));
      b.pts.push_back(*g);
    }
    if (!b.pts.empty()) out.lines.push_back(std::move(b));
  }
  return out;
}

struct ControlConfig {
  double lookahead_time = 1.0;
  double min_lookahead = 5.0;
  double wheelbase = 2.65;
  double lane_width = 3.6;
};

namespace detail {

inline std::vector<Vec2> sorted_by_range(std::vector<Vec2> pts) {
  std::stable_sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x < b.x; });
  return pts;
}

/// Line shifted sideways by `offset` (positive right) along its local normal.
inline std::vector<Vec2> offset_line(const std::vector<Vec2>& pts, double offset) {
  const auto p = sorted_by_range(pts);
  if (p.size() < 2) {
    std::vector<Vec2> out;
    for (auto q : p) out.push_back({q.x, q.y + offset});
    return out;
  }
  std::vector<Vec2> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Vec2 a = p[i == 0 ? 0 : i - 1];
    const Vec2 b = p[i + 1 == p.size() ? i : i + 1];
    Vec2 t = b - a;
    const double n = t.norm();
    t = n > 1e-12 ? (1.0 / n) * t : Vec2{1.0, 0.0};
    out[i] = p[i] + offset * Vec2{-t.y, t.x};
  }
  return out;
}

}  // namespace detail

/// Desired driving path: pointwise mean of the ego pair, or a single ego line shifted by half
/// a lane width toward the lane centre. Empty when no usable line exists.
inline std::vector<Vec2> desired_path(const BevLanes& lanes, double lane_width) {
  const BevLine* left = nullptr;
  const BevLine* right = nullptr;
  for (const auto& l : lanes.lines) {
    if (l.role == LineRole::ego_left && !left) left = &l;
    if (l.role == LineRole::ego_right && !right) right = &l;
  }
  if (left && right) {
    std::vector<Vec2> mid;
    std::size_t j = 0;
    for (std::size_t i = 0; i < left->sample.size(); ++i) {
      while (j < right->sample.size() && right->sample[j] < left->sample[i]) ++j;
      if (j < right->sample.size() && right->sample[j] == left->sample[i]) {
        mid.push_back(0.5 * (left->pts[i] + right->pts[j]));
      }
    }
    if (!mid.empty()) return detail::sorted_by_range(std::move(mid));
    if (right->pts.size() > left->pts.size()) {
      left = nullptr;
    } else {
      right = nullptr;
    }
  }
  if (left) return detail::offset_line(left->pts, lane_width / 2);
  if (right) return detail::offset_line(right->pts, -lane_width / 2);
  return {};
}

/// Pure-pursuit steering toward the point of `path` (vehicle frame, ordered by range) at the
/// lookahead distance; the farthest point is used when the path is shorter, the nearest when
/// it starts beyond the lookahead.
inline double pure_pursuit(const std::vector<Vec2>& path, double speed, const ControlConfig& cfg) {
  if (path.empty()) throw Error("pure_pursuit: empty path");
  const double ld = std::max(speed * cfg.lookahead_time, cfg.min_lookahead);
  Vec2 target = path.back();
  if (path.front().norm() >= ld) {
    target = path.front();
  } else {
    for (std::size_t i = 1; i < path.size(); ++i) {
      const double r0 = path[i - 1].norm();
      const double r1 = path[i].norm();
      if (r0 < ld && r1 >= ld) {
        const double f = (ld - r0) / (r1 - r0);
        target = path[i - 1] + f * (path[i] - path[i - 1]);
        break;
      }
    }
  }
  const double dist = std::max(target.norm(), 1e-6);
  const double alpha = std::atan2(target.y, target.x);
  return std::atan(2.0 * cfg.wheelbase * std::sin(alpha) / dist);
}

/// Desired steering angle from the ego lines; nullopt when there is nothing to follow.
inline std::optional<double> lateral_control(const BevLanes& ego, const VehicleState& state, const ControlConfig& cfg) {
  const auto path = desired_path(ego, cfg.lane_width);
  if (path.empty()) return std::nullopt;
  return pure_pursuit(path, state.speed, cfg);
}

}  // namespace lanerob
