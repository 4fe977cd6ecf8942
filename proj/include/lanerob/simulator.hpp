#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "lanerob/artifacts.hpp"
#include "lanerob/control.hpp"
#include "lanerob/detectors.hpp"
#include "lanerob/scene.hpp"
#include "lanerob/vehicle.hpp"

namespace lanerob {

struct SpeedPoint {
  double t = 0.0;
  double v = 0.0;
};

enum class FrameSource {
  render,  // every frame rendered from the scene at the simulated pose
  warp,    // the reference-trace render of each frame warped to the simulated pose
};

struct Scenario {
  std::string name = "straight";
  RoadGeometry road;
  RoadAppearance look;
  std::vector<SpeedPoint> speed_trace{{0.0, 25.0}};
  double wheelbase = 2.65;
  double max_steer_deg = 30.0;
  double max_steer_step_deg = 0.25;  // per actuation substep
  int duration_frames = 50;
  double detect_rate = 20.0;
  double actuate_rate = 100.0;
  double initial_offset = 0.0;
  double attack_placement = 7.0;
  int generation_frames = 20;
  FrameSource frame_source = FrameSource::render;
  ControlConfig control;
  std::vector<double> y_samples;  // detector-input rows used to canonicalize lanes
  double detection_threshold = 0.5;

  int substeps() const {
    const double r = actuate_rate / detect_rate;
    const int n = static_cast<int>(std::lround(r));
    if (n < 1 || std::abs(r - n) > 1e-9) throw Error("scenario: actuate_rate must be an integer multiple of detect_rate");
    return n;
  }

  double speed_at(double t) const {
    if (speed_trace.empty()) throw Error("scenario: empty speed trace");
    if (t <= speed_trace.front().t) return speed_trace.front().v;
    for (std::size_t i = 1; i < speed_trace.size(); ++i) {
      if (t <= speed_trace[i].t) {
        const auto& a = speed_trace[i - 1];
        const auto& b = speed_trace[i];
        return a.v + (b.v - a.v) * (t - a.t) / (b.t - a.t);
      }
    }
    return speed_trace.back().v;
  }

  Scene scene(const AttackArtifact& attack = {}) const { return {road, look, attack.patch, attack.line}; }
};

inline const std::vector<double>& sample_rows(const Scenario& sc, const CameraModel& cam,
                                              std::vector<double>& storage) {
  if (!sc.y_samples.empty()) return sc.y_samples;
  storage = default_y_samples(cam.detector_height());
  return storage;
}

/// Human-driver reference: the vehicle keeps its initial lateral offset along the road, with
/// distance integrated from the speed trace at the actuation rate. One pose per frame, frames
/// 0..frames inclusive.
inline std::vector<Pose> reference_poses(const Scenario& sc, int frames) {
  const int sub = sc.substeps();
  const double dt = 1.0 / sc.actuate_rate;
  std::vector<Pose> out;
  double s = 0.0;
  double t = 0.0;
  out.push_back(sc.road.pose_at(s, sc.initial_offset));
  for (int k = 0; k < frames; ++k) {
    for (int j = 0; j < sub; ++j) {
      s += sc.speed_at(t) * dt;
      t += dt;
    }
    out.push_back(sc.road.pose_at(s, sc.initial_offset));
  }
  return out;
}

inline Trajectory reference_trajectory(const Scenario& sc) {
  Trajectory tr;
  const auto poses = reference_poses(sc, sc.duration_frames);
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const double t = static_cast<double>(k) / sc.detect_rate;
    VehicleState st{poses[k].x, poses[k].y, poses[k].heading, sc.speed_at(t), 0.0};
    tr.samples.push_back({t, st, sc.road.locate({st.x, st.y}).d});
  }
  return tr;
}

inline Pose pose_of(const VehicleState& s) { return {s.x, s.y, s.heading}; }

/// Detector query for one frame: lanes canonicalized on the y-sample set, reduced to the ego
/// pair and placed on the ground.
inline BevLanes perceive(Detector& det, const ImageFrame& input, const CameraModel& cam, const std::vector<double>& ys,
                         double threshold, const FrameContext* ctx) {
  const auto rep = det.detect(input, ctx);
  if (rep.family() != det.info().family) throw Error("detector emitted a family other than the declared one");
  validate(rep);
  const auto lanes = filter_ego(canonicalize(rep, ys, threshold), input.width / 2.0);
  return to_bev(lanes, cam);
}

/// Closed-loop run: detection at detect_rate, then rate-limited steering and kinematic bicycle
/// steps at actuate_rate. Samples cover frames 0..duration_frames (t = 0 .. duration). A
/// detector failure ends the run with `valid` false and the partial trajectory.
inline Trajectory run_scenario(const Scenario& sc, Detector& det, const CameraModel& cam,
                               const AttackArtifact& attack = {}) {
  const Scene scene = sc.scene(attack);
  const int sub = sc.substeps();
  const double dt = 1.0 / sc.actuate_rate;
  const double max_steer = deg_to_rad(sc.max_steer_deg);
  const double max_step = deg_to_rad(sc.max_steer_step_deg);
  std::vector<double> ys_storage;
  const auto& ys = sample_rows(sc, cam, ys_storage);
  ControlConfig ctl = sc.control;
  ctl.wheelbase = sc.wheelbase;
  ctl.lane_width = sc.road.lane_width;

  std::vector<Pose> ref;
  if (sc.frame_source == FrameSource::warp) ref = reference_poses(sc, sc.duration_frames);

  Trajectory tr;
  const Pose start = sc.road.pose_at(0.0, sc.initial_offset);
  VehicleState st{start.x, start.y, start.heading, sc.speed_at(0.0),
                  std::clamp(std::atan(sc.wheelbase * sc.road.curvature), -max_steer, max_steer)};
  double t = 0.0;
  auto record = [&](double time) { tr.samples.push_back({time, st, sc.road.locate({st.x, st.y}).d}); };
  record(0.0);
  for (int k = 0; k < sc.duration_frames; ++k) {
    const Pose pose = pose_of(st);
    std::optional<double> desired;
    try {
      ImageFrame camera_frame;
      if (sc.frame_source == FrameSource::warp) {
        camera_frame = synthesize_frame(cam, render_scene(scene, cam, ref[k]), relative_pose(ref[k], pose));
      } else {
        camera_frame = render_scene(scene, cam, pose, &cam.crop_rect());
      }
      const FrameContext ctx{&scene, &cam, pose, k};
      const auto bev = perceive(det, adapt_crop(cam, camera_frame), cam, ys, sc.detection_threshold, &ctx);
      desired = lateral_control(bev, st, ctl);
    } catch (const Error& e) {
      tr.valid = false;
      tr.error = e.what();
      return tr;
    }
    if (!desired) tr.degraded = true;
    const double target = desired.value_or(st.steering);
    for (int j = 0; j < sub; ++j) {
      const double steer = rate_limit(st.steering, target, max_step, max_steer);
      tr.max_steer_step = std::max(tr.max_steer_step, std::abs(steer - st.steering));
      ++tr.actuation_substeps;
      st = bicycle_step(st, steer, dt, sc.wheelbase);
      t += dt;
      st.speed = sc.speed_at(t);
    }
    record(static_cast<double>(k + 1) / sc.detect_rate);
  }
  return tr;
}

inline std::string trajectory_csv(const Trajectory& tr) {
  std::string out = "t,x,y,psi,v,delta,lateral_offset\n";
  char buf[256];
  for (const auto& s : tr.samples) {
    std::snprintf(buf, sizeof buf, "%.4f,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", s.t, s.state.x, s.state.y,
                  s.state.heading, s.state.speed, s.state.steering, s.lateral_offset);
    out += buf;
  }
  return out;
}

}  // namespace lanerob
