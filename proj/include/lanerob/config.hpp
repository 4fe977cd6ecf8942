#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lanerob/artifacts.hpp"
#include "lanerob/attack_line.hpp"
#include "lanerob/attack_patch.hpp"
#include "lanerob/detectors.hpp"
#include "lanerob/metrics.hpp"
#include "lanerob/simulator.hpp"
#include "lanerob/tpe.hpp"

namespace lanerob {

namespace fs = std::filesystem;

/// Recursively merges `patch` into `base`: objects merge key by key, anything else replaces.
inline void merge_json(Json& base, const Json& patch) {
  if (!base.is_object() || !patch.is_object()) {
    base = patch;
    return;
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (base.contains(it.key())) {
      merge_json(base[it.key()], it.value());
    } else {
      base[it.key()] = it.value();
    }
  }
}

/// Loads a JSON config. An "include" entry (string or list, paths relative to the including
/// file) is loaded first, in order; the file's own keys then override it.
inline Json load_config(const fs::path& path, int depth = 0) {
  if (depth > 16) throw Error("config: include nesting too deep at " + path.string());
  Json doc;
  try {
    doc = Json::parse(read_file(path.string()));
  } catch (const Json::exception& e) {
    throw Error("config: cannot parse " + path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw Error("config: top level of " + path.string() + " must be an object");
  Json merged = Json::object();
  if (doc.contains("include")) {
    const Json inc = doc["include"].is_array() ? doc["include"] : Json::array({doc["include"]});
    for (const auto& p : inc) merge_json(merged, load_config(path.parent_path() / p.get<std::string>(), depth + 1));
    doc.erase("include");
  }
  merge_json(merged, doc);
  return merged;
}

// ---------------------------------------------------------------------------
// Typed views of the merged document

inline CameraModel camera_from_json(const Json& j) {
  PinholeParams p;
  p.image_width = j.value("image_width", p.image_width);
  p.image_height = j.value("image_height", p.image_height);
  p.focal_px = j.value("focal_px", p.focal_px);
  p.cx = j.value("cx", p.cx);
  p.cy = j.value("cy", p.cy);
  p.mount_height_m = j.value("mount_height_m", p.mount_height_m);
  p.pitch_rad = j.value("pitch_rad", p.pitch_rad);
  if (j.contains("crop")) {
    const auto& c = j.at("crop");
    p.crop = {c.at(0).get<int>(), c.at(1).get<int>(), c.at(2).get<int>(), c.at(3).get<int>()};
  }
  p.detector_width = j.value("detector_width", p.detector_width);
  p.detector_height = j.value("detector_height", p.detector_height);
  return CameraModel::pinhole(p);
}

inline AccuracyConfig accuracy_from_json(const Json& j) {
  AccuracyConfig c;
  c.pixel_threshold = j.value("pixel_threshold", c.pixel_threshold);
  c.match_threshold = j.value("match_threshold", c.match_threshold);
  if (!(c.pixel_threshold > 0.0) || !(c.match_threshold > 0.0 && c.match_threshold <= 1.0)) {
    throw Error("config: invalid accuracy thresholds");
  }
  return c;
}

inline OutcomeConfig outcome_from_json(const Json& j) {
  OutcomeConfig c;
  c.deviation_threshold = j.value("deviation_threshold", c.deviation_threshold);
  c.horizon = j.value("horizon", c.horizon);
  return c;
}

inline TpeConfig tpe_from_json(const Json& j) {
  TpeConfig c;
  c.gamma = j.value("gamma", c.gamma);
  c.n_startup = j.value("n_startup", c.n_startup);
  c.n_candidates = j.value("n_candidates", c.n_candidates);
  c.min_bandwidth_frac = j.value("min_bandwidth_frac", c.min_bandwidth_frac);
  return c;
}

inline ClassicalConfig classical_from_json(const Json& j) {
  ClassicalConfig c;
  c.threshold = j.value("threshold", c.threshold);
  c.max_marking_width = j.value("max_marking_width", c.max_marking_width);
  c.scan_top = j.value("scan_top", c.scan_top);
  c.max_gap_rows = j.value("max_gap_rows", c.max_gap_rows);
  c.chain_tolerance = j.value("chain_tolerance", c.chain_tolerance);
  c.min_chain_points = j.value("min_chain_points", c.min_chain_points);
  c.vanishing_x = j.value("vanishing_x", c.vanishing_x);
  c.vanishing_y = j.value("vanishing_y", c.vanishing_y);
  c.degree = j.value("degree", c.degree);
  c.ego_pair_only = j.value("ego_pair_only", c.ego_pair_only);
  return c;
}

inline OracleConfig oracle_from_json(const Json& j) {
  OracleConfig c;
  c.noise_px = j.value("noise_px", c.noise_px);
  return c;
}

inline FrameSource parse_frame_source(const std::string& s) {
  if (s == "render") return FrameSource::render;
  if (s == "warp") return FrameSource::warp;
  throw Error("config: unknown frame source '" + s + "'");
}

inline const char* to_string(FrameSource f) { return f == FrameSource::render ? "render" : "warp"; }

/// Scenario from a preset object layered over the document's "simulation", "road" and
/// "appearance" blocks.
inline Scenario scenario_from_json(const Json& preset, const Json& defaults) {
  Json sim = defaults.value("simulation", Json::object());
  Json road = defaults.value("road", Json::object());
  Json look = defaults.value("appearance", Json::object());
  if (preset.contains("simulation")) merge_json(sim, preset["simulation"]);
  if (preset.contains("road")) merge_json(road, preset["road"]);
  if (preset.contains("appearance")) merge_json(look, preset["appearance"]);

  Scenario sc;
  sc.name = preset.value("name", sc.name);
  sc.road.curvature = road.value("curvature", sc.road.curvature);
  sc.road.lane_width = road.value("lane_width", sc.road.lane_width);
  sc.road.lanes_left = road.value("lanes_left", sc.road.lanes_left);
  sc.road.lanes_right = road.value("lanes_right", sc.road.lanes_right);
  sc.road.line_width = road.value("line_width", sc.road.line_width);
  sc.road.shoulder = road.value("shoulder", sc.road.shoulder);
  sc.look.asphalt = look.value("asphalt", sc.look.asphalt);
  sc.look.texture_amplitude = look.value("texture_amplitude", sc.look.texture_amplitude);
  sc.look.texture_cell = look.value("texture_cell", sc.look.texture_cell);
  sc.look.line_gray = look.value("line_gray", sc.look.line_gray);
  sc.look.max_range = look.value("max_range", sc.look.max_range);
  sc.look.texture_seed = look.value("texture_seed", sc.look.texture_seed);
  if (look.contains("grass")) sc.look.grass = look.at("grass").get<std::array<double, 3>>();
  if (look.contains("sky")) sc.look.sky = look.at("sky").get<std::array<double, 3>>();

  sc.wheelbase = sim.value("wheelbase", sc.wheelbase);
  sc.max_steer_deg = sim.value("max_steer_deg", sc.max_steer_deg);
  sc.max_steer_step_deg = sim.value("max_steer_step_deg", sc.max_steer_step_deg);
  sc.duration_frames = sim.value("duration_frames", sc.duration_frames);
  sc.detect_rate = sim.value("detect_rate", sc.detect_rate);
  sc.actuate_rate = sim.value("actuate_rate", sc.actuate_rate);
  sc.attack_placement = sim.value("attack_placement", sc.attack_placement);
  sc.generation_frames = sim.value("generation_frames", sc.generation_frames);
  sc.detection_threshold = sim.value("detection_threshold", sc.detection_threshold);
  sc.control.lookahead_time = sim.value("lookahead_time", sc.control.lookahead_time);
  sc.control.min_lookahead = sim.value("min_lookahead", sc.control.min_lookahead);
  sc.frame_source = parse_frame_source(sim.value("frame_source", std::string("render")));
  if (sim.contains("y_samples")) sc.y_samples = sim.at("y_samples").get<std::vector<double>>();

  sc.initial_offset = preset.value("initial_offset", sc.initial_offset);
  if (preset.contains("speed_trace")) {
    sc.speed_trace.clear();
    for (const auto& p : preset.at("speed_trace")) sc.speed_trace.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  } else if (preset.contains("speed")) {
    sc.speed_trace = {{0.0, preset.at("speed").get<double>()}};
  }
  if (sc.speed_trace.empty()) throw Error("scenario '" + sc.name + "': empty speed trace");
  (void)sc.substeps();
  return sc;
}

inline Json to_json(const Scenario& sc) {
  Json speed = Json::array();
  for (const auto& p : sc.speed_trace) speed.push_back({p.t, p.v});
  return {{"name", sc.name},
          {"curvature", sc.road.curvature},
          {"lane_width", sc.road.lane_width},
          {"initial_offset", sc.initial_offset},
          {"speed_trace", speed},
          {"frame_source", to_string(sc.frame_source)},
          {"duration_frames", sc.duration_frames},
          {"generation_frames", sc.generation_frames},
          {"attack_placement", sc.attack_placement},
          {"texture_seed", sc.look.texture_seed}};
}

struct PatchShape {
  double width = 5.4;
  double length = 36.0;
};

inline PatchShape patch_shape_from_json(const Json& j, PatchShape d) {
  d.width = j.value("width", d.width);
  d.length = j.value("length", d.length);
  return d;
}

/// Attack settings shared by both evaluation tracks.
struct AttackSettings {
  AttackBudget budget;
  NesSampling sampling = NesSampling::orthogonal;
  double cell = 0.15;
  double base_gray = 80.0;
  bool overdraw_lanes = true;
  PatchShape conventional{3.6, 36.0};
  PatchShape end_to_end{5.4, 36.0};
  LineAttackOptions line;
};

inline AttackSettings attack_settings_from_json(const Json& doc) {
  AttackSettings a;
  a.budget = budget_from_json(doc.value("budget", Json::object()));
  const auto patch = doc.value("patch", Json::object());
  a.cell = patch.value("cell", a.cell);
  a.base_gray = patch.value("base_gray", a.base_gray);
  a.overdraw_lanes = patch.value("overdraw_lanes", a.overdraw_lanes);
  a.conventional = patch_shape_from_json(patch.value("conventional", Json::object()), a.conventional);
  a.end_to_end = patch_shape_from_json(patch.value("end_to_end", Json::object()), a.end_to_end);
  const auto nes = doc.value("nes", Json::object());
  const auto mode = nes.value("sampling", std::string("orthogonal"));
  if (mode != "orthogonal" && mode != "iid") throw Error("config: unknown NES sampling '" + mode + "'");
  a.sampling = mode == "iid" ? NesSampling::iid : NesSampling::orthogonal;
  const auto line = doc.value("line", Json::object());
  a.line.iterations = line.value("iterations", a.line.iterations);
  a.line.min_width = line.value("min_width", a.line.min_width);
  a.line.max_width = line.value("max_width", a.line.max_width);
  a.line.color = line.value("color", a.line.color);
  a.line.tpe = tpe_from_json(doc.value("tpe", Json::object()));
  if (a.line.iterations < 0 || !(a.line.min_width > 0.0 && a.line.max_width > a.line.min_width)) {
    throw Error("config: invalid line attack settings");
  }
  return a;
}

}  // namespace lanerob
