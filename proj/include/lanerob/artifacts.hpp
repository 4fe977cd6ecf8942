#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanerob/common.hpp"
#include "lanerob/image.hpp"

namespace lanerob {

using Json = nlohmann::json;

/// Axis-aligned region in road coordinates (s along the road, d lateral, positive right).
struct RoadArea {
  double s_lo = 7.0;
  double s_hi = 43.0;
  double d_lo = -2.7;
  double d_hi = 2.7;

  bool contains(double s, double d) const { return s >= s_lo && s <= s_hi && d >= d_lo && d <= d_hi; }
};

/// Gray-scale dirty-road patch lying on the road surface.
///
/// The perturbation grid has `rows` cells along the road and `cols` across it; cell (r, c) is
/// stored at r * cols + c, with r = 0 at the near edge and c = 0 at the left edge.
struct RoadPatch {
  double s0 = 7.0;
  double d_center = 0.0;
  double width = 5.4;
  double length = 36.0;
  double cell = 0.15;
  double base_gray = 80.0;
  bool overdraw_lanes = true;
  int rows = 0;
  int cols = 0;
  std::vector<double> delta;
  std::vector<std::uint8_t> mask;

  static RoadPatch make(double s0, double d_center, double width, double length, double cell, double base_gray) {
    if (!(width > 0.0 && length > 0.0 && cell > 0.0)) throw Error("patch: size and cell must be positive");
    RoadPatch p;
    p.s0 = s0;
    p.d_center = d_center;
    p.width = width;
    p.length = length;
    p.cell = cell;
    p.base_gray = base_gray;
    p.cols = std::max(1, static_cast<int>(std::lround(width / cell)));
    p.rows = std::max(1, static_cast<int>(std::lround(length / cell)));
    p.delta.assign(p.cells(), 0.0);
    p.mask.assign(p.cells(), 0);
    return p;
  }

  std::size_t cells() const { return static_cast<std::size_t>(rows) * cols; }
  RoadArea area() const { return {s0, s0 + length, d_center - width / 2, d_center + width / 2}; }

  /// Cell under road point (s, d), or -1 outside the patch.
  int cell_index(double s, double d) const {
    const double u = (d - (d_center - width / 2)) / width * cols;
    const double v = (s - s0) / length * rows;
    if (u < 0.0 || v < 0.0 || u >= cols || v >= rows) return -1;
    return static_cast<int>(v) * cols + static_cast<int>(u);
  }

  double gray(std::size_t k) const { return clamp_gray(base_gray + delta[k]); }

  /// Fraction of perturbable cells.
  double par() const {
    std::size_t n = 0;
    for (auto m : mask) n += m != 0;
    return cells() == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(cells());
  }
};

/// Line painted on the road between two road-frame points (s, d).
struct DrawnLine {
  Vec2 start;  // (s, d)
  Vec2 end;
  double width = 0.05;
  double color = 230.0;

  void validate(const RoadArea* area = nullptr, double min_width = 0.012, double max_width = 0.12) const {
    if ((end - start).norm() < 1e-6) throw Error("drawn line: start equals end");
    if (width < min_width - 1e-12 || width > max_width + 1e-12) throw Error("drawn line: width out of bounds");
    if (area && (!area->contains(start.x, start.y) || !area->contains(end.x, end.y))) {
      throw Error("drawn line: endpoint outside the attack area");
    }
  }
};

/// Attack objects placed in a scenario; both empty for a benign run.
struct AttackArtifact {
  std::optional<RoadPatch> patch;
  std::optional<DrawnLine> line;

  bool empty() const { return !patch && !line; }
};

struct AttackBudget {
  int iterations = 200;
  double learning_rate = 1e-2;
  double lambda_reg = 1e-3;
  int nes_samples = 100;
  double nes_sigma = 10.0;
  double par = 0.5;
};

// ---------------------------------------------------------------------------
// JSON

inline Json to_json(const RoadArea& a) { return {{"s_lo", a.s_lo}, {"s_hi", a.s_hi}, {"d_lo", a.d_lo}, {"d_hi", a.d_hi}}; }

inline RoadArea area_from_json(const Json& j) {
  return {j.at("s_lo").get<double>(), j.at("s_hi").get<double>(), j.at("d_lo").get<double>(), j.at("d_hi").get<double>()};
}

inline Json to_json(const DrawnLine& l) {
  return {{"start", {l.start.x, l.start.y}}, {"end", {l.end.x, l.end.y}}, {"width", l.width}, {"color", l.color}};
}

inline DrawnLine line_from_json(const Json& j) {
  DrawnLine l;
  l.start = {j.at("start").at(0).get<double>(), j.at("start").at(1).get<double>()};
  l.end = {j.at("end").at(0).get<double>(), j.at("end").at(1).get<double>()};
  l.width = j.at("width").get<double>();
  l.color = j.value("color", 230.0);
  return l;
}

inline Json to_json(const RoadPatch& p, bool with_grid = true) {
  Json j = {{"s0", p.s0},     {"d_center", p.d_center}, {"width", p.width},
            {"length", p.length}, {"cell", p.cell},    {"base_gray", p.base_gray},
            {"overdraw_lanes", p.overdraw_lanes}, {"rows", p.rows}, {"cols", p.cols}, {"par", p.par()}};
  if (with_grid) {
    j["delta"] = p.delta;
    j["mask"] = p.mask;
  }
  return j;
}

inline RoadPatch patch_from_json(const Json& j) {
  auto p = RoadPatch::make(j.at("s0").get<double>(), j.at("d_center").get<double>(), j.at("width").get<double>(),
                           j.at("length").get<double>(), j.value("cell", 0.15), j.value("base_gray", 80.0));
  p.overdraw_lanes = j.value("overdraw_lanes", true);
  if (j.contains("delta")) {
    p.delta = j.at("delta").get<std::vector<double>>();
    p.mask = j.at("mask").get<std::vector<std::uint8_t>>();
    if (p.delta.size() != p.cells() || p.mask.size() != p.cells()) throw Error("patch: grid size mismatch");
  }
  return p;
}

inline Json to_json(const AttackBudget& b) {
  return {{"iterations", b.iterations}, {"learning_rate", b.learning_rate}, {"lambda_reg", b.lambda_reg},
          {"nes_samples", b.nes_samples}, {"nes_sigma", b.nes_sigma},       {"par", b.par}};
}

inline AttackBudget budget_from_json(const Json& j) {
  AttackBudget b;
  b.iterations = j.value("iterations", b.iterations);
  b.learning_rate = j.value("learning_rate", b.learning_rate);
  b.lambda_reg = j.value("lambda_reg", b.lambda_reg);
  b.nes_samples = j.value("nes_samples", b.nes_samples);
  b.nes_sigma = j.value("nes_sigma", b.nes_sigma);
  b.par = j.value("par", b.par);
  if (b.iterations < 0 || !(b.learning_rate > 0) || !(b.lambda_reg >= 0) || b.nes_samples <= 0 ||
      !(b.nes_sigma > 0) || !(b.par > 0 && b.par <= 1)) {
    throw Error("attack budget: invalid values");
  }
  return b;
}

// ---------------------------------------------------------------------------
// Patch files: <stem>.pgm (rendered gray), <stem>_mask.pgm, <stem>.json (placement and exact grid)

inline void save_patch(const RoadPatch& p, const std::string& stem) {
  std::vector<std::uint8_t> gray(p.cells());
  std::vector<std::uint8_t> mask(p.cells());
  for (std::size_t k = 0; k < p.cells(); ++k) {
    gray[k] = static_cast<std::uint8_t>(std::lround(p.gray(k)));
    mask[k] = p.mask[k] ? 255 : 0;
  }
  write_file(stem + ".pgm", encode_pgm(p.cols, p.rows, gray));
  write_file(stem + "_mask.pgm", encode_pgm(p.cols, p.rows, mask));
  write_file(stem + ".json", to_json(p).dump(2) + "\n");
}

/// Loads a saved patch. The sidecar's exact grid is used when present; otherwise the grid is
/// recovered from the two gray maps.
inline RoadPatch load_patch(const std::string& stem) {
  const Json meta = Json::parse(read_file(stem + ".json"));
  RoadPatch p = patch_from_json(meta);
  if (!meta.contains("delta")) {
    const auto gray = decode_pnm(read_file(stem + ".pgm"));
    const auto mask = decode_pnm(read_file(stem + "_mask.pgm"));
    if (gray.channels != 1 || gray.width != p.cols || gray.height != p.rows || mask.width != p.cols ||
        mask.height != p.rows) {
      throw Error("patch: gray map does not match sidecar geometry");
    }
    for (std::size_t k = 0; k < p.cells(); ++k) {
      p.delta[k] = gray.samples[k] - p.base_gray;
      p.mask[k] = mask.samples[k] > 127;
    }
  }
  return p;
}

}  // namespace lanerob
