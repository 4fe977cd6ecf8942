#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "lanerob/artifacts.hpp"
#include "lanerob/geometry.hpp"
#include "lanerob/rng.hpp"

namespace lanerob {

/// Planar pose in the world frame (x ahead at the start, y right, heading positive to the right).
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;

  friend bool operator==(const Pose&, const Pose&) = default;
};

inline Vec2 world_from_vehicle(const Pose& p, Vec2 g) {
  const double c = std::cos(p.heading);
  const double s = std::sin(p.heading);
  return {p.x + c * g.x - s * g.y, p.y + s * g.x + c * g.y};
}

inline Vec2 vehicle_from_world(const Pose& p, Vec2 w) {
  const double c = std::cos(p.heading);
  const double s = std::sin(p.heading);
  const double dx = w.x - p.x;
  const double dy = w.y - p.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

/// Motion of `target` expressed in the vehicle frame of `base`.
inline RelativePose relative_pose(const Pose& base, const Pose& target) {
  const Vec2 d = vehicle_from_world(base, {target.x, target.y});
  return {d.x, d.y, target.heading - base.heading};
}

/// Road point in road coordinates with the world-frame gradients of both coordinates.
struct RoadPoint {
  double s = 0.0;
  double d = 0.0;
  Vec2 grad_s{1.0, 0.0};
  Vec2 grad_d{0.0, 1.0};
};

/// Constant-curvature multi-lane road. The ego-lane centre line starts at the world origin
/// heading along +x; s is arc length along it and d the lateral offset (positive right).
/// Positive curvature bends to the right.
struct RoadGeometry {
  double curvature = 0.0;
  double lane_width = 3.6;
  int lanes_left = 1;
  int lanes_right = 1;
  double line_width = 0.15;
  double shoulder = 1.0;

  /// Lateral offsets of all boundary lines, left to right.
  std::vector<double> line_offsets() const {
    std::vector<double> out;
    for (int k = -lanes_left; k <= lanes_right + 1; ++k) out.push_back((k - 0.5) * lane_width);
    return out;
  }
  double left_edge() const { return -(lanes_left + 0.5) * lane_width - shoulder; }
  double right_edge() const { return (lanes_right + 0.5) * lane_width + shoulder; }

  double heading_at(double s) const { return curvature * s; }

  RoadPoint locate(Vec2 w) const {
    if (std::abs(curvature) < 1e-12) return {w.x, w.y, {1.0, 0.0}, {0.0, 1.0}};
    const double sign = curvature > 0 ? 1.0 : -1.0;
    const double r = 1.0 / std::abs(curvature);
    // work in the mirrored frame where the road bends right
    const Vec2 rel{w.x, sign * w.y - r};
    const double rho = std::max(rel.norm(), 1e-9);
    const double theta = std::atan2(rel.y, rel.x);
    RoadPoint p;
    p.s = r * (theta + kPi / 2);
    p.d = sign * (r - rho);
    const Vec2 gs{-rel.y * r / (rho * rho), rel.x * r / (rho * rho)};
    const Vec2 gd{-rel.x / rho, -rel.y / rho};
    p.grad_s = {gs.x, sign * gs.y};
    p.grad_d = {sign * gd.x, gd.y};
    return p;
  }

  Vec2 to_world(double s, double d) const {
    if (std::abs(curvature) < 1e-12) return {s, d};
    const double sign = curvature > 0 ? 1.0 : -1.0;
    const double r = 1.0 / std::abs(curvature);
    const double theta = s / r - kPi / 2;
    const double rho = r - sign * d;
    return {rho * std::cos(theta), sign * (r + rho * std::sin(theta))};
  }

  /// Pose on the road at (s, d) aligned with the road direction.
  Pose pose_at(double s, double d) const {
    const Vec2 w = to_world(s, d);
    return {w.x, w.y, heading_at(s)};
  }
};

struct RoadAppearance {
  double asphalt = 92.0;
  double texture_amplitude = 3.0;
  double texture_cell = 0.1;
  double line_gray = 220.0;
  std::array<double, 3> grass{78.0, 96.0, 64.0};
  std::array<double, 3> sky{150.0, 180.0, 215.0};
  double max_range = 400.0;
  std::uint64_t texture_seed = 7;
};

/// Everything drawn on the ground: road, lane lines and the optional attack artifacts.
struct Scene {
  RoadGeometry road;
  RoadAppearance look;
  std::optional<RoadPatch> patch;
  std::optional<DrawnLine> line;

  Scene benign() const { return {road, look, std::nullopt, std::nullopt}; }
};

/// Geometry of one camera pixel on the ground: road coordinates of the pixel centre and the
/// derivatives of (s, d) with respect to image u and v.
struct PixelGeom {
  enum Kind : std::uint8_t { sky, far, ground };
  Kind kind = sky;
  double s = 0.0;
  double d = 0.0;
  Vec2 ju;  // d(s, d)/du
  Vec2 jv;  // d(s, d)/dv

  double footprint_s() const { return std::abs(ju.x) + std::abs(jv.x); }
  double footprint_d() const { return std::abs(ju.y) + std::abs(jv.y); }
  /// Width of the pixel's box footprint along unit direction n of the (s, d) plane.
  double footprint_along(Vec2 n) const { return std::abs(n.dot(ju)) + std::abs(n.dot(jv)); }
};

struct FrameGeometry {
  int width = 0;
  int height = 0;
  Pose pose;
  std::vector<PixelGeom> px;
};

namespace detail {

/// Fraction of the box [c - fp/2, c + fp/2] covered by [a, b].
inline double interval_coverage(double c, double fp, double a, double b) {
  if (fp < 1e-9) return (c >= a && c <= b) ? 1.0 : 0.0;
  const double lo = std::max(c - fp / 2, a);
  const double hi = std::min(c + fp / 2, b);
  return hi > lo ? std::min(1.0, (hi - lo) / fp) : 0.0;
}

inline double texture_noise(const RoadAppearance& look, double s, double d) {
  if (look.texture_amplitude <= 0.0) return 0.0;
  const auto is = static_cast<std::int64_t>(std::floor(s / look.texture_cell));
  const auto id = static_cast<std::int64_t>(std::floor(d / look.texture_cell));
  const std::uint64_t h = derive_seed(look.texture_seed, {static_cast<std::uint64_t>(is), static_cast<std::uint64_t>(id)});
  const double u = static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
  return (2.0 * u - 1.0) * look.texture_amplitude;
}

/// Coverage of a drawn line over a pixel.
inline double drawn_line_coverage(const DrawnLine& l, const PixelGeom& g) {
  const Vec2 ab = l.end - l.start;
  const double len2 = ab.dot(ab);
  if (len2 < 1e-12) return 0.0;
  const Vec2 ap = Vec2{g.s, g.d} - l.start;
  const double t = ap.dot(ab) / len2;
  if (t < 0.0 || t > 1.0) return 0.0;
  const double len = std::sqrt(len2);
  const Vec2 n{-ab.y / len, ab.x / len};
  return interval_coverage(ap.dot(n), g.footprint_along(n), -l.width / 2, l.width / 2);
}

inline void blend(std::array<double, 3>& col, double cov, double v) {
  if (cov <= 0.0) return;
  for (auto& c : col) c = (1.0 - cov) * c + cov * v;
}

}  // namespace detail

/// Attack-independent part of a ground pixel: road or grass colour with texture, and the
/// coverage of every lane line that touches the pixel footprint.
struct GroundShade {
  std::array<double, 3> base{};
  std::array<double, 8> lane_cov{};
  int lanes = 0;
};

inline GroundShade ground_shade(const PixelGeom& g, const RoadGeometry& road, const RoadAppearance& look) {
  GroundShade out;
  const double fd = g.footprint_d();
  const double road_cov = detail::interval_coverage(g.d, fd, road.left_edge(), road.right_edge());
  const double a = look.asphalt + detail::texture_noise(look, g.s, g.d);
  for (int c = 0; c < 3; ++c) out.base[c] = road_cov * a + (1.0 - road_cov) * look.grass[c];
  const double hw = road.line_width / 2;
  for (int k = -road.lanes_left; k <= road.lanes_right + 1; ++k) {
    const double off = (k - 0.5) * road.lane_width;
    const double cov = detail::interval_coverage(g.d, fd, off - hw, off + hw);
    if (cov <= 0.0) continue;
    if (out.lanes == static_cast<int>(out.lane_cov.size())) throw Error("render: too many lane lines in one pixel");
    out.lane_cov[static_cast<std::size_t>(out.lanes++)] = cov;
  }
  return out;
}

/// Ground pixel colour from its attack-independent part: patch cells are point-sampled at the
/// pixel centre, lanes crossing the patch are painted over it when the patch asks for it, and
/// the drawn line goes on top.
inline std::array<double, 3> finish_ground(const GroundShade& gs, const PixelGeom& g, const Scene& sc) {
  std::array<double, 3> col = gs.base;
  bool lanes_visible = true;
  if (sc.patch) {
    const int k = sc.patch->cell_index(g.s, g.d);
    if (k >= 0) {
      const double v = sc.patch->gray(static_cast<std::size_t>(k));
      col = {v, v, v};
      lanes_visible = sc.patch->overdraw_lanes;
    }
  }
  if (lanes_visible) {
    for (int i = 0; i < gs.lanes; ++i) detail::blend(col, gs.lane_cov[static_cast<std::size_t>(i)], sc.look.line_gray);
  }
  if (sc.line) detail::blend(col, detail::drawn_line_coverage(*sc.line, g), sc.line->color);
  return col;
}

/// Colour of one pixel. Lane lines are box-filtered over the pixel footprint.
inline std::array<double, 3> shade_pixel(const PixelGeom& g, const Scene& sc) {
  const auto& look = sc.look;
  if (g.kind == PixelGeom::sky) return look.sky;
  if (g.kind == PixelGeom::far) return {look.asphalt, look.asphalt, look.asphalt};
  return finish_ground(ground_shade(g, sc.road, look), g, sc);
}

/// d(pixel gray)/d(patch cell gray) at a patch pixel: the transmission left after lane overdraw
/// and a drawn line. Returns -1 as cell when the pixel is not on the patch.
inline std::pair<int, double> patch_sensitivity(const PixelGeom& g, const Scene& sc) {
  if (!sc.patch || g.kind != PixelGeom::ground) return {-1, 0.0};
  const int k = sc.patch->cell_index(g.s, g.d);
  if (k < 0) return {-1, 0.0};
  const double v = sc.patch->base_gray + sc.patch->delta[static_cast<std::size_t>(k)];
  if (v < 0.0 || v > 255.0) return {k, 0.0};
  double t = 1.0;
  if (sc.patch->overdraw_lanes) {
    const double hw = sc.road.line_width / 2;
    const double fd = g.footprint_d();
    for (double off : sc.road.line_offsets()) t *= 1.0 - detail::interval_coverage(g.d, fd, off - hw, off + hw);
  }
  if (sc.line) t *= 1.0 - detail::drawn_line_coverage(*sc.line, g);
  return {k, t};
}

/// Ground geometry of camera pixel (u, v) for a camera at `pose`.
inline PixelGeom pixel_geometry(const CameraModel& cam, const RoadGeometry& road, const RoadAppearance& look,
                                const Pose& pose, int u, int v) {
  PixelGeom px;
  const Vec2 q{static_cast<double>(u), static_cast<double>(v)};
  const auto g = cam.try_back_project(q);
  if (!g) return px;
  if (g->x > look.max_range) {
    px.kind = PixelGeom::far;
    return px;
  }
  const double c = std::cos(pose.heading);
  const double s = std::sin(pose.heading);
  auto rotate = [&](Vec2 w) { return Vec2{c * w.x - s * w.y, s * w.x + c * w.y}; };
  const auto [jgu, jgv] = cam.back_project_jacobian(q);
  const RoadPoint rp = road.locate(world_from_vehicle(pose, *g));
  const Vec2 wu = rotate(jgu);
  const Vec2 wv = rotate(jgv);
  px.kind = PixelGeom::ground;
  px.s = rp.s;
  px.d = rp.d;
  px.ju = {rp.grad_s.dot(wu), rp.grad_d.dot(wu)};
  px.jv = {rp.grad_s.dot(wv), rp.grad_d.dot(wv)};
  return px;
}

inline FrameGeometry compute_geometry(const CameraModel& cam, const RoadGeometry& road, const RoadAppearance& look,
                                      const Pose& pose) {
  FrameGeometry fg;
  fg.width = cam.image_width();
  fg.height = cam.image_height();
  fg.pose = pose;
  fg.px.resize(static_cast<std::size_t>(fg.width) * fg.height);
  for (int v = 0; v < fg.height; ++v) {
    for (int u = 0; u < fg.width; ++u) fg.px[static_cast<std::size_t>(v) * fg.width + u] = pixel_geometry(cam, road, look, pose, u, v);
  }
  return fg;
}

inline ImageFrame shade_frame(const FrameGeometry& fg, const Scene& sc) {
  ImageFrame out(fg.width, fg.height);
  for (std::size_t i = 0; i < fg.px.size(); ++i) {
    const auto col = shade_pixel(fg.px[i], sc);
    for (int ch = 0; ch < 3; ++ch) out.pixels[3 * i + ch] = to_u8(col[ch]);
  }
  return out;
}

/// Rasterizes the scene as seen by `cam` mounted at `pose`. With `region`, only pixels inside
/// it are rendered and the rest are left black.
inline ImageFrame render_scene(const Scene& sc, const CameraModel& cam, const Pose& pose,
                               const CropRect* region = nullptr) {
  const CropRect full{0, 0, cam.image_width(), cam.image_height()};
  const CropRect& r = region ? *region : full;
  ImageFrame out(cam.image_width(), cam.image_height());
  for (int v = r.y0; v < r.y0 + r.height; ++v) {
    for (int u = r.x0; u < r.x0 + r.width; ++u) {
      const auto col = shade_pixel(pixel_geometry(cam, sc.road, sc.look, pose, u, v), sc);
      auto* p = out.at(u, v);
      for (int ch = 0; ch < 3; ++ch) p[ch] = to_u8(col[ch]);
    }
  }
  return out;
}

/// Per-pose render cache for repeated evaluation of attacks confined to one road area.
///
/// Holds the benign camera frame and detector input; attacked renders only re-shade the camera
/// pixels whose footprint can touch the area and recompute the detector pixels reading them, so
/// results are identical to a full render followed by adapt_crop. Not thread-safe (scratch
/// buffers are reused).
class FrameCache {
 public:
  FrameCache(const Scene& benign, const CameraModel& cam, const Pose& pose, const RoadArea& area)
      : cam_(cam), geom_(compute_geometry(cam, benign.road, benign.look, pose)) {
    camera_ = shade_frame(geom_, benign);
    input_ = adapt_crop(cam_, camera_);
    std::vector<std::uint8_t> touched(geom_.px.size(), 0);
    for (std::size_t i = 0; i < geom_.px.size(); ++i) {
      const auto& g = geom_.px[i];
      if (g.kind != PixelGeom::ground) continue;
      const double margin = 0.1 + g.footprint_s() + g.footprint_d();
      if (g.s >= area.s_lo - margin && g.s <= area.s_hi + margin && g.d >= area.d_lo - margin &&
          g.d <= area.d_hi + margin) {
        cam_pixels_.push_back(static_cast<int>(i));
        shades_.push_back(ground_shade(g, benign.road, benign.look));
        touched[i] = 1;
      }
    }
    for (int y = 0; y < input_.height; ++y) {
      for (int x = 0; x < input_.width; ++x) {
        const auto taps = adapt_crop_taps(cam_, x, y);
        for (int t = 0; t < 4; ++t) {
          if (touched[static_cast<std::size_t>(taps.y[t]) * geom_.width + taps.x[t]]) {
            det_pixels_.push_back(y * input_.width + x);
            break;
          }
        }
      }
    }
    scratch_camera_ = camera_;
    scratch_input_ = input_;
  }

  const CameraModel& camera() const { return cam_; }
  const FrameGeometry& geometry() const { return geom_; }
  const Pose& pose() const { return geom_.pose; }
  const ImageFrame& benign_camera() const { return camera_; }
  const ImageFrame& benign_input() const { return input_; }
  const std::vector<int>& camera_region() const { return cam_pixels_; }
  const std::vector<int>& input_region() const { return det_pixels_; }

  /// Detector input for `attacked` (same road as the benign scene, attack inside the area).
  /// The reference stays valid until the next call.
  const ImageFrame& render_input(const Scene& attacked) const {
    reshade(attacked);
    adapt_crop_pixels(cam_, scratch_camera_, det_pixels_, scratch_input_);
    return scratch_input_;
  }

  ImageFrame render_camera(const Scene& attacked) const {
    reshade(attacked);
    return scratch_camera_;
  }

 private:
  void reshade(const Scene& sc) const {
    for (std::size_t j = 0; j < cam_pixels_.size(); ++j) {
      const int i = cam_pixels_[j];
      const auto col = finish_ground(shades_[j], geom_.px[static_cast<std::size_t>(i)], sc);
      auto* p = scratch_camera_.pixels.data() + 3 * static_cast<std::size_t>(i);
      for (int ch = 0; ch < 3; ++ch) p[ch] = to_u8(col[ch]);
    }
  }

  CameraModel cam_;
  FrameGeometry geom_;
  ImageFrame camera_;
  ImageFrame input_;
  std::vector<int> cam_pixels_;
  std::vector<GroundShade> shades_;
  std::vector<int> det_pixels_;
  mutable ImageFrame scratch_camera_;
  mutable ImageFrame scratch_input_;
};

}  // namespace lanerob
