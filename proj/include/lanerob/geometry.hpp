#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "lanerob/common.hpp"
#include "lanerob/image.hpp"

namespace lanerob {

/// Pixel rectangle applied to camera frames before detection.
struct CropRect {
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;
};

/// Camera displacement expressed in the base vehicle frame: forward, rightward, heading change.
struct RelativePose {
  double dx = 0.0;
  double dy = 0.0;
  double dpsi = 0.0;
};

/// Parameters of a level pinhole camera mounted above a flat road.
struct PinholeParams {
  int image_width = 480;
  int image_height = 270;
  double focal_px = 300.0;
  double cx = 240.0;
  double cy = 108.0;
  double mount_height_m = 1.4;
  double pitch_rad = 0.0;
  CropRect crop{80, 45, 320, 180};
  int detector_width = 256;
  int detector_height = 144;
};

/// Ground-plane camera: a homography from vehicle-frame ground meters to image pixels,
/// plus the crop/resize that adapts camera frames to a detector's input geometry.
///
/// Immutable after construction; the inverse homography is computed once.
class CameraModel {
 public:
  CameraModel(int image_width, int image_height, const Eigen::Matrix3d& ground_to_image, CropRect crop,
              int detector_width, int detector_height)
      : width_(image_width),
        height_(image_height),
        h_(ground_to_image),
        crop_(crop),
        det_w_(detector_width),
        det_h_(detector_height) {
    if (width_ <= 0 || height_ <= 0) throw Error("camera: image dimensions must be positive");
    if (std::abs(h_.determinant()) <= 1e-12) throw Error("camera: ground_to_image is singular");
    if (crop_.width <= 0 || crop_.height <= 0 || crop_.x0 < 0 || crop_.y0 < 0 ||
        crop_.x0 + crop_.width > width_ || crop_.y0 + crop_.height > height_) {
      throw Error("camera: crop_rect outside image bounds");
    }
    if (det_w_ <= 0 || det_h_ <= 0) throw Error("camera: detector input size must be positive");
    h_inv_ = h_.inverse();
  }

  static CameraModel pinhole(const PinholeParams& p) {
    const double c = std::cos(p.pitch_rad);
    const double s = std::sin(p.pitch_rad);
    const double f = p.focal_px;
    const double h = p.mount_height_m;
    Eigen::Matrix3d m;
    m << p.cx * c, f, p.cx * h * s,
        p.cy * c - f * s, 0.0, f * h * c + p.cy * h * s,
        c, 0.0, h * s;
    return CameraModel(p.image_width, p.image_height, m, p.crop, p.detector_width, p.detector_height);
  }

  int image_width() const { return width_; }
  int image_height() const { return height_; }
  int detector_width() const { return det_w_; }
  int detector_height() const { return det_h_; }
  const CropRect& crop_rect() const { return crop_; }
  const Eigen::Matrix3d& ground_to_image() const { return h_; }
  const Eigen::Matrix3d& image_to_ground() const { return h_inv_; }

  /// Ground (m) to image (px). Throws when the point lies on the horizon.
  Vec2 project(Vec2 g) const {
    const double w = h_(2, 0) * g.x + h_(2, 1) * g.y + h_(2, 2);
    if (std::abs(w) < 1e-12) throw Error("point at horizon");
    return {(h_(0, 0) * g.x + h_(0, 1) * g.y + h_(0, 2)) / w, (h_(1, 0) * g.x + h_(1, 1) * g.y + h_(1, 2)) / w};
  }

  /// Image (px) to ground (m); nullopt when the pixel sees the horizon or the sky.
  std::optional<Vec2> try_back_project(Vec2 q) const {
    const double n2 = h_inv_(2, 0) * q.x + h_inv_(2, 1) * q.y + h_inv_(2, 2);
    if (std::abs(n2) < 1e-15) return std::nullopt;
    const Vec2 g{(h_inv_(0, 0) * q.x + h_inv_(0, 1) * q.y + h_inv_(0, 2)) / n2,
                 (h_inv_(1, 0) * q.x + h_inv_(1, 1) * q.y + h_inv_(1, 2)) / n2};
    // depth-like denominator of the forward map: must be positive for points in front of the camera
    if (h_(2, 0) * g.x + h_(2, 1) * g.y + h_(2, 2) <= 1e-9) return std::nullopt;
    return g;
  }

  Vec2 back_project(Vec2 q) const {
    auto g = try_back_project(q);
    if (!g) throw Error("image point at or above the horizon");
    return *g;
  }

  /// Ground-space derivatives of back-projection at pixel q: d(ground)/du and d(ground)/dv.
  std::pair<Vec2, Vec2> back_project_jacobian(Vec2 q) const {
    const Eigen::Vector3d n = h_inv_ * Eigen::Vector3d(q.x, q.y, 1.0);
    const double n2 = n(2);
    auto col = [&](int k) {
      return Vec2{(h_inv_(0, k) * n2 - n(0) * h_inv_(2, k)) / (n2 * n2),
                  (h_inv_(1, k) * n2 - n(1) * h_inv_(2, k)) / (n2 * n2)};
    };
    return {col(0), col(1)};
  }

  /// Camera pixel coordinates to detector-input coordinates (pixel-centre convention).
  Vec2 camera_to_detector(Vec2 q) const {
    const double sx = static_cast<double>(det_w_) / crop_.width;
    const double sy = static_cast<double>(det_h_) / crop_.height;
    return {(q.x - crop_.x0 + 0.5) * sx - 0.5, (q.y - crop_.y0 + 0.5) * sy - 0.5};
  }

  Vec2 detector_to_camera(Vec2 d) const {
    const double sx = static_cast<double>(crop_.width) / det_w_;
    const double sy = static_cast<double>(crop_.height) / det_h_;
    return {crop_.x0 + (d.x + 0.5) * sx - 0.5, crop_.y0 + (d.y + 0.5) * sy - 0.5};
  }

 private:
  int width_;
  int height_;
  Eigen::Matrix3d h_;
  Eigen::Matrix3d h_inv_;
  CropRect crop_;
  int det_w_;
  int det_h_;
};

inline Vec2 project_ground_to_image(const CameraModel& cam, Vec2 p) { return cam.project(p); }
inline Vec2 project_image_to_ground(const CameraModel& cam, Vec2 q) { return cam.back_project(q); }

/// Rigid transform of a point from a displaced camera frame into the base frame.
inline Vec2 apply_pose(const RelativePose& m, Vec2 p) {
  const double c = std::cos(m.dpsi);
  const double s = std::sin(m.dpsi);
  return {m.dx + c * p.x - s * p.y, m.dy + s * p.x + c * p.y};
}

// ---------------------------------------------------------------------------
// Resampling

/// Bilinear sample of channel ch with coordinates clamped to the image.
inline double sample_bilinear(const ImageFrame& f, double x, double y, int ch) {
  x = std::clamp(x, 0.0, static_cast<double>(f.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(f.height - 1));
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, f.width - 1);
  const int y1 = std::min(y0 + 1, f.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1.0 - fx) * f.at(x0, y0)[ch] + fx * f.at(x1, y0)[ch];
  const double bottom = (1.0 - fx) * f.at(x0, y1)[ch] + fx * f.at(x1, y1)[ch];
  return (1.0 - fy) * top + fy * bottom;
}

inline std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::lround(clamp_gray(v))); }

inline ImageFrame crop(const ImageFrame& f, const CropRect& r) {
  if (r.x0 < 0 || r.y0 < 0 || r.width <= 0 || r.height <= 0 || r.x0 + r.width > f.width ||
      r.y0 + r.height > f.height) {
    throw Error("crop rectangle outside frame");
  }
  ImageFrame out(r.width, r.height);
  for (int y = 0; y < r.height; ++y) {
    const auto* src = f.at(r.x0, r.y0 + y);
    std::copy(src, src + 3 * r.width, out.at(0, y));
  }
  return out;
}

/// Bilinear resize using pixel-centre alignment; no anti-aliasing.
inline ImageFrame resize_bilinear(const ImageFrame& f, int width, int height) {
  if (width == f.width && height == f.height) return f;
  ImageFrame out(width, height);
  const double sx = static_cast<double>(f.width) / width;
  const double sy = static_cast<double>(f.height) / height;
  for (int y = 0; y < height; ++y) {
    const double src_y = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < width; ++x) {
      const double src_x = (x + 0.5) * sx - 0.5;
      auto* p = out.at(x, y);
      for (int ch = 0; ch < 3; ++ch) p[ch] = to_u8(sample_bilinear(f, src_x, src_y, ch));
    }
  }
  return out;
}

namespace detail {

/// Detector-input sample (x, y, ch) under crop + bilinear resize, read straight from the camera frame.
inline std::uint8_t adapt_sample(const ImageFrame& f, const CropRect& r, double sx, double sy, int x, int y, int ch) {
  const double fx_src = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(r.width - 1));
  const double fy_src = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(r.height - 1));
  const int x0 = static_cast<int>(fx_src);
  const int y0 = static_cast<int>(fy_src);
  const int x1 = std::min(x0 + 1, r.width - 1);
  const int y1 = std::min(y0 + 1, r.height - 1);
  const double fx = fx_src - x0;
  const double fy = fy_src - y0;
  const double top = (1.0 - fx) * f.at(r.x0 + x0, r.y0 + y0)[ch] + fx * f.at(r.x0 + x1, r.y0 + y0)[ch];
  const double bottom = (1.0 - fx) * f.at(r.x0 + x0, r.y0 + y1)[ch] + fx * f.at(r.x0 + x1, r.y0 + y1)[ch];
  return to_u8((1.0 - fy) * top + fy * bottom);
}

}  // namespace detail

/// Crops a camera frame to the camera's crop_rect and resizes it to the detector input size.
inline ImageFrame adapt_crop(const CameraModel& cam, const ImageFrame& frame) {
  if (frame.width != cam.image_width() || frame.height != cam.image_height()) {
    throw Error("adapt_crop: frame dimensions do not match camera");
  }
  const auto& r = cam.crop_rect();
  const double sx = static_cast<double>(r.width) / cam.detector_width();
  const double sy = static_cast<double>(r.height) / cam.detector_height();
  ImageFrame out(cam.detector_width(), cam.detector_height());
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      auto* p = out.at(x, y);
      for (int ch = 0; ch < 3; ++ch) p[ch] = detail::adapt_sample(frame, r, sx, sy, x, y, ch);
    }
  }
  return out;
}

/// Recomputes only the listed detector pixels (row-major indices) of `input` from `frame`.
inline void adapt_crop_pixels(const CameraModel& cam, const ImageFrame& frame, const std::vector<int>& pixels,
                              ImageFrame& input) {
  const auto& r = cam.crop_rect();
  const double sx = static_cast<double>(r.width) / cam.detector_width();
  const double sy = static_cast<double>(r.height) / cam.detector_height();
  for (int idx : pixels) {
    const int x = idx % input.width;
    const int y = idx / input.width;
    auto* p = input.at(x, y);
    for (int ch = 0; ch < 3; ++ch) p[ch] = detail::adapt_sample(frame, r, sx, sy, x, y, ch);
  }
}

/// Weights of one bilinear tap set used by adapt_crop: output pixel value = sum of w * camera pixel.
struct BilinearTaps {
  std::array<int, 4> x{};
  std::array<int, 4> y{};
  std::array<double, 4> w{};
};

/// Camera pixels (and weights) feeding detector pixel (dx, dy) under adapt_crop.
inline BilinearTaps adapt_crop_taps(const CameraModel& cam, int dx, int dy) {
  const auto& r = cam.crop_rect();
  const double sx = static_cast<double>(r.width) / cam.detector_width();
  const double sy = static_cast<double>(r.height) / cam.detector_height();
  double x = std::clamp((dx + 0.5) * sx - 0.5, 0.0, static_cast<double>(r.width - 1));
  double y = std::clamp((dy + 0.5) * sy - 0.5, 0.0, static_cast<double>(r.height - 1));
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, r.width - 1);
  const int y1 = std::min(y0 + 1, r.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  BilinearTaps t;
  t.x = {r.x0 + x0, r.x0 + x1, r.x0 + x0, r.x0 + x1};
  t.y = {r.y0 + y0, r.y0 + y0, r.y0 + y1, r.y0 + y1};
  t.w = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  return t;
}

/// Re-renders base as seen from a camera displaced by `motion` over the ground plane.
///
/// Ground pixels are warped through the induced homography with bilinear sampling; sources
/// outside the frame are clamped to the nearest valid column/row. Pixels that do not see the
/// ground (sky) are copied from base unchanged.
inline ImageFrame synthesize_frame(const CameraModel& cam, const ImageFrame& base, const RelativePose& motion) {
  if (std::abs(motion.dpsi) >= kPi / 4) throw Error("synthesize_frame: heading change must be below pi/4");
  if (base.width != cam.image_width() || base.height != cam.image_height()) {
    throw Error("synthesize_frame: frame dimensions do not match camera");
  }
  ImageFrame out = base;
  for (int v = 0; v < base.height; ++v) {
    for (int u = 0; u < base.width; ++u) {
      const auto g_new = cam.try_back_project({static_cast<double>(u), static_cast<double>(v)});
      if (!g_new) continue;
      const Vec2 g_base = apply_pose(motion, *g_new);
      const auto& m = cam.ground_to_image();
      const double w = m(2, 0) * g_base.x + m(2, 1) * g_base.y + m(2, 2);
      if (w <= 1e-9) continue;
      const double su = (m(0, 0) * g_base.x + m(0, 1) * g_base.y + m(0, 2)) / w;
      const double sv = (m(1, 0) * g_base.x + m(1, 1) * g_base.y + m(1, 2)) / w;
      auto* p = out.at(u, v);
      for (int ch = 0; ch < 3; ++ch) p[ch] = to_u8(sample_bilinear(base, su, sv, ch));
    }
  }
  return out;
}

}  // namespace lanerob
