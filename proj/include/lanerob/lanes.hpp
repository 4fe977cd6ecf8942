#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lanerob/common.hpp"

namespace lanerob {

enum class LaneFamily { points, probmap, poly, anchors };

inline const char* to_string(LaneFamily f) {
  switch (f) {
    case LaneFamily::points: return "points";
    case LaneFamily::probmap: return "probmap";
    case LaneFamily::poly: return "poly";
    case LaneFamily::anchors: return "anchors";
  }
  return "?";
}

inline LaneFamily parse_family(const std::string& s) {
  if (s == "points") return LaneFamily::points;
  if (s == "probmap") return LaneFamily::probmap;
  if (s == "poly") return LaneFamily::poly;
  if (s == "anchors") return LaneFamily::anchors;
  throw Error("unknown lane family: " + s);
}

/// Coordinates of polynomial and anchor outputs: image pixels, or both axes scaled to [0, 1]
/// by (size - 1).
enum class CoordUnits { pixels, normalized };

enum class ProbMapKind { segmentation, row_wise };

/// Per-line polylines in image pixels, y strictly increasing.
struct PointLanes {
  std::vector<std::vector<Vec2>> lines;
};

/// L maps of rows x cols lane-existence probabilities, row-major.
struct ProbMapLanes {
  int rows = 0;
  int cols = 0;
  ProbMapKind kind = ProbMapKind::segmentation;
  std::vector<std::vector<double>> maps;

  double at(std::size_t l, int r, int c) const { return maps[l][static_cast<std::size_t>(r) * cols + c]; }
};

/// Per-line polynomial x = p(y), coefficients highest degree first.
struct PolyLanes {
  std::vector<std::vector<double>> coeffs;
  CoordUnits units = CoordUnits::pixels;
};

struct Anchor {
  double prob = 0.0;
  std::vector<double> ys;
  std::vector<double> xs;
  std::vector<double> offsets;
};

struct AnchorLanes {
  std::vector<Anchor> anchors;
  CoordUnits units = CoordUnits::pixels;
};

/// Output of a detector: one representation family, tagged with the input image size it refers to.
struct LaneRepresentation {
  int image_width = 0;
  int image_height = 0;
  std::variant<PointLanes, ProbMapLanes, PolyLanes, AnchorLanes> data;

  LaneFamily family() const { return static_cast<LaneFamily>(data.index()); }
};

inline double eval_poly(const std::vector<double>& coeffs, double t) {
  double acc = 0.0;
  for (double c : coeffs) acc = acc * t + c;
  return acc;
}

/// Checks the representation invariants; throws Error describing the first violation.
inline void validate(const LaneRepresentation& rep) {
  if (rep.image_width <= 1 || rep.image_height <= 1) throw Error("representation: image size too small");
  auto check_prob = [](double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error("representation: probability outside [0,1]");
  };
  auto check_increasing = [](const std::vector<double>& ys) {
    for (std::size_t i = 1; i < ys.size(); ++i) {
      if (!(ys[i] > ys[i - 1])) throw Error("representation: y samples not strictly increasing");
    }
  };
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, PointLanes>) {
          for (const auto& line : d.lines) {
            for (std::size_t i = 1; i < line.size(); ++i) {
              if (!(line[i].y > line[i - 1].y)) throw Error("representation: y samples not strictly increasing");
            }
          }
        } else if constexpr (std::is_same_v<T, ProbMapLanes>) {
          if (d.rows <= 0 || d.cols <= 1) throw Error("representation: probability map dimensions");
          for (const auto& m : d.maps) {
            if (m.size() != static_cast<std::size_t>(d.rows) * d.cols) throw Error("representation: map size");
            for (double p : m) check_prob(p);
            if (d.kind == ProbMapKind::row_wise) {
              for (int r = 0; r < d.rows; ++r) {
                double sum = 0.0;
                for (int c = 0; c < d.cols; ++c) sum += m[static_cast<std::size_t>(r) * d.cols + c];
                if (sum > 1.0 + 1e-6) throw Error("representation: row-wise mass exceeds 1");
              }
            }
          }
        } else if constexpr (std::is_same_v<T, PolyLanes>) {
          for (const auto& c : d.coeffs) {
            if (c.empty()) throw Error("representation: empty polynomial");
          }
        } else {
          for (const auto& a : d.anchors) {
            check_prob(a.prob);
            if (a.xs.size() != a.ys.size() || a.offsets.size() != a.ys.size()) {
              throw Error("representation: anchor arrays differ in length");
            }
            check_increasing(a.ys);
          }
        }
      },
      rep.data);
}

// ---------------------------------------------------------------------------
// Canonical sampled form

enum class LineRole { ego_left, ego_right, left_left, right_right, other };

inline const char* to_string(LineRole r) {
  switch (r) {
    case LineRole::ego_left: return "ego-left";
    case LineRole::ego_right: return "ego-right";
    case LineRole::left_left: return "left-left";
    case LineRole::right_right: return "right-right";
    case LineRole::other: return "other";
  }
  return "?";
}

/// x per sampled row; nullopt marks a row where the line is absent.
using SampledLine = std::vector<std::optional<double>>;

struct LabeledLine {
  LineRole role = LineRole::other;
  SampledLine x;
};

/// Lines sampled on a shared y set (image rows, pixels).
struct LabeledLanes {
  std::vector<double> ys;
  std::vector<LabeledLine> lines;

  const LabeledLine* find(LineRole role) const {
    for (const auto& l : lines) {
      if (l.role == role) return &l;
    }
    return nullptr;
  }
};

namespace detail {

/// Linear resampling of a y-increasing polyline; rows outside its span are absent.
inline SampledLine resample_polyline(const std::vector<Vec2>& pts, const std::vector<double>& ys, double width) {
  SampledLine out(ys.size());
  if (pts.empty()) return out;
  std::size_t k = 0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double y = ys[i];
    if (y < pts.front().y || y > pts.back().y) continue;
    double x = 0.0;
    if (pts.size() == 1) {
      x = pts.front().x;
    } else {
      while (k + 2 < pts.size() && pts[k + 1].y < y) ++k;
      while (k > 0 && pts[k].y > y) --k;
      const Vec2 a = pts[k];
      const Vec2 b = pts[k + 1];
      const double t = (y - a.y) / (b.y - a.y);
      x = a.x + t * (b.x - a.x);
    }
    if (x >= 0.0 && x <= width - 1.0) out[i] = x;
  }
  return out;
}

}  // namespace detail

/// Converts any representation into lines sampled at rows `ys` (pixels).
///
/// Probability maps take the per-row argmax when it reaches `threshold`; polynomials are
/// evaluated at every row; anchors below `threshold` are dropped and the rest resampled like
/// point lists. Samples falling outside the image width are marked absent.
inline LabeledLanes canonicalize(const LaneRepresentation& rep, const std::vector<double>& ys, double threshold) {
  if (ys.empty()) throw Error("canonicalize: empty y-sample set");
  const double w = rep.image_width;
  const double h = rep.image_height;
  for (double y : ys) {
    if (y < 0.0 || y > h - 1.0) throw Error("canonicalize: y sample outside image height");
  }
  LabeledLanes out;
  out.ys = ys;
  auto push = [&](SampledLine line) { out.lines.push_back({LineRole::other, std::move(line)}); };
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, PointLanes>) {
          for (const auto& line : d.lines) push(detail::resample_polyline(line, ys, w));
        } else if constexpr (std::is_same_v<T, ProbMapLanes>) {
          for (std::size_t l = 0; l < d.maps.size(); ++l) {
            SampledLine line(ys.size());
            for (std::size_t i = 0; i < ys.size(); ++i) {
              const int r = static_cast<int>(std::lround(ys[i] * (d.rows - 1) / (h - 1)));
              int best = 0;
              for (int c = 1; c < d.cols; ++c) {
                if (d.at(l, r, c) > d.at(l, r, best)) best = c;
              }
              if (d.at(l, r, best) >= threshold && d.at(l, r, best) > 0.0) {
                line[i] = best * (w - 1) / (d.cols - 1);
              }
            }
            push(std::move(line));
          }
        } else if constexpr (std::is_same_v<T, PolyLanes>) {
          const bool norm = d.units == CoordUnits::normalized;
          for (const auto& c : d.coeffs) {
            SampledLine line(ys.size());
            for (std::size_t i = 0; i < ys.size(); ++i) {
              const double t = norm ? ys[i] / (h - 1) : ys[i];
              const double x = norm ? eval_poly(c, t) * (w - 1) : eval_poly(c, t);
              if (x >= 0.0 && x <= w - 1) line[i] = x;
            }
            push(std::move(line));
          }
        } else {
          const bool norm = d.units == CoordUnits::normalized;
          for (const auto& a : d.anchors) {
            if (a.prob < threshold) continue;
            std::vector<Vec2> pts;
            pts.reserve(a.ys.size());
            for (std::size_t j = 0; j < a.ys.size(); ++j) {
              const double x = a.xs[j] + a.offsets[j];
              pts.push_back(norm ? Vec2{x * (w - 1), a.ys[j] * (h - 1)} : Vec2{x, a.ys[j]});
            }
            push(detail::resample_polyline(pts, ys, w));
          }
        }
      },
      rep.data);
  return out;
}

/// Present samples of a sampled line as a point list (inverse of canonicalize on the points family).
inline std::vector<Vec2> to_points(const SampledLine& line, const std::vector<double>& ys) {
  std::vector<Vec2> pts;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i]) pts.push_back({*line[i], ys[i]});
  }
  return pts;
}

/// x where the line meets the last sample row, extrapolated linearly from its two lowest
/// present samples (or the single sample when only one exists).
inline std::optional<double> bottom_x(const SampledLine& line, const std::vector<double>& ys) {
  std::optional<std::size_t> a, b;
  for (std::size_t i = line.size(); i-- > 0;) {
    if (!line[i]) continue;
    if (!a) {
      a = i;
    } else {
      b = i;
      break;
    }
  }
  if (!a) return std::nullopt;
  if (!b || ys.size() != line.size()) return line[*a];
  const double slope = (*line[*a] - *line[*b]) / (ys[*a] - ys[*b]);
  return *line[*a] + slope * (ys.back() - ys[*a]);
}

/// Keeps only the ego pair: the line whose bottom_x is the greatest x left of
/// `image_center_x` (ego-left) and the smallest x at or right of it (ego-right).
inline LabeledLanes filter_ego(const LabeledLanes& lanes, double image_center_x) {
  const LabeledLine* left = nullptr;
  const LabeledLine* right = nullptr;
  double left_x = 0.0;
  double right_x = 0.0;
  for (const auto& l : lanes.lines) {
    const auto bx = bottom_x(l.x, lanes.ys);
    if (!bx) continue;
    if (*bx < image_center_x) {
      if (!left || *bx > left_x) {
        left = &l;
        left_x = *bx;
      }
    } else if (!right || *bx < right_x) {
      right = &l;
      right_x = *bx;
    }
  }
  LabeledLanes out;
  out.ys = lanes.ys;
  if (left) out.lines.push_back({LineRole::ego_left, left->x});
  if (right) out.lines.push_back({LineRole::ego_right, right->x});
  return out;
}

}  // namespace lanerob
