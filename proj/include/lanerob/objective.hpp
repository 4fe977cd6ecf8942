#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <vector>

#include "lanerob/lanes.hpp"

namespace lanerob {

/// Default y-sample set: every second row from 0.42 H to the bottom row of the detector input.
inline std::vector<double> default_y_samples(int input_height) {
  std::vector<double> ys;
  for (int y = static_cast<int>(std::lround(0.42 * input_height)); y < input_height; y += 2) ys.push_back(y);
  return ys;
}

struct ErcOptions {
  /// Rows (pixels of the detector input) at which curves are evaluated.
  std::vector<double> ys;
  /// Normalize each probability-map row to unit mass before taking the expectation.
  /// When false the raw sum (1/(L*H)) * sum_l,i,j x_i * P is returned.
  bool row_normalize = true;
  /// Value used for a frame without any lane output; unset means such frames are an error.
  std::optional<double> empty_value;
};

/// True when the representation carries no lane at all (no lines, maps, polynomials or anchors).
inline bool has_no_lanes(const LaneRepresentation& rep) {
  return std::visit(
      [](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, PointLanes>) {
          for (const auto& l : d.lines) {
            if (!l.empty()) return false;
          }
          return true;
        } else if constexpr (std::is_same_v<T, ProbMapLanes>) {
          for (const auto& m : d.maps) {
            for (double p : m) {
              if (p > 0.0) return false;
            }
          }
          return true;
        } else if constexpr (std::is_same_v<T, PolyLanes>) {
          return d.coeffs.empty();
        } else {
          return d.anchors.empty();
        }
      },
      rep.data);
}

/// Expected road centre of probability maps, in normalized image width.
inline double erc_probmaps(const ProbMapLanes& rep, bool row_normalize = true) {
  if (rep.maps.empty()) throw Error("erc: no probability maps");
  const double denom_x = rep.cols - 1;
  double total = 0.0;
  double count = 0.0;
  bool any_mass = false;
  for (std::size_t l = 0; l < rep.maps.size(); ++l) {
    for (int r = 0; r < rep.rows; ++r) {
      double mass = 0.0;
      double weighted = 0.0;
      for (int c = 0; c < rep.cols; ++c) {
        const double p = rep.at(l, r, c);
        mass += p;
        weighted += (c / denom_x) * p;
      }
      if (mass > 0.0) any_mass = true;
      if (row_normalize) {
        if (mass > 0.0) {
          total += weighted / mass;
          count += 1.0;
        }
      } else {
        total += weighted;
        count += 1.0;
      }
    }
  }
  if (!any_mass) throw Error("no lane mass");
  return total / count;
}

/// Mean polynomial evaluation over all lines and rows, in normalized image width.
inline double erc_polynomials(const PolyLanes& rep, const std::vector<double>& ys, int image_width,
                              int image_height) {
  if (rep.coeffs.empty()) throw Error("erc: no polynomial lanes");
  if (ys.empty()) throw Error("erc: empty y-sample set");
  const bool norm = rep.units == CoordUnits::normalized;
  double total = 0.0;
  for (const auto& c : rep.coeffs) {
    for (double y : ys) {
      const double t = norm ? y / (image_height - 1) : y;
      const double x = eval_poly(c, t);
      total += norm ? x : x / (image_width - 1);
    }
  }
  return total / static_cast<double>(rep.coeffs.size() * ys.size());
}

/// Probability-weighted sum of per-anchor mean x; probabilities are not renormalized.
inline double erc_anchors(const AnchorLanes& rep, int image_width) {
  if (rep.anchors.empty()) throw Error("erc: no anchor proposals");
  const double scale = rep.units == CoordUnits::normalized ? 1.0 : 1.0 / (image_width - 1);
  double total = 0.0;
  for (const auto& a : rep.anchors) {
    if (a.ys.empty()) throw Error("erc: anchor without y samples");
    double sum = 0.0;
    for (std::size_t j = 0; j < a.ys.size(); ++j) sum += (a.xs[j] + a.offsets[j]) * scale;
    total += sum / static_cast<double>(a.ys.size()) * a.prob;
  }
  return total;
}

/// Mean x of point lists over their present samples at `ys`.
inline double erc_points(const PointLanes& rep, const std::vector<double>& ys, int image_width) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& line : rep.lines) {
    for (const auto& x : detail::resample_polyline(line, ys, image_width)) {
      if (x) {
        total += *x / (image_width - 1);
        ++n;
      }
    }
  }
  if (n == 0) throw Error("erc: no lane points");
  return total / static_cast<double>(n);
}

inline double expected_road_center(const LaneRepresentation& rep, const ErcOptions& opts) {
  if (opts.empty_value && has_no_lanes(rep)) return *opts.empty_value;
  return std::visit(
      [&](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, ProbMapLanes>) {
          return erc_probmaps(d, opts.row_normalize);
        } else if constexpr (std::is_same_v<T, PolyLanes>) {
          return erc_polynomials(d, opts.ys, rep.image_width, rep.image_height);
        } else if constexpr (std::is_same_v<T, AnchorLanes>) {
          return erc_anchors(d, rep.image_width);
        } else {
          return erc_points(d, opts.ys, rep.image_width);
        }
      },
      rep.data);
}

/// Signed objective to minimize: -mean ERC for rightward attacks, +mean ERC for leftward ones.
inline double loss_from_erc(double mean_erc, AttackDirection dir) { return -direction_sign(dir) * mean_erc; }

inline double attack_loss(std::span<const LaneRepresentation> frames, AttackDirection dir, const ErcOptions& opts) {
  if (frames.empty()) throw Error("attack_loss: no frames");
  double sum = 0.0;
  for (const auto& f : frames) sum += expected_road_center(f, opts);
  return loss_from_erc(sum / static_cast<double>(frames.size()), dir);
}

/// Horizontal mirror of a representation about the image's vertical centre line.
inline LaneRepresentation mirror_horizontal(const LaneRepresentation& rep) {
  LaneRepresentation out = rep;
  const double w1 = rep.image_width - 1;
  std::visit(
      [&](auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, PointLanes>) {
          for (auto& line : d.lines)
            for (auto& p : line) p.x = w1 - p.x;
        } else if constexpr (std::is_same_v<T, ProbMapLanes>) {
          for (auto& m : d.maps) {
            for (int r = 0; r < d.rows; ++r) {
              auto* row = m.data() + static_cast<std::size_t>(r) * d.cols;
              std::reverse(row, row + d.cols);
            }
          }
        } else if constexpr (std::is_same_v<T, PolyLanes>) {
          const double span = d.units == CoordUnits::normalized ? 1.0 : w1;
          for (auto& c : d.coeffs) {
            for (auto& v : c) v = -v;
            c.back() += span;
          }
        } else {
          const double span = d.units == CoordUnits::normalized ? 1.0 : w1;
          for (auto& a : d.anchors) {
            for (std::size_t j = 0; j < a.xs.size(); ++j) {
              a.xs[j] = span - a.xs[j];
              a.offsets[j] = -a.offsets[j];
            }
          }
        }
      },
      out.data);
  return out;
}

}  // namespace lanerob
