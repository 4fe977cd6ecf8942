#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lanerob/image.hpp"
#include "lanerob/lanes.hpp"
#include "lanerob/objective.hpp"
#include "lanerob/rng.hpp"
#include "lanerob/scene.hpp"

namespace lanerob {

struct DetectorInfo {
  std::string name;
  LaneFamily family = LaneFamily::points;
  int input_width = 0;
  int input_height = 0;
  bool gradient = false;
};

/// Ground truth available to the simulator when it queries a detector; only oracle-style
/// detectors read it.
struct FrameContext {
  const Scene* scene = nullptr;
  const CameraModel* camera = nullptr;
  Pose pose;
  int frame_index = 0;
};

class Detector {
 public:
  virtual ~Detector() = default;

  virtual const DetectorInfo& info() const = 0;

  /// Lanes in the input frame; the frame must match the declared input size.
  virtual LaneRepresentation detect(const ImageFrame& input, const FrameContext* ctx = nullptr) = 0;

  /// d(attack loss)/d(gray level) of every pixel in `region` (zero elsewhere), where the loss is
  /// -ERC for rightward attacks and +ERC for leftward ones.
  virtual GrayImage gradient(const ImageFrame& input, AttackDirection dir, const PixelMask& region,
                             const ErcOptions& erc) {
    (void)input, (void)dir, (void)region, (void)erc;
    throw Error("detector '" + info().name + "' does not support gradient queries");
  }

 protected:
  void check_input(const ImageFrame& input) const {
    if (input.width != info().input_width || input.height != info().input_height) {
      throw Error("detector '" + info().name + "': input is " + std::to_string(input.width) + "x" +
                  std::to_string(input.height) + ", expected " + std::to_string(info().input_width) + "x" +
                  std::to_string(info().input_height));
    }
  }
};

inline double frame_loss(const LaneRepresentation& rep, AttackDirection dir, const ErcOptions& erc) {
  return loss_from_erc(expected_road_center(rep, erc), dir);
}

/// Detector that only looks at the gray levels of its input. Gradients default to central
/// finite differences of +-1 gray level, one full detection per probe.
class GrayDetector : public Detector {
 public:
  virtual LaneRepresentation detect_gray(const GrayImage& gray) const = 0;

  LaneRepresentation detect(const ImageFrame& input, const FrameContext* = nullptr) override {
    check_input(input);
    return detect_gray(to_gray(input));
  }

  GrayImage gradient(const ImageFrame& input, AttackDirection dir, const PixelMask& region,
                     const ErcOptions& erc) override {
    check_input(input);
    return finite_difference_gradient(to_gray(input), dir, region, erc);
  }

  GrayImage finite_difference_gradient(const GrayImage& gray, AttackDirection dir, const PixelMask& region,
                                       const ErcOptions& erc, double step = 1.0) const {
    if (region.width != gray.width || region.height != gray.height) throw Error("gradient: region size mismatch");
    GrayImage grad(gray.width, gray.height, 0.0);
    GrayImage probe = gray;
    for (int y = 0; y < gray.height; ++y) {
      for (int x = 0; x < gray.width; ++x) {
        if (!region.at(x, y)) continue;
        const double v = gray.at(x, y);
        probe.at(x, y) = v + step;
        const double up = frame_loss(detect_gray(probe), dir, erc);
        probe.at(x, y) = v - step;
        const double down = frame_loss(detect_gray(probe), dir, erc);
        probe.at(x, y) = v;
        grad.at(x, y) = (up - down) / (2.0 * step);
      }
    }
    return grad;
  }
};

// ---------------------------------------------------------------------------
// Oracle

struct OracleConfig {
  double noise_px = 0.0;
  double near_m = 2.0;
  double far_m = 150.0;
  double step_m = 0.5;
  std::uint64_t seed = 0;
};

/// Projects the scene's analytic lane lines; ignores the pixels entirely.
class OracleDetector : public Detector {
 public:
  OracleDetector(int input_width, int input_height, OracleConfig cfg = {})
      : info_{"oracle", LaneFamily::points, input_width, input_height, false}, cfg_(cfg) {}

  const DetectorInfo& info() const override { return info_; }

  LaneRepresentation detect(const ImageFrame& input, const FrameContext* ctx = nullptr) override {
    check_input(input);
    if (!ctx || !ctx->scene || !ctx->camera) throw Error("oracle detector requires scene context");
    return lines_for(*ctx->scene, *ctx->camera, ctx->pose, ctx->frame_index);
  }

  LaneRepresentation lines_for(const Scene& scene, const CameraModel& cam, const Pose& pose, int frame_index) const {
    const auto& road = scene.road;
    const double s_vehicle = road.locate({pose.x, pose.y}).s;
    PointLanes out;
    std::normal_distribution<double> noise(0.0, 1.0);
    int line_id = 0;
    for (double off : road.line_offsets()) {
      auto rng = make_rng(cfg_.seed, {static_cast<std::uint64_t>(frame_index), static_cast<std::uint64_t>(line_id++)});
      std::vector<Vec2> pts;
      for (double s = s_vehicle + cfg_.near_m; s <= s_vehicle + cfg_.far_m + 1e-9; s += cfg_.step_m) {
        const Vec2 g = vehicle_from_world(pose, road.to_world(s, off));
        if (g.x < 0.5) continue;
        Vec2 q = cam.camera_to_detector(cam.project(g));
        // keep points below the frame so resampling covers the bottom rows
        if (q.y < 0.0 || q.y > 3.0 * info_.input_height) continue;
        if (cfg_.noise_px > 0.0) q.x += cfg_.noise_px * noise(rng);
        pts.push_back(q);
      }
      std::reverse(pts.begin(), pts.end());
      std::vector<Vec2> mono;
      for (const auto& p : pts) {
        if (mono.empty() || p.y > mono.back().y) mono.push_back(p);
      }
      if (mono.size() >= 2) out.lines.push_back(std::move(mono));
    }
    return {info_.input_width, info_.input_height, std::move(out)};
  }

 private:
  DetectorInfo info_;
  OracleConfig cfg_;
};

// ---------------------------------------------------------------------------
// Classical marking scanner

struct ClassicalConfig {
  double threshold = 25.0;          // minimum |horizontal gradient| of a marking edge, gray levels
  double max_marking_width = 14.0;  // rising-to-falling edge distance, px
  double scan_top = 0.39;           // first scanned row as a fraction of the height
  int max_gap_rows = 3;
  double chain_tolerance = 3.0;     // px between a candidate and a chain's predicted x
  int min_chain_points = 8;
  double vanishing_x = 0.5;         // prior for new chains' direction, fractions of width/height
  double vanishing_y = 0.35;
  int degree = 3;
  bool ego_pair_only = true;        // emit only the lines straddling the image centre at the bottom row
};

/// Bright-marking scanner: per-row gradient edges paired into marking centres, chained
/// bottom-up into polylines and fitted with least-squares polynomials x(y) in normalized units.
class ClassicalDetector : public GrayDetector {
 public:
  using Row = std::vector<double>;

  ClassicalDetector(int input_width, int input_height, ClassicalConfig cfg = {})
      : info_{"classical", LaneFamily::poly, input_width, input_height, true}, cfg_(cfg) {
    if (input_width < 8 || input_height < 8) throw Error("classical detector: input too small");
    top_row_ = std::clamp(static_cast<int>(std::lround(cfg_.scan_top * input_height)), 0, input_height - 1);
  }

  const DetectorInfo& info() const override { return info_; }
  const ClassicalConfig& config() const { return cfg_; }

  LaneRepresentation detect_gray(const GrayImage& gray) const override {
    std::vector<Row> rows(static_cast<std::size_t>(gray.height));
    std::vector<double> dg;
    for (int y = top_row_; y < gray.height; ++y) row_candidates(gray.row(y), gray.width, dg, rows[y]);
    return fit_lines(rows, -1, nullptr);
  }

  /// Central +-1 differences, evaluated incrementally: a probe changes only its own row's edge
  /// response, so rows whose candidates stay identical reuse the unperturbed loss. Produces the
  /// same values as GrayDetector::finite_difference_gradient.
  GrayImage gradient(const ImageFrame& input, AttackDirection dir, const PixelMask& region,
                     const ErcOptions& erc) override {
    check_input(input);
    return fast_gradient(to_gray(input), dir, region, erc);
  }

  GrayImage fast_gradient(const GrayImage& gray, AttackDirection dir, const PixelMask& region,
                          const ErcOptions& erc) const {
    if (region.width != gray.width || region.height != gray.height) throw Error("gradient: region size mismatch");
    const int w = gray.width;
    std::vector<Row> rows(static_cast<std::size_t>(gray.height));
    std::vector<std::vector<double>> dgs(static_cast<std::size_t>(gray.height));
    for (int y = top_row_; y < gray.height; ++y) row_candidates(gray.row(y), w, dgs[y], rows[y]);
    const double base = frame_loss(fit_lines(rows, -1, nullptr), dir, erc);
    GrayImage grad(w, gray.height, 0.0);
    std::vector<double> line(static_cast<std::size_t>(w));
    std::vector<double> dg;
    Row cand;
    const double quiet = cfg_.threshold - 1.0;
    for (int y = top_row_; y < gray.height; ++y) {
      const auto& dg0 = dgs[y];
      for (int x = 0; x < w; ++x) {
        if (!region.at(x, y)) continue;
        bool quiet_here = true;
        for (int q = std::max(1, x - 2); q <= std::min(w - 2, x + 2); ++q) {
          if (std::abs(dg0[q]) >= quiet) {
            quiet_here = false;
            break;
          }
        }
        if (quiet_here) continue;
        std::copy(gray.row(y), gray.row(y) + w, line.begin());
        double loss[2];
        for (int k = 0; k < 2; ++k) {
          line[x] = gray.at(x, y) + (k == 0 ? 1.0 : -1.0);
          row_candidates(line.data(), w, dg, cand);
          loss[k] = cand == rows[y] ? base : frame_loss(fit_lines(rows, y, &cand), dir, erc);
        }
        grad.at(x, y) = (loss[0] - loss[1]) / 2.0;
      }
    }
    return grad;
  }

  /// Marking centres of one image row, in increasing x.
  void row_candidates(const double* g, int w, std::vector<double>& dg, Row& out) const {
    dg.assign(static_cast<std::size_t>(w), 0.0);
    for (int x = 1; x + 1 < w; ++x) dg[x] = g[x + 1] - g[x - 1];
    out.clear();
    const double t = cfg_.threshold;
    auto refine = [&](int x) {
      const double den = dg[x - 1] - 2.0 * dg[x] + dg[x + 1];
      if (den == 0.0) return static_cast<double>(x);
      return x + std::clamp(0.5 * (dg[x - 1] - dg[x + 1]) / den, -0.5, 0.5);
    };
    double rise = 0.0;
    bool open = false;
    for (int x = 2; x + 2 < w; ++x) {
      const double v = dg[x];
      if (v >= t && v >= dg[x - 1] && v > dg[x + 1]) {
        rise = refine(x);
        open = true;
      } else if (v <= -t && v <= dg[x - 1] && v < dg[x + 1]) {
        if (open) {
          const double fall = refine(x);
          if (fall - rise <= cfg_.max_marking_width) out.push_back(0.5 * (rise + fall));
        }
        open = false;
      }
    }
  }

  /// Chains candidates bottom-up and fits one polynomial per chain. Row `override_row`, when
  /// not negative, takes its candidates from `override` instead of `rows`.
  LaneRepresentation fit_lines(const std::vector<Row>& rows, int override_row, const Row* override) const {
    const int w = info_.input_width;
    const int h = info_.input_height;
    const double vx = cfg_.vanishing_x * w;
    const double vy = cfg_.vanishing_y * h;
    struct Chain {
      std::vector<Vec2> pts;
      double slope = 0.0;  // dx/dy
      bool active = true;
    };
    std::vector<Chain> chains;
    struct Pair {
      double dist;
      std::size_t chain;
      std::size_t cand;
    };
    std::vector<Pair> pairs;
    std::vector<char> cand_used;
    std::vector<char> chain_used;
    for (int y = h - 1; y >= top_row_; --y) {
      const Row& cands = (y == override_row) ? *override : rows[y];
      for (auto& c : chains) {
        if (c.active && c.pts.back().y - y > cfg_.max_gap_rows + 1) c.active = false;
      }
      pairs.clear();
      for (std::size_t ci = 0; ci < chains.size(); ++ci) {
        const auto& c = chains[ci];
        if (!c.active) continue;
        const double pred = c.pts.back().x + c.slope * (y - c.pts.back().y);
        for (std::size_t k = 0; k < cands.size(); ++k) {
          const double dist = std::abs(cands[k] - pred);
          if (dist <= cfg_.chain_tolerance) pairs.push_back({dist, ci, k});
        }
      }
      std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.dist < b.dist; });
      cand_used.assign(cands.size(), 0);
      chain_used.assign(chains.size(), 0);
      for (const auto& p : pairs) {
        if (cand_used[p.cand] || chain_used[p.chain]) continue;
        cand_used[p.cand] = chain_used[p.chain] = 1;
        auto& c = chains[p.chain];
        c.pts.push_back({cands[p.cand], static_cast<double>(y)});
        c.slope = chain_slope(c.pts, vx, vy);
      }
      for (std::size_t k = 0; k < cands.size(); ++k) {
        if (cand_used[k]) continue;
        Chain c;
        c.pts.push_back({cands[k], static_cast<double>(y)});
        c.slope = chain_slope(c.pts, vx, vy);
        chains.push_back(std::move(c));
      }
    }

    struct Fitted {
      std::vector<double> coeffs;
      double bottom_x;
    };
    std::vector<Fitted> lines;
    for (const auto& c : chains) {
      if (static_cast<int>(c.pts.size()) < cfg_.min_chain_points) continue;
      auto coeffs = fit_poly(c.pts, w, h);
      lines.push_back({coeffs, eval_poly(coeffs, 1.0) * (w - 1)});
    }
    PolyLanes out;
    out.units = CoordUnits::normalized;
    if (!cfg_.ego_pair_only) {
      for (auto& l : lines) out.coeffs.push_back(std::move(l.coeffs));
    } else {
      const double center = w / 2.0;
      const Fitted* left = nullptr;
      const Fitted* right = nullptr;
      for (const auto& l : lines) {
        if (l.bottom_x < center) {
          if (!left || l.bottom_x > left->bottom_x) left = &l;
        } else if (!right || l.bottom_x < right->bottom_x) {
          right = &l;
        }
      }
      if (left) out.coeffs.push_back(left->coeffs);
      if (right) out.coeffs.push_back(right->coeffs);
    }
    return {w, h, std::move(out)};
  }

 private:
  static double chain_slope(const std::vector<Vec2>& pts, double vx, double vy) {
    const std::size_t n = pts.size();
    if (n < 4) {
      const Vec2 p = pts.back();
      return std::abs(p.y - vy) < 1e-6 ? 0.0 : (p.x - vx) / (p.y - vy);
    }
    const std::size_t k = std::min<std::size_t>(n, 6);
    double my = 0.0;
    double mx = 0.0;
    for (std::size_t i = n - k; i < n; ++i) {
      my += pts[i].y;
      mx += pts[i].x;
    }
    my /= static_cast<double>(k);
    mx /= static_cast<double>(k);
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = n - k; i < n; ++i) {
      sxy += (pts[i].y - my) * (pts[i].x - mx);
      syy += (pts[i].y - my) * (pts[i].y - my);
    }
    return syy > 0.0 ? sxy / syy : 0.0;
  }

  std::vector<double> fit_poly(const std::vector<Vec2>& pts, int w, int h) const {
    double t_min = 1e9;
    double t_max = -1e9;
    for (const auto& p : pts) {
      t_min = std::min(t_min, p.y / (h - 1));
      t_max = std::max(t_max, p.y / (h - 1));
    }
    const double span = t_max - t_min;
    const std::size_t n = pts.size();
    int deg = 1;
    if (span >= 0.25 && n >= 12) {
      deg = cfg_.degree;
    } else if (span >= 0.12 && n >= 8) {
      deg = std::min(2, cfg_.degree);
    }
    Eigen::MatrixXd a(static_cast<Eigen::Index>(n), deg + 1);
    Eigen::VectorXd b(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const double t = pts[i].y / (h - 1);
      double pw = 1.0;
      for (int j = deg; j >= 0; --j) {
        a(static_cast<Eigen::Index>(i), j) = pw;
        pw *= t;
      }
      b(static_cast<Eigen::Index>(i)) = pts[i].x / (w - 1);
    }
    const Eigen::VectorXd sol = a.colPivHouseholderQr().solve(b);
    std::vector<double> coeffs(static_cast<std::size_t>(cfg_.degree + 1), 0.0);
    for (int j = 0; j <= deg; ++j) coeffs[static_cast<std::size_t>(cfg_.degree - deg + j)] = sol(j);
    return coeffs;
  }

  DetectorInfo info_;
  ClassicalConfig cfg_;
  int top_row_ = 0;
};

}  // namespace lanerob
