#pragma once

#include <functional>
#include <vector>

#include "lanerob/artifacts.hpp"
#include "lanerob/generation.hpp"
#include "lanerob/tpe.hpp"

namespace lanerob {

struct LineAttackOptions {
  int iterations = 200;
  TpeConfig tpe;
  double min_width = 0.012;
  double max_width = 0.12;
  double color = 230.0;
  std::function<void(int, const DrawnLine&, double)> on_evaluate;
};

struct LineAttackResult {
  DrawnLine line;
  double benign_loss = 0.0;
  double best_loss = 0.0;
  std::vector<double> best_history;  // best loss after each evaluation
};

/// Search space of a drawn line in `area`: (start s, start d, end s, end d, width).
inline std::vector<Bounds> line_search_space(const RoadArea& area, double min_width, double max_width) {
  return {{area.s_lo, area.s_hi}, {area.d_lo, area.d_hi}, {area.s_lo, area.s_hi}, {area.d_lo, area.d_hi},
          {min_width, max_width}};
}

inline DrawnLine line_from_params(const std::vector<double>& p, double color) {
  DrawnLine l;
  l.start = {p[0], p[1]};
  l.end = {p[2], p[3]};
  l.width = p[4];
  l.color = color;
  return l;
}

/// Drawing-lane-line attack: TPE over the line parameters inside the window's attack area,
/// minimizing the multi-frame loss. A suggestion with coincident endpoints draws nothing.
inline LineAttackResult optimize_line(const GenerationWindow& win, Detector& det, AttackDirection dir,
                                      const LineAttackOptions& opts, std::uint64_t seed) {
  TpeOptimizer tpe(line_search_space(win.area(), opts.min_width, opts.max_width), opts.tpe, seed);
  LineAttackResult res;
  res.benign_loss = win.loss(det, {}, dir);
  for (int it = 0; it < opts.iterations; ++it) {
    const auto p = tpe.suggest();
    const DrawnLine line = line_from_params(p, opts.color);
    AttackArtifact art;
    if ((line.end - line.start).norm() >= 1e-6) art.line = line;
    const double loss = win.loss(det, art, dir);
    tpe.observe(p, loss);
    res.best_history.push_back(tpe.best().loss);
    if (opts.on_evaluate) opts.on_evaluate(it, line, loss);
  }
  const auto& best = tpe.best();
  res.line = line_from_params(best.params, opts.color);
  res.best_loss = best.loss;
  return res;
}

}  // namespace lanerob
