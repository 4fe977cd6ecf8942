#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "lanerob/lanes.hpp"
#include "lanerob/vehicle.hpp"

namespace lanerob {

struct AccuracyConfig {
  double pixel_threshold = 20.0;
  double match_threshold = 0.85;
};

/// Fraction of sampled rows where pred and gt agree: both present within the pixel
/// threshold, or both absent.
inline double line_accuracy(const SampledLine& pred, const SampledLine& gt, const AccuracyConfig& cfg) {
  if (gt.empty()) throw Error("line_accuracy: empty y-sample set");
  if (pred.size() != gt.size()) throw Error("line_accuracy: lines sampled on different y sets");
  std::size_t tp = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (pred[i] && gt[i]) {
      tp += std::abs(*pred[i] - *gt[i]) <= cfg.pixel_threshold;
    } else {
      tp += !pred[i] && !gt[i];
    }
  }
  return static_cast<double>(tp) / static_cast<double>(gt.size());
}

struct LaneScores {
  double accuracy = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  int true_positives = 0;
};

/// F1 from counts; zero when there are no true positives.
inline LaneScores scores_from_matches(const std::vector<double>& matched_accuracies, std::size_t n_pred,
                                      std::size_t n_gt, const AccuracyConfig& cfg) {
  LaneScores s;
  double acc_sum = 0.0;
  for (double a : matched_accuracies) {
    acc_sum += a;
    s.true_positives += a >= cfg.match_threshold;
  }
  if (n_gt == 0) {
    s.accuracy = n_pred == 0 ? 1.0 : 0.0;
  } else {
    s.accuracy = acc_sum / static_cast<double>(n_gt);
  }
  s.precision = n_pred == 0 ? 0.0 : static_cast<double>(s.true_positives) / static_cast<double>(n_pred);
  s.recall = n_gt == 0 ? 0.0 : static_cast<double>(s.true_positives) / static_cast<double>(n_gt);
  s.f1 = s.true_positives == 0 ? 0.0 : 2.0 / (1.0 / s.recall + 1.0 / s.precision);
  return s;
}

/// Greedy one-to-one association in descending pair accuracy, then TuSimple-style scores.
inline LaneScores match_and_score(const LabeledLanes& preds, const LabeledLanes& gts, const AccuracyConfig& cfg) {
  struct Pair {
    double acc;
    std::size_t p;
    std::size_t g;
  };
  std::vector<Pair> pairs;
  pairs.reserve(preds.lines.size() * gts.lines.size());
  for (std::size_t p = 0; p < preds.lines.size(); ++p) {
    for (std::size_t g = 0; g < gts.lines.size(); ++g) {
      pairs.push_back({line_accuracy(preds.lines[p].x, gts.lines[g].x, cfg), p, g});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.acc > b.acc; });
  std::vector<bool> pred_used(preds.lines.size(), false);
  std::vector<bool> gt_used(gts.lines.size(), false);
  std::vector<double> matched;
  for (const auto& pr : pairs) {
    if (pred_used[pr.p] || gt_used[pr.g]) continue;
    pred_used[pr.p] = gt_used[pr.g] = true;
    matched.push_back(pr.acc);
  }
  return scores_from_matches(matched, preds.lines.size(), gts.lines.size(), cfg);
}

// ---------------------------------------------------------------------------
// End-to-end outcome

struct DeviationSample {
  double t = 0.0;
  double attacked = 0.0;
  double reference = 0.0;

  double deviation() const { return attacked - reference; }
};

struct DeviationTrace {
  std::vector<DeviationSample> samples;
};

/// Signed lateral difference (attacked - reference) at each shared timestamp.
inline DeviationTrace lateral_deviation(const Trajectory& attacked, const Trajectory& reference) {
  if (attacked.samples.size() != reference.samples.size()) throw Error("lateral_deviation: timestamp mismatch");
  DeviationTrace out;
  out.samples.reserve(attacked.samples.size());
  for (std::size_t i = 0; i < attacked.samples.size(); ++i) {
    const auto& a = attacked.samples[i];
    const auto& r = reference.samples[i];
    if (std::abs(a.t - r.t) > 1e-9) throw Error("lateral_deviation: timestamp mismatch");
    if (i > 0 && !(a.t > attacked.samples[i - 1].t)) throw Error("lateral_deviation: timestamps not increasing");
    out.samples.push_back({a.t, a.lateral_offset, r.lateral_offset});
  }
  return out;
}

struct OutcomeConfig {
  double deviation_threshold = 0.735;
  double horizon = 2.5;
};

struct Outcome {
  bool targeted = false;
  bool untargeted = false;
  bool benign_fail = false;
  double max_deviation = 0.0;                // signed value with the largest magnitude within the horizon
  std::optional<double> time_to_threshold;  // first t with |deviation| >= threshold
};

namespace detail {

inline void check_horizon(const DeviationTrace& trace, double horizon) {
  if (trace.samples.empty() || trace.samples.back().t < horizon - 1e-9) {
    throw Error("classify_outcome: trace shorter than horizon");
  }
}

inline bool exceeds_within(const DeviationTrace& trace, double horizon, double thr) {
  for (const auto& s : trace.samples) {
    if (s.t <= horizon + 1e-9 && std::abs(s.deviation()) >= thr) return true;
  }
  return false;
}

}  // namespace detail

/// Attack success flags for one trace (attacked vs benign simulation). When a benign trace
/// (benign simulation vs human reference) is supplied, benign_fail is filled from it.
inline Outcome classify_outcome(const DeviationTrace& trace, AttackDirection dir, const OutcomeConfig& cfg,
                                const DeviationTrace* benign = nullptr) {
  detail::check_horizon(trace, cfg.horizon);
  Outcome o;
  const double sign = direction_sign(dir);
  for (const auto& s : trace.samples) {
    if (s.t > cfg.horizon + 1e-9) break;
    const double dev = s.deviation();
    if (std::abs(dev) > std::abs(o.max_deviation)) o.max_deviation = dev;
    if (sign * dev >= cfg.deviation_threshold) o.targeted = true;
    if (std::abs(dev) >= cfg.deviation_threshold) {
      o.untargeted = true;
      if (!o.time_to_threshold) o.time_to_threshold = s.t;
    }
  }
  if (benign) {
    detail::check_horizon(*benign, cfg.horizon);
    o.benign_fail = detail::exceeds_within(*benign, cfg.horizon, cfg.deviation_threshold);
  }
  return o;
}

}  // namespace lanerob
