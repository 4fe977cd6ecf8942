#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "lanerob/common.hpp"
#include "lanerob/rng.hpp"

namespace lanerob {

struct Bounds {
  double lo = 0.0;
  double hi = 1.0;
};

struct TpeConfig {
  double gamma = 0.25;
  int n_startup = 20;
  int n_candidates = 24;
  double min_bandwidth_frac = 0.01;
};

struct TpeObservation {
  std::vector<double> params;
  double loss = 0.0;
};

namespace detail {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// One-dimensional mixture of Gaussians truncated to [lo, hi].
class TruncatedParzen {
 public:
  TruncatedParzen(std::vector<double> centers, Bounds b, double min_bw_frac) : b_(b), mu_(std::move(centers)) {
    std::sort(mu_.begin(), mu_.end());
    const double range = b_.hi - b_.lo;
    const double min_bw = min_bw_frac * range;
    sd_.resize(mu_.size());
    mass_.resize(mu_.size());
    for (std::size_t i = 0; i < mu_.size(); ++i) {
      const double left = i == 0 ? mu_[i] - b_.lo : mu_[i] - mu_[i - 1];
      const double right = i + 1 == mu_.size() ? b_.hi - mu_[i] : mu_[i + 1] - mu_[i];
      sd_[i] = std::clamp(std::max(left, right), min_bw, range);
      mass_[i] = normal_cdf((b_.hi - mu_[i]) / sd_[i]) - normal_cdf((b_.lo - mu_[i]) / sd_[i]);
    }
  }

  double log_pdf(double x) const {
    double p = 0.0;
    for (std::size_t i = 0; i < mu_.size(); ++i) {
      const double z = (x - mu_[i]) / sd_[i];
      p += std::exp(-0.5 * z * z) / (sd_[i] * std::sqrt(2.0 * kPi) * mass_[i]);
    }
    return std::log(std::max(p / static_cast<double>(mu_.size()), std::numeric_limits<double>::min()));
  }

  double sample(Rng& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, mu_.size() - 1);
    const std::size_t i = pick(rng);
    std::normal_distribution<double> normal(mu_[i], sd_[i]);
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double x = normal(rng);
      if (x >= b_.lo && x <= b_.hi) return x;
    }
    return std::clamp(mu_[i], b_.lo, b_.hi);
  }

 private:
  Bounds b_;
  std::vector<double> mu_;
  std::vector<double> sd_;
  std::vector<double> mass_;
};

}  // namespace detail

/// Sequential tree-structured Parzen estimator over a box, minimizing the observed loss.
class TpeOptimizer {
 public:
  TpeOptimizer(std::vector<Bounds> space, TpeConfig cfg, std::uint64_t seed)
      : space_(std::move(space)), cfg_(cfg), seed_(seed) {
    if (space_.empty()) throw Error("tpe: empty search space");
    for (const auto& b : space_) {
      if (!(b.hi > b.lo)) throw Error("tpe: degenerate bounds");
    }
    if (!(cfg_.gamma > 0.0 && cfg_.gamma < 1.0)) throw Error("tpe: gamma must lie in (0, 1)");
    if (cfg_.n_candidates <= 0) throw Error("tpe: candidate count must be positive");
  }

  /// Next point to evaluate; a pure function of the seed and the observation history.
  std::vector<double> suggest() const {
    auto rng = make_rng(seed_, {obs_.size()});
    const std::size_t dims = space_.size();
    std::vector<double> x(dims);
    if (static_cast<int>(obs_.size()) < std::max(cfg_.n_startup, 2)) {
      for (std::size_t d = 0; d < dims; ++d) {
        std::uniform_real_distribution<double> u(space_[d].lo, space_[d].hi);
        x[d] = u(rng);
      }
      return x;
    }
    std::vector<std::size_t> order(obs_.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return obs_[a].loss < obs_[b].loss; });
    const auto n_good = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(cfg_.gamma * static_cast<double>(obs_.size()))), 1, obs_.size() - 1);

    std::vector<detail::TruncatedParzen> good;
    std::vector<detail::TruncatedParzen> bad;
    for (std::size_t d = 0; d < dims; ++d) {
      std::vector<double> g_pts;
      std::vector<double> b_pts;
      for (std::size_t r = 0; r < order.size(); ++r) {
        (r < n_good ? g_pts : b_pts).push_back(obs_[order[r]].params[d]);
      }
      good.emplace_back(std::move(g_pts), space_[d], cfg_.min_bandwidth_frac);
      bad.emplace_back(std::move(b_pts), space_[d], cfg_.min_bandwidth_frac);
    }

    double best_score = -std::numeric_limits<double>::infinity();
    std::vector<double> cand(dims);
    for (int c = 0; c < cfg_.n_candidates; ++c) {
      double score = 0.0;
      for (std::size_t d = 0; d < dims; ++d) {
        cand[d] = good[d].sample(rng);
        score += good[d].log_pdf(cand[d]) - bad[d].log_pdf(cand[d]);
      }
      if (score > best_score) {
        best_score = score;
        x = cand;
      }
    }
    return x;
  }

  void observe(std::vector<double> params, double loss) {
    if (params.size() != space_.size()) throw Error("tpe: observation dimension mismatch");
    obs_.push_back({std::move(params), loss});
  }

  const std::vector<TpeObservation>& observations() const { return obs_; }
  const std::vector<Bounds>& space() const { return space_; }

  /// Lowest-loss observation (first one on ties).
  const TpeObservation& best() const {
    if (obs_.empty()) throw Error("no observations");
    std::size_t b = 0;
    for (std::size_t i = 1; i < obs_.size(); ++i) {
      if (obs_[i].loss < obs_[b].loss) b = i;
    }
    return obs_[b];
  }

 private:
  std::vector<Bounds> space_;
  TpeConfig cfg_;
  std::uint64_t seed_;
  std::vector<TpeObservation> obs_;
};

}  // namespace lanerob
