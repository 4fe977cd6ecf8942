#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lanerob/common.hpp"
#include "lanerob/rng.hpp"

namespace lanerob {

enum class NesSampling {
  iid,         // independent standard normal directions
  orthogonal,  // blocks of mutually orthogonal directions with chi-distributed norms
};

struct NesOptions {
  double sigma = 10.0;
  int samples = 100;  // objective evaluations; directions are used in antithetic pairs
  NesSampling sampling = NesSampling::orthogonal;
};

/// Search directions for one NES estimate: samples/2 vectors of dimension `dim`.
///
/// In orthogonal mode each block of up to `dim` directions is Gram-Schmidt orthogonalized and
/// every direction is rescaled to the norm of an independent Gaussian vector, so each one is
/// still marginally N(0, I).
inline std::vector<std::vector<double>> nes_directions(std::size_t dim, int pairs, NesSampling mode,
                                                       std::uint64_t seed) {
  std::vector<std::vector<double>> dirs(static_cast<std::size_t>(pairs), std::vector<double>(dim));
  std::normal_distribution<double> normal;
  for (int k = 0; k < pairs; ++k) {
    auto rng = make_rng(seed, {static_cast<std::uint64_t>(k)});
    for (auto& v : dirs[k]) v = normal(rng);
  }
  if (mode == NesSampling::iid || dim == 0) return dirs;
  for (std::size_t start = 0; start < dirs.size(); start += dim) {
    const std::size_t end = std::min(dirs.size(), start + dim);
    for (std::size_t k = start; k < end; ++k) {
      auto& u = dirs[k];
      for (std::size_t j = start; j < k; ++j) {
        const auto& q = dirs[j];
        double proj = 0.0;
        for (std::size_t i = 0; i < dim; ++i) proj += u[i] * q[i];
        for (std::size_t i = 0; i < dim; ++i) u[i] -= proj * q[i];
      }
      double n = 0.0;
      for (double v : u) n += v * v;
      n = std::sqrt(n);
      if (n < 1e-12) throw Error("nes: degenerate direction block");
      for (auto& v : u) v /= n;
    }
    // rescale after the whole block is orthonormal so projections above use unit vectors
    for (std::size_t k = start; k < end; ++k) {
      auto rng = make_rng(seed, {static_cast<std::uint64_t>(k), 0x6e6f726dULL});
      double r2 = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double z = normal(rng);
        r2 += z * z;
      }
      const double r = std::sqrt(r2);
      for (auto& v : dirs[k]) v *= r;
    }
  }
  return dirs;
}

/// Antithetic NES gradient estimate (1/(n sigma)) sum_k f(x + sigma u_k) u_k over n = opts.samples
/// evaluations, the directions entering as (u, -u) pairs. Deterministic given `seed`.
template <class F>
std::vector<double> nes_gradient(F&& f, const std::vector<double>& x, const NesOptions& opts, std::uint64_t seed) {
  if (opts.samples <= 0 || opts.samples % 2 != 0) throw Error("nes: sample count must be positive and even");
  if (!(opts.sigma > 0.0)) throw Error("nes: sigma must be positive");
  const auto dirs = nes_directions(x.size(), opts.samples / 2, opts.sampling, seed);
  std::vector<double> grad(x.size(), 0.0);
  std::vector<double> probe(x.size());
  for (const auto& u : dirs) {
    for (std::size_t i = 0; i < x.size(); ++i) probe[i] = x[i] + opts.sigma * u[i];
    const double f_plus = f(probe);
    for (std::size_t i = 0; i < x.size(); ++i) probe[i] = x[i] - opts.sigma * u[i];
    const double f_minus = f(probe);
    const double diff = f_plus - f_minus;
    for (std::size_t i = 0; i < x.size(); ++i) grad[i] += diff * u[i];
  }
  const double scale = 1.0 / (opts.samples * opts.sigma);
  for (auto& g : grad) g *= scale;
  return grad;
}

}  // namespace lanerob
