#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "lanerob/artifacts.hpp"
#include "lanerob/generation.hpp"
#include "lanerob/nes.hpp"
#include "lanerob/rng.hpp"

namespace lanerob {

enum class AttackMode { white_box, black_box };

inline const char* to_string(AttackMode m) { return m == AttackMode::white_box ? "white_box" : "black_box"; }

/// Patch of the given size centred on the lane centre, `attack_placement` metres ahead of the
/// vehicle's frame-0 position.
inline RoadPatch make_scenario_patch(const Scenario& sc, double width, double length, double cell = 0.15,
                                     double base_gray = 80.0) {
  return RoadPatch::make(sc.attack_placement, 0.0, width, length, cell, base_gray);
}

struct PatchIterate {
  int iteration = 0;
  double loss = 0.0;
  const RoadPatch* patch = nullptr;
};

struct PatchAttackOptions {
  AttackBudget budget;
  AttackMode mode = AttackMode::white_box;
  NesSampling sampling = NesSampling::orthogonal;
  std::function<void(const PatchIterate&)> on_iterate;  // called for iteration 0 and after every step
};

struct PatchAttackResult {
  RoadPatch patch;  // best iterate
  double initial_loss = 0.0;
  double best_loss = 0.0;
  int best_iteration = 0;
  std::vector<double> losses;  // loss of every iterate, iteration 0 first
};

namespace detail {

/// White-box gradient of the multi-frame loss with respect to every patch cell's gray level.
/// The detector gradient over each frame's attack region is pulled back through adapt_crop's
/// bilinear taps and the renderer's patch transmission.
inline std::vector<double> patch_cell_gradient(Detector& det, const GenerationWindow& win, const RoadPatch& patch,
                                               AttackDirection dir) {
  AttackArtifact art;
  art.patch = patch;
  const Scene sc = win.scene(art);
  const auto& cam = win.camera();
  std::vector<double> grad(patch.cells(), 0.0);
  for (const auto& f : win.frames()) {
    const auto& input = f.render_input(sc);
    PixelMask region(input.width, input.height);
    for (int idx : f.input_region()) region.on[static_cast<std::size_t>(idx)] = 1;
    const GrayImage g = det.gradient(input, dir, region, win.erc());
    if (g.width != input.width || g.height != input.height) throw Error("gradient: detector returned wrong size");
    const auto& geom = f.geometry();
    for (int idx : f.input_region()) {
      const double gp = g.values[static_cast<std::size_t>(idx)];
      if (gp == 0.0) continue;
      const auto taps = adapt_crop_taps(cam, idx % input.width, idx / input.width);
      for (int t = 0; t < 4; ++t) {
        if (taps.w[t] == 0.0) continue;
        const auto& px = geom.px[static_cast<std::size_t>(taps.y[t]) * geom.width + taps.x[t]];
        const auto [cell, trans] = patch_sensitivity(px, sc);
        if (cell >= 0) grad[static_cast<std::size_t>(cell)] += gp * taps.w[t] * trans;
      }
    }
  }
  const double n = static_cast<double>(win.frames().size());
  for (auto& v : grad) v /= n;
  return grad;
}

/// First floor(par * cells) indices of `order`, as a mask.
inline std::vector<std::uint8_t> mask_from_order(const std::vector<std::size_t>& order, std::size_t cells, double par) {
  const auto keep = static_cast<std::size_t>(std::floor(par * static_cast<double>(cells) + 1e-9));
  std::vector<std::uint8_t> mask(cells, 0);
  for (std::size_t i = 0; i < keep && i < order.size(); ++i) mask[order[i]] = 1;
  return mask;
}

struct Adam {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int t = 0;
  std::vector<double> m;
  std::vector<double> v;

  void step(std::vector<double>& x, const std::vector<double>& g) {
    if (m.empty()) {
      m.assign(x.size(), 0.0);
      v.assign(x.size(), 0.0);
    }
    ++t;
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

}  // namespace detail

/// Dirty-road-patch optimization over the scenario's generation window.
///
/// The perturbation lives in z = delta / 255. Each step applies Adam to grad_z(loss) + lambda z,
/// zeroes cells outside the PAR mask and clamps so base + delta stays in [0, 255]. The mask is
/// fixed at iteration 0: largest |gradient| cells in white-box mode, a seeded random subset in
/// black-box mode, where gradients are NES estimates with sigma in gray levels.
inline PatchAttackResult optimize_patch(const GenerationWindow& win, Detector& det, AttackDirection dir,
                                        RoadPatch patch, const PatchAttackOptions& opts, std::uint64_t seed) {
  const auto& b = opts.budget;
  if (b.iterations < 0) throw Error("optimize_patch: negative iteration count");
  if (opts.mode == AttackMode::white_box && !det.info().gradient) {
    throw Error("optimize_patch: detector '" + det.info().name + "' does not support gradient queries");
  }
  const std::size_t n = patch.cells();
  std::fill(patch.delta.begin(), patch.delta.end(), 0.0);
  std::fill(patch.mask.begin(), patch.mask.end(), 0);

  auto loss_of = [&](const RoadPatch& p) {
    AttackArtifact art;
    art.patch = p;
    return win.loss(det, art, dir);
  };

  PatchAttackResult res;
  res.initial_loss = loss_of(patch);
  res.best_loss = res.initial_loss;
  res.losses.push_back(res.initial_loss);
  res.patch = patch;
  if (opts.on_iterate) opts.on_iterate({0, res.initial_loss, &patch});
  if (b.iterations == 0) return res;

  std::vector<double> grad;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (opts.mode == AttackMode::white_box) {
    grad = detail::patch_cell_gradient(det, win, patch, dir);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t c) { return std::abs(grad[a]) > std::abs(grad[c]); });
  } else {
    auto rng = make_rng(seed, {0x6d61736bULL});
    std::shuffle(order.begin(), order.end(), rng);
  }
  patch.mask = detail::mask_from_order(order, n, b.par);
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < n; ++k) {
    if (patch.mask[k]) active.push_back(k);
  }
  res.patch.mask = patch.mask;

  std::vector<double> z(active.size(), 0.0);
  detail::Adam adam;
  adam.lr = b.learning_rate;
  const NesOptions nes{b.nes_sigma, b.nes_samples, opts.sampling};

  for (int it = 1; it <= b.iterations; ++it) {
    std::vector<double> g(active.size());
    if (opts.mode == AttackMode::white_box) {
      if (it > 1) grad = detail::patch_cell_gradient(det, win, patch, dir);
      for (std::size_t i = 0; i < active.size(); ++i) g[i] = 255.0 * grad[active[i]];
    } else {
      RoadPatch probe = patch;
      std::vector<double> x(active.size());
      for (std::size_t i = 0; i < active.size(); ++i) x[i] = patch.delta[active[i]];
      const auto est = nes_gradient(
          [&](const std::vector<double>& d) {
            for (std::size_t i = 0; i < active.size(); ++i) probe.delta[active[i]] = d[i];
            return loss_of(probe);
          },
          x, nes, derive_seed(seed, {static_cast<std::uint64_t>(it)}));
      for (std::size_t i = 0; i < active.size(); ++i) g[i] = 255.0 * est[i];
    }
    for (std::size_t i = 0; i < active.size(); ++i) g[i] += b.lambda_reg * z[i];
    adam.step(z, g);
    for (std::size_t i = 0; i < active.size(); ++i) {
      z[i] = std::clamp(z[i], -patch.base_gray / 255.0, (255.0 - patch.base_gray) / 255.0);
      patch.delta[active[i]] = 255.0 * z[i];
    }
    const double loss = loss_of(patch);
    res.losses.push_back(loss);
    if (opts.on_iterate) opts.on_iterate({it, loss, &patch});
    if (loss < res.best_loss) {
      res.best_loss = loss;
      res.best_iteration = it;
      res.patch = patch;
    }
  }
  return res;
}

}  // namespace lanerob
