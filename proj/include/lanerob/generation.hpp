#pragma once

#include <vector>

#include "lanerob/artifacts.hpp"
#include "lanerob/detectors.hpp"
#include "lanerob/objective.hpp"
#include "lanerob/scene.hpp"
#include "lanerob/simulator.hpp"

namespace lanerob {

/// Frames an attack is optimized on: the reference trace's first `generation_frames` poses,
/// each with a render cache restricted to the attack area.
class GenerationWindow {
 public:
  GenerationWindow(const Scenario& sc, const CameraModel& cam, const RoadArea& area)
      : scenario_(sc), cam_(cam), area_(area), benign_(sc.scene()) {
    if (sc.generation_frames <= 0) throw Error("generation window: no frames");
    const auto poses = reference_poses(sc, sc.generation_frames - 1);
    frames_.reserve(poses.size());
    for (const auto& p : poses) frames_.emplace_back(benign_, cam, p, area);
    std::vector<double> storage;
    ys_ = sample_rows(sc, cam, storage);
    erc_.ys = ys_;
    erc_.empty_value = 0.5;
  }

  const Scenario& scenario() const { return scenario_; }
  const CameraModel& camera() const { return cam_; }
  const RoadArea& area() const { return area_; }
  const std::vector<FrameCache>& frames() const { return frames_; }
  /// ERC settings used for attack losses: scenario y-samples, frames without lanes count as centred.
  const ErcOptions& erc() const { return erc_; }
  ErcOptions& erc() { return erc_; }

  Scene scene(const AttackArtifact& attack) const { return scenario_.scene(attack); }

  /// Multi-frame attack loss of `attack` against `det`.
  double loss(Detector& det, const AttackArtifact& attack, AttackDirection dir) const {
    const Scene sc = scene(attack);
    double sum = 0.0;
    for (std::size_t k = 0; k < frames_.size(); ++k) {
      const auto& f = frames_[k];
      const FrameContext ctx{&sc, &cam_, f.pose(), static_cast<int>(k)};
      const auto rep = det.detect(f.render_input(sc), &ctx);
      if (rep.family() != det.info().family) throw Error("detector emitted a family other than the declared one");
      sum += expected_road_center(rep, erc_);
    }
    return loss_from_erc(sum / static_cast<double>(frames_.size()), dir);
  }

 private:
  Scenario scenario_;
  CameraModel cam_;
  RoadArea area_;
  Scene benign_;
  std::vector<FrameCache> frames_;
  std::vector<double> ys_;
  ErcOptions erc_;
};

}  // namespace lanerob
