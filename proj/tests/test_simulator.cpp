#include <gtest/gtest.h>

#include "lanerob/metrics.hpp"
#include "lanerob/simulator.hpp"

using namespace lanerob;

namespace {

const CameraModel& cam() {
  static const CameraModel c = CameraModel::pinhole({});
  return c;
}

// Reports the ego pair shifted `shift_px` (detector pixels) left of the oracle's lines.
class ShiftedOracle : public Detector {
 public:
  explicit ShiftedOracle(double shift_px) : oracle_(256, 144), shift_(shift_px) {
    info_ = oracle_.info();
    info_.name = "shifted";
  }
  const DetectorInfo& info() const override { return info_; }
  LaneRepresentation detect(const ImageFrame& in, const FrameContext* ctx) override {
    auto rep = oracle_.detect(in, ctx);
    for (auto& line : std::get<PointLanes>(rep.data).lines)
      for (auto& p : line) p.x -= shift_;
    return rep;
  }

 private:
  OracleDetector oracle_;
  DetectorInfo info_;
  double shift_;
};

class FailingDetector : public Detector {
 public:
  FailingDetector() : info_{"failing", LaneFamily::poly, 256, 144, false} {}
  const DetectorInfo& info() const override { return info_; }
  LaneRepresentation detect(const ImageFrame&, const FrameContext*) override { throw Error("adapter died"); }

 private:
  DetectorInfo info_;
};

class WrongFamily : public Detector {
 public:
  WrongFamily() : info_{"wrong", LaneFamily::anchors, 256, 144, false} {}
  const DetectorInfo& info() const override { return info_; }
  LaneRepresentation detect(const ImageFrame&, const FrameContext*) override {
    return {256, 144, PolyLanes{{{0.5}}, CoordUnits::normalized}};
  }

 private:
  DetectorInfo info_;
};

double max_abs_offset(const Trajectory& tr) {
  double m = 0.0;
  for (const auto& s : tr.samples) m = std::max(m, std::abs(s.lateral_offset));
  return m;
}

}  // namespace

TEST(Simulator, BenignCenteredStaysCentered) {
  Scenario sc;
  OracleDetector det(256, 144);
  const auto tr = run_scenario(sc, det, cam());
  ASSERT_TRUE(tr.valid) << tr.error;
  EXPECT_EQ(tr.samples.size(), 51u);
  EXPECT_NEAR(tr.samples.back().t, 2.5, 1e-12);
  EXPECT_LE(max_abs_offset(tr), 0.05);
  EXPECT_EQ(tr.actuation_substeps, 250);
}

TEST(Simulator, InitialOffsetDecays) {
  Scenario sc;
  sc.initial_offset = 0.5;
  OracleDetector det(256, 144);
  const auto tr = run_scenario(sc, det, cam());
  ASSERT_TRUE(tr.valid);
  EXPECT_LT(std::abs(tr.samples.back().lateral_offset), 0.2);
  // monotone until the offset is inside 0.2 m; pure pursuit then overshoots slightly
  std::size_t i = 1;
  for (; i < tr.samples.size() && std::abs(tr.samples[i - 1].lateral_offset) >= 0.2; ++i) {
    EXPECT_LE(std::abs(tr.samples[i].lateral_offset), std::abs(tr.samples[i - 1].lateral_offset) + 1e-9);
  }
  for (; i < tr.samples.size(); ++i) EXPECT_LT(std::abs(tr.samples[i].lateral_offset), 0.2);
  double t_in = 1e9;
  for (const auto& s : tr.samples) {
    if (std::abs(s.lateral_offset) < 0.2) {
      t_in = s.t;
      break;
    }
  }
  EXPECT_LE(t_in, 2.5);
  EXPECT_LE(tr.max_steer_step, deg_to_rad(0.25) + 1e-15);
}

TEST(Simulator, ForcedLeftLinesDriveLeft) {
  Scenario sc;
  ShiftedOracle det(40.0);
  OracleDetector oracle(256, 144);
  const auto attacked = run_scenario(sc, det, cam());
  const auto benign = run_scenario(sc, oracle, cam());
  const auto o = classify_outcome(lateral_deviation(attacked, benign), AttackDirection::left, {});
  EXPECT_TRUE(o.untargeted);
  EXPECT_TRUE(o.targeted);
  EXPECT_LT(o.max_deviation, 0.0);
}

TEST(Simulator, SteeringRateLimitHolds) {
  Scenario sc;
  ShiftedOracle det(-80.0);
  const auto tr = run_scenario(sc, det, cam());
  EXPECT_GT(tr.max_steer_step, 0.0);
  EXPECT_LE(tr.max_steer_step, deg_to_rad(0.25) + 1e-15);
  for (std::size_t i = 1; i < tr.samples.size(); ++i) {
    EXPECT_LE(std::abs(tr.samples[i].state.steering - tr.samples[i - 1].state.steering),
              5 * deg_to_rad(0.25) + 1e-12);
  }
}

TEST(Simulator, Reproducible) {
  Scenario sc;
  sc.initial_offset = 0.2;
  ClassicalDetector a(256, 144), b(256, 144);
  EXPECT_EQ(trajectory_csv(run_scenario(sc, a, cam())), trajectory_csv(run_scenario(sc, b, cam())));
}

TEST(Simulator, DetectorFailureMarksInvalid) {
  Scenario sc;
  FailingDetector det;
  const auto tr = run_scenario(sc, det, cam());
  EXPECT_FALSE(tr.valid);
  EXPECT_NE(tr.error.find("adapter died"), std::string::npos);
  WrongFamily wrong;
  EXPECT_FALSE(run_scenario(sc, wrong, cam()).valid);
}

TEST(Simulator, WarpModeTracksRenderMode) {
  Scenario sc;
  sc.initial_offset = 0.3;
  ClassicalDetector det(256, 144);
  const auto direct = run_scenario(sc, det, cam());
  sc.frame_source = FrameSource::warp;
  const auto warped = run_scenario(sc, det, cam());
  ASSERT_TRUE(warped.valid);
  for (std::size_t i = 0; i < direct.samples.size(); ++i) {
    EXPECT_NEAR(direct.samples[i].lateral_offset, warped.samples[i].lateral_offset, 0.1);
  }
}

TEST(Simulator, WarpAndRenderLinePositionsAgree) {
  Scenario sc;
  const auto poses = reference_poses(sc, 20);
  const Scene scene = sc.scene();
  // centre of the bright run closest to u0 on row v
  auto run_near = [](const ImageFrame& f, int v, double u0) {
    double best = 1e9, best_c = -1.0;
    int u = 0;
    while (u < f.width) {
      if (f.at(u, v)[0] < 150) {
        ++u;
        continue;
      }
      const int start = u;
      while (u < f.width && f.at(u, v)[0] >= 150) ++u;
      const double c = 0.5 * (start + u - 1);
      if (std::abs(c - u0) < best) {
        best = std::abs(c - u0);
        best_c = c;
      }
    }
    return best_c;
  };
  for (int k : {5, 10, 20}) {
    Pose moved = poses[k];
    moved.y += 0.25;  // simulated pose drifts right of the reference
    const auto warped = synthesize_frame(cam(), render_scene(scene, cam(), poses[k]), relative_pose(poses[k], moved));
    const auto direct = render_scene(scene, cam(), moved);
    for (int v : {150, 170, 210}) {
      const double range = cam().back_project({240.0, v + 0.0}).x;
      for (double d : {-1.8 - 0.25, 1.8 - 0.25}) {
        const double u0 = cam().project({range, d}).x;
        const double a = run_near(direct, v, u0);
        ASSERT_GE(a, 0.0);
        EXPECT_NEAR(a, u0, 3.0);
        EXPECT_NEAR(run_near(warped, v, u0), a, 2.0) << "k=" << k << " v=" << v << " d=" << d;
      }
    }
  }
}

TEST(Simulator, ReferenceTrajectoryKeepsOffset) {
  Scenario sc;
  sc.initial_offset = -0.3;
  sc.road.curvature = 0.002;
  const auto ref = reference_trajectory(sc);
  for (const auto& s : ref.samples) EXPECT_NEAR(s.lateral_offset, -0.3, 1e-6);
  EXPECT_NEAR(ref.samples.back().t, 2.5, 1e-12);
}

TEST(Simulator, SpeedTraceReplayed) {
  Scenario sc;
  sc.speed_trace = {{0.0, 20.0}, {2.5, 30.0}};
  OracleDetector det(256, 144);
  const auto tr = run_scenario(sc, det, cam());
  EXPECT_NEAR(tr.samples.front().state.speed, 20.0, 1e-9);
  EXPECT_NEAR(tr.samples.back().state.speed, 30.0, 1e-9);
}

TEST(Simulator, SubstepsMustDivide) {
  Scenario sc;
  sc.actuate_rate = 90.0;
  sc.detect_rate = 20.0;
  EXPECT_THROW(sc.substeps(), Error);
}
