#include <gtest/gtest.h>

#include "lanerob/attack_line.hpp"
#include "lanerob/attack_patch.hpp"

using namespace lanerob;

namespace {

const CameraModel& cam() {
  static const CameraModel c = CameraModel::pinhole({});
  return c;
}

// Reads the drawn line from the frame context: ERC = 0.5 + mean lateral offset / 10.
class LineFollower : public Detector {
 public:
  const DetectorInfo& info() const override { return info_; }
  LaneRepresentation detect(const ImageFrame& input, const FrameContext* ctx) override {
    check_input(input);
    double erc = 0.5;
    if (ctx && ctx->scene && ctx->scene->line) {
      const auto& l = *ctx->scene->line;
      erc += 0.5 * (l.start.y + l.end.y) / 10.0;
    }
    return {256, 144, PolyLanes{{{erc}}, CoordUnits::normalized}};
  }

 private:
  DetectorInfo info_{"follower", LaneFamily::poly, 256, 144, false};
};

Scenario quick() {
  Scenario sc;
  sc.generation_frames = 3;
  return sc;
}

RoadArea area_of(const Scenario& sc) { return make_scenario_patch(sc, 5.4, 36.0).area(); }

}  // namespace

TEST(LineAttack, SearchSpaceCoversArea) {
  const RoadArea a{7, 43, -2.7, 2.7};
  const auto b = line_search_space(a, 0.012, 0.12);
  ASSERT_EQ(b.size(), 5u);
  EXPECT_EQ(b[0].lo, 7.0);
  EXPECT_EQ(b[3].hi, 2.7);
  EXPECT_EQ(b[4].lo, 0.012);
  const auto l = line_from_params({8, -1, 20, 1, 0.05}, 230);
  EXPECT_EQ(l.start, (Vec2{8, -1}));
  EXPECT_EQ(l.end, (Vec2{20, 1}));
  EXPECT_EQ(l.color, 230.0);
}

TEST(LineAttack, ZeroIterationsHasNoBest) {
  const auto sc = quick();
  GenerationWindow win(sc, cam(), area_of(sc));
  LineFollower det;
  LineAttackOptions o;
  o.iterations = 0;
  EXPECT_THROW(optimize_line(win, det, AttackDirection::right, o, 1), Error);
}

TEST(LineAttack, FindsLineAtTheTargetedEdge) {
  const auto sc = quick();
  const auto area = area_of(sc);
  GenerationWindow win(sc, cam(), area);
  LineFollower det;
  LineAttackOptions o;
  o.iterations = 80;
  for (auto dir : {AttackDirection::right, AttackDirection::left}) {
    const auto r = optimize_line(win, det, dir, o, 3);
    const double mean_d = 0.5 * (r.line.start.y + r.line.end.y);
    if (dir == AttackDirection::right) {
      EXPECT_GT(mean_d, 1.8);
    } else {
      EXPECT_LT(mean_d, -1.8);
    }
    EXPECT_LT(r.best_loss, r.benign_loss);
    EXPECT_NO_THROW(r.line.validate(&area, o.min_width, o.max_width));
  }
}

TEST(LineAttack, BestHistoryIsNonIncreasing) {
  const auto sc = quick();
  GenerationWindow win(sc, cam(), area_of(sc));
  LineFollower det;
  LineAttackOptions o;
  o.iterations = 40;
  std::vector<double> seen;
  o.on_evaluate = [&](int, const DrawnLine&, double loss) { seen.push_back(loss); };
  const auto r = optimize_line(win, det, AttackDirection::right, o, 9);
  ASSERT_EQ(r.best_history.size(), 40u);
  ASSERT_EQ(seen.size(), 40u);
  double best = seen[0];
  for (std::size_t i = 0; i < seen.size(); ++i) {
    best = std::min(best, seen[i]);
    EXPECT_EQ(r.best_history[i], best);
    if (i > 0) {
      EXPECT_LE(r.best_history[i], r.best_history[i - 1]);
    }
  }
  EXPECT_EQ(r.best_loss, r.best_history.back());
}

TEST(LineAttack, Reproducible) {
  const auto sc = quick();
  GenerationWindow win(sc, cam(), area_of(sc));
  LineFollower det;
  LineAttackOptions o;
  o.iterations = 30;
  const auto a = optimize_line(win, det, AttackDirection::left, o, 21);
  const auto b = optimize_line(win, det, AttackDirection::left, o, 21);
  const auto c = optimize_line(win, det, AttackDirection::left, o, 22);
  EXPECT_EQ(a.best_history, b.best_history);
  EXPECT_EQ(a.line.start, b.line.start);
  EXPECT_EQ(a.line.width, b.line.width);
  EXPECT_NE(a.best_history, c.best_history);
}

TEST(LineAttack, ClassicalDetectorIsPulledLeft) {
  Scenario sc;
  GenerationWindow win(sc, cam(), area_of(sc));
  ClassicalDetector det(256, 144);
  LineAttackOptions o;
  o.iterations = 30;
  const auto r = optimize_line(win, det, AttackDirection::left, o, 5);
  EXPECT_LT(r.best_loss, r.benign_loss - 0.01);
}
