#include <gtest/gtest.h>

#include <random>

#include "lanerob/scene.hpp"

using namespace lanerob;

namespace {

const CameraModel& cam() {
  static const CameraModel c = CameraModel::pinhole({});
  return c;
}

bool is_gray(const std::uint8_t* p) { return p[0] == p[1] && p[1] == p[2]; }

// Columns of the bright runs in row v (centroids).
std::vector<double> bright_runs(const ImageFrame& f, int v) {
  std::vector<double> out;
  int u = 0;
  while (u < f.width) {
    if (f.at(u, v)[0] < 150) {
      ++u;
      continue;
    }
    double s = 0.0, w = 0.0;
    while (u < f.width && f.at(u, v)[0] >= 150) {
      s += u * (f.at(u, v)[0] - 92.0);
      w += f.at(u, v)[0] - 92.0;
      ++u;
    }
    out.push_back(s / w);
  }
  return out;
}

RoadPatch random_patch(std::uint64_t seed) {
  auto p = RoadPatch::make(7.0, 0.0, 5.4, 36.0, 0.15, 80.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-120.0, 200.0);
  for (std::size_t k = 0; k < p.cells(); ++k) {
    if (k % 2) {
      p.mask[k] = 1;
      p.delta[k] = u(rng);
    }
  }
  return p;
}

}  // namespace

TEST(Render, CenteredLinesSymmetric) {
  const auto f = render_scene(Scene{}, cam(), {});
  for (int v : {150, 190, 240}) {
    const auto runs = bright_runs(f, v);
    double left = -1, right = -1;
    for (double c : runs) {
      if (c < 240 && (left < 0 || c > left)) left = c;
      if (c > 240 && (right < 0 || c < right)) right = c;
    }
    ASSERT_GE(left, 0.0);
    ASSERT_GE(right, 0.0);
    EXPECT_NEAR(240.0 - left, right - 240.0, 1.0) << "row " << v;
  }
}

TEST(Render, RoadPixelsAreGray) {
  const auto f = render_scene(Scene{}, cam(), {});
  for (int v = 140; v < 270; v += 7) {
    EXPECT_TRUE(is_gray(f.at(240, v)));
  }
}

TEST(Render, ZeroPatchOnlyChangesPatchQuad) {
  Scene sc;
  const auto benign = render_scene(sc, cam(), {});
  sc.patch = RoadPatch::make(7.0, 0.0, 3.6, 36.0, 0.15, 80.0);
  const auto with = render_scene(sc, cam(), {});
  const auto area = sc.patch->area();
  int changed = 0;
  for (int v = 0; v < benign.height; ++v) {
    for (int u = 0; u < benign.width; ++u) {
      if (std::equal(benign.at(u, v), benign.at(u, v) + 3, with.at(u, v))) continue;
      ++changed;
      // pixel (or a 1 px neighbour) must see the patch area
      bool inside = false;
      for (int dv = -1; dv <= 1 && !inside; ++dv) {
        for (int du = -1; du <= 1 && !inside; ++du) {
          const auto g = cam().try_back_project({u + du + 0.0, v + dv + 0.0});
          inside = g && g->x >= area.s_lo - 0.5 && g->x <= area.s_hi + 0.5 && g->y >= area.d_lo - 0.1 &&
                   g->y <= area.d_hi + 0.1;
        }
      }
      ASSERT_TRUE(inside) << u << "," << v;
    }
  }
  EXPECT_GT(changed, 1000);
}

TEST(Render, PatchIsGrayScale) {
  Scene sc;
  sc.patch = random_patch(3);
  const auto f = render_scene(sc, cam(), {});
  for (int v = 110; v < 270; ++v) {
    for (int u = 0; u < f.width; ++u) {
      const auto g = cam().try_back_project({u + 0.0, v + 0.0});
      if (g && sc.patch->area().contains(g->x, g->y)) {
        ASSERT_TRUE(is_gray(f.at(u, v)));
      }
    }
  }
}

TEST(Render, PatchCellValueClamped) {
  Scene sc;
  sc.patch = RoadPatch::make(7.0, 0.0, 5.4, 36.0, 0.15, 80.0);
  sc.patch->overdraw_lanes = true;
  for (auto& d : sc.patch->delta) d = 500.0;
  const auto f = render_scene(sc, cam(), {});
  const Vec2 q = cam().project({20.0, 0.4});
  EXPECT_EQ(f.at(static_cast<int>(q.x), static_cast<int>(q.y))[0], 255);
}

TEST(Render, DrawnLineEndpointsProject) {
  Scene sc;
  sc.line = DrawnLine{{10.0, 0.9}, {30.0, -0.9}, 0.12, 230.0};
  const auto f = render_scene(sc, cam(), {});
  const auto benign = render_scene(Scene{}, cam(), {});
  // beyond ~25 m the 12 cm line covers about one pixel and is anti-aliased below the run threshold
  for (double s : {10.3, 15.0, 20.0, 24.0}) {
    const double d = 0.9 - 1.8 * (s - 10.0) / 20.0;
    const Vec2 q = cam().project({s, d});
    const int v = static_cast<int>(std::lround(q.y));
    double best = 1e9;
    for (double c : bright_runs(f, v)) best = std::min(best, std::abs(c - q.x));
    EXPECT_LE(best, 1.0) << "s=" << s;
    EXPECT_GT(f.at(static_cast<int>(std::lround(q.x)), v)[0], benign.at(static_cast<int>(std::lround(q.x)), v)[0]);
  }
}

TEST(FrameCache, MatchesFullRender) {
  Scene benign;
  const Pose pose{0.0, 0.2, 0.01};
  auto patch = random_patch(9);
  FrameCache cache(benign, cam(), pose, patch.area());
  EXPECT_EQ(cache.benign_input(), adapt_crop(cam(), render_scene(benign, cam(), pose)));
  Scene attacked = benign;
  attacked.patch = patch;
  EXPECT_EQ(cache.render_input(attacked), adapt_crop(cam(), render_scene(attacked, cam(), pose)));
  Scene lined = benign;
  lined.line = DrawnLine{{8.0, -2.0}, {40.0, 2.0}, 0.05, 230.0};
  EXPECT_EQ(cache.render_camera(lined), render_scene(lined, cam(), pose));
  EXPECT_EQ(cache.render_input(benign), cache.benign_input());
}

TEST(Road, PoseAndLocateRoundTrip) {
  RoadGeometry road;
  road.curvature = 0.002;
  for (double s : {0.0, 30.0, 120.0}) {
    for (double d : {-1.0, 0.0, 0.4}) {
      const Pose p = road.pose_at(s, d);
      const auto rp = road.locate({p.x, p.y});
      EXPECT_NEAR(rp.s, s, 1e-6);
      EXPECT_NEAR(rp.d, d, 1e-6);
    }
  }
  const auto offs = road.line_offsets();
  const std::vector<double> expect{-5.4, -1.8, 1.8, 5.4};
  ASSERT_EQ(offs.size(), expect.size());
  for (std::size_t i = 0; i < offs.size(); ++i) EXPECT_NEAR(offs[i], expect[i], 1e-12);
}
