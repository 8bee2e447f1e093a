#include "sphcalib/undistort.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "test_support.hpp"

namespace sphcalib {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Planes through the camera center; each images a straight line in a pinhole
// view. Near-vertical lines first, then near-horizontal ones.
const std::vector<Eigen::Vector3d> kLinePlanes{
    {1.0, 0.1, -0.3}, {1.0, -0.2, 0.45}, {0.1, 1.0, -0.35}, {-0.15, 1.0, 0.2}};

// Soft step across the plane with normal n. The profile is odd about the
// plane, so the 0.5 level lies exactly on the imaged line wherever it is
// sampled and however the resampling blurs it.
auto soft_edge(const Eigen::Vector3d& n, double width_rad) {
  const Eigen::Vector3d nn = n.normalized();
  return [nn, width_rad](const Eigen::Vector3d& d) {
    return static_cast<float>(0.5 + 0.5 * std::tanh(d.normalized().dot(nn) / width_rad));
  };
}

float smooth_scene(const Eigen::Vector3d& d) {
  const Eigen::Vector3d u = d.normalized();
  return static_cast<float>(0.5 + 0.2 * std::sin(3.0 * u.x()) * std::cos(2.0 * u.y()) + 0.1 * u.z());
}

TEST(DefaultTarget, PreservesCenterScale) {
  const auto t0 = default_target(Intrinsics::centered(500, 0.0, 640, 480));
  EXPECT_EQ(*t0.focal_px, 500.0);
  EXPECT_EQ(t0.width, 640);
  EXPECT_EQ(t0.height, 480);
  EXPECT_EQ(*default_target(Intrinsics::centered(500, 1.0, 640, 480)).focal_px, 250.0);
}

TEST(TargetIntrinsics, Validation) {
  EXPECT_NEAR(target_intrinsics({224, 224, std::nullopt, 90 * kDeg}).focal_px, 112.0, 1e-12);
  for (double h : {std::numbers::pi, 4.0, 0.0}) {
    try {
      target_intrinsics({224, 224, std::nullopt, h});
      FAIL() << h;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidTarget);
    }
  }
  EXPECT_THROW(target_intrinsics({224, 224, 100.0, 1.0}), Error);
  EXPECT_THROW(target_intrinsics({224, 224, std::nullopt, std::nullopt}), Error);
  EXPECT_THROW(target_intrinsics({0, 224, 100.0, std::nullopt}), Error);
}

TEST(Undistort, PinholeIdentityWithin16BitQuantization) {
  Image src(97, 61, 3);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> q(0, 65535);
  for (auto& p : src.pixels) p = q(rng) / 65535.0f;
  const Intrinsics k = Intrinsics::centered(80.0, 0.0, 97, 61);
  const Image out = undistort(src, k, default_target(k));
  for (std::size_t i = 0; i < src.pixels.size(); ++i) {
    ASSERT_NEAR(out.pixels[i], src.pixels[i], 1.0 / 65535);
  }
}

TEST(Undistort, StraightensLinesAtStrongDistortion) {
  const Intrinsics k = Intrinsics::centered(400.0, 0.9, 1024, 1024);
  const TargetSpec target = default_target(k);
  for (std::size_t i = 0; i < kLinePlanes.size(); ++i) {
    const bool vertical = i < 2;
    // About 1.5 px of transition on the optical axis of the distorted image.
    const Image distorted = testing::render_scene(k, 1024, 1024, soft_edge(kLinePlanes[i], 1.5 * 1.9 / 400.0));
    const auto curved = testing::edge_crossings(distorted, vertical, 8);
    ASSERT_GT(curved.size(), 500u);
    // The distorted edge is clearly curved, so the check below is not vacuous.
    EXPECT_GT(testing::fit_line_tls(curved).max_residual, 5.0) << i;

    const Image rectified = undistort(distorted, k, target);
    const auto pts = testing::edge_crossings(rectified, vertical, 8);
    ASSERT_GT(pts.size(), 800u) << i;
    EXPECT_LT(testing::fit_line_tls(pts).max_residual, 0.5) << i;
  }
}

TEST(Undistort, MatchesPinholeRenderAwayFromBorder) {
  const Intrinsics k = Intrinsics::centered(400.0, 0.9, 1024, 1024);
  const TargetSpec target = default_target(k);
  const Intrinsics kt = target_intrinsics(target);
  const Image distorted = testing::render_scene(k, 1024, 1024, smooth_scene);
  const Image pinhole = testing::render_scene(kt, target.width, target.height, smooth_scene);
  const Image rectified = undistort(distorted, k, target);
  const int bx = target.width / 20, by = target.height / 20;
  double se = 0.0;
  std::size_t n = 0;
  for (int v = by; v < target.height - by; ++v) {
    for (int u = bx; u < target.width - bx; ++u) {
      const double d = rectified.at(u, v) - pinhole.at(u, v);
      se += d * d;
      ++n;
    }
  }
  const double psnr = 10.0 * std::log10(1.0 / (se / n));
  EXPECT_GT(psnr, 35.0);
}

TEST(Undistort, CenterPatchKeepsScale) {
  const Intrinsics k = Intrinsics::centered(300.0, 0.7, 640, 480);
  const Image src = testing::render_scene(k, 640, 480, smooth_scene);
  const Image out = undistort(src, k, default_target(k));
  for (int v = 239; v <= 241; ++v) {
    for (int u = 319; u <= 321; ++u) EXPECT_NEAR(out.at(u, v), src.at(u, v), 1e-3);
  }
}

TEST(Undistort, WideFisheyeOperatingPoint) {
  const double f = focal_from_fov(145 * kDeg, 0.93, 256.0);
  const Intrinsics k = Intrinsics::centered(f, 0.93, 512, 384);
  const Image src = testing::render_scene(k, 512, 384, smooth_scene);
  const Image out = undistort(src, k, {512, 384, std::nullopt, 100 * kDeg});
  EXPECT_EQ(out.width, 512);
  // Every pixel of a 100 degree target lies inside the 145 degree source.
  for (float p : out.pixels) ASSERT_GT(p, 0.0f);
}

TEST(Undistort, OutOfSourcePixelsAreBlack) {
  const Intrinsics k = Intrinsics::centered(200.0, 0.0, 100, 100);
  const Image src(100, 100, 1, 1.0f);
  const Image out = undistort(src, k, {300, 300, 200.0, std::nullopt});
  EXPECT_EQ(out.at(0, 0), 0.0f);
  EXPECT_EQ(out.at(150, 150), 1.0f);
}

}  // namespace
}  // namespace sphcalib
