#pragma once

// Rectification of a spherical-model image to a pinhole image.

#include <cmath>
#include <numbers>
#include <optional>

#include "sphcalib/camera_model.hpp"
#include "sphcalib/errors.hpp"
#include "sphcalib/warp.hpp"

namespace sphcalib {

/// Pinhole output: size plus exactly one of focal length or horizontal FoV.
struct TargetSpec {
  int width = 0;
  int height = 0;
  std::optional<double> focal_px;
  std::optional<double> hfov_rad;
};

/// Keeps the scale at the image center: the spherical projection has
/// derivative f / (1 + xi) on the optical axis, so that is the pinhole focal
/// that leaves the central pixels unchanged.
inline TargetSpec default_target(const Intrinsics& k) {
  return {static_cast<int>(std::lround(k.width)), static_cast<int>(std::lround(k.height)),
          k.focal_px / (1.0 + k.xi), std::nullopt};
}

inline Intrinsics target_intrinsics(const TargetSpec& t) {
  if (t.width <= 0 || t.height <= 0) throw Error(ErrorCode::kInvalidTarget, "target size must be positive");
  if (t.focal_px.has_value() == t.hfov_rad.has_value()) {
    throw Error(ErrorCode::kInvalidTarget, "give either a target focal length or a target FoV");
  }
  double f = 0.0;
  if (t.hfov_rad) {
    if (!(*t.hfov_rad > 0.0 && *t.hfov_rad < std::numbers::pi)) {
      throw Error(ErrorCode::kInvalidTarget, "a pinhole target needs a FoV in (0, pi)");
    }
    f = (t.width / 2.0) / std::tan(*t.hfov_rad / 2.0);
  } else {
    f = *t.focal_px;
    if (!(f > 0.0) || !std::isfinite(f)) throw Error(ErrorCode::kInvalidTarget, "target focal must be positive");
  }
  return Intrinsics::centered(f, 0.0, t.width, t.height);
}

/// Target pixel -> source pixel. Pixels whose ray misses the source image
/// are left unmapped.
struct UndistortMap {
  Intrinsics source;
  Intrinsics target;

  std::optional<SourcePoint> operator()(double u, double v) const {
    const Eigen::Vector3d ray((u - target.u0) / target.focal_px, (v - target.v0) / target.focal_px, 1.0);
    const auto p = try_project(ray, source);
    if (!p || p->u < 0.0 || p->v < 0.0 || p->u > source.width || p->v > source.height) return std::nullopt;
    return SourcePoint(p->u, p->v);
  }
};

inline Image undistort(const Image& src, const Intrinsics& intr, const TargetSpec& target, int threads = 0) {
  intr.validate();
  const Intrinsics t = target_intrinsics(target);
  return remap(src, target.width, target.height, UndistortMap{intr, t}, BorderMode::kClamp, threads);
}

}  // namespace sphcalib
