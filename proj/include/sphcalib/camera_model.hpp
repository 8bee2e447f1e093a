#pragma once

// Unified spherical camera model: a 3D point is normalized onto the unit
// sphere and re-projected onto the image plane from a center offset by xi
// along the optical axis. xi = 0 is the pinhole camera.
//
// Conventions used throughout the library:
//   camera frame  x right, y down, z forward (right handed)
//   pixel frame   u right, v down, origin at the top-left image corner
//   world frame   the zero-elevation (horizon) plane is y = 0, up is -y
//   normalized v  top of the image = +1, bottom = -1
// Rotations map world to camera: p_cam = R * p_world, R = Rz(roll) Rx(pitch).
// Positive pitch moves the horizon towards the top of the image.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "sphcalib/errors.hpp"

namespace sphcalib {

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
};

using SpherePoint = Eigen::Vector3d;

struct Orientation {
  double pitch_rad = 0.0;
  double roll_rad = 0.0;
};

/// Camera intrinsics. Image dimensions are kept as reals so that rescaled
/// intrinsics stay exact; rounding happens where a raster is allocated.
struct Intrinsics {
  double focal_px = 1.0;
  double xi = 0.0;
  double u0 = 0.5;
  double v0 = 0.5;
  double width = 1.0;
  double height = 1.0;

  /// Principal point at the image center, which every derived formula assumes.
  static Intrinsics centered(double focal_px, double xi, double width, double height) {
    Intrinsics k{focal_px, xi, width / 2.0, height / 2.0, width, height};
    k.validate();
    return k;
  }

  void validate() const {
    if (!(focal_px > 0.0) || !std::isfinite(focal_px)) {
      throw Error(ErrorCode::kInvalidArgument, "focal length must be positive");
    }
    if (!(xi >= 0.0 && xi <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "xi must lie in [0, 1]");
    }
    if (!(width > 0.0 && height > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "image size must be positive");
    }
  }
};

/// Horizon parameterized by its midpoint (normalized units) and its angle.
struct HorizonLine {
  double midpoint_units = 0.0;
  double roll_rad = 0.0;
};

inline Eigen::Matrix3d rotation_x(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix3d r;
  r << 1, 0, 0,
       0, c, -s,
       0, s, c;
  return r;
}

inline Eigen::Matrix3d rotation_y(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix3d r;
  r << c, 0, s,
       0, 1, 0,
       -s, 0, c;
  return r;
}

inline Eigen::Matrix3d rotation_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix3d r;
  r << c, -s, 0,
       s, c, 0,
       0, 0, 1;
  return r;
}

/// World-to-camera rotation Rz(roll) * Rx(pitch). Yaw is not observable and
/// is not part of the model.
inline Eigen::Matrix3d rotation_matrix(const Orientation& o) {
  return rotation_z(o.roll_rad) * rotation_x(o.pitch_rad);
}

// Core projection math, templated on the scalar so it can be reused with
// extended-precision or autodiff types.
namespace detail {

template <typename T>
bool project_normalized(T x, T y, T z, T xi, T& out_x, T& out_y) {
  using std::sqrt;
  const T alpha = sqrt(x * x + y * y + z * z);
  const T denom = xi * alpha + z;
  if (!(denom > T(1e-9) * alpha)) return false;
  out_x = x / denom;
  out_y = y / denom;
  return true;
}

template <typename T>
void backproject_normalized(T xn, T yn, T xi, T& x, T& y, T& z) {
  using std::sqrt;
  const T r2 = xn * xn + yn * yn;
  const T omega = (xi + sqrt(T(1) + (T(1) - xi * xi) * r2)) / (r2 + T(1));
  x = omega * xn;
  y = omega * yn;
  z = omega - xi;
}

}  // namespace detail

/// Projection without throwing; nullopt for directions outside the model's
/// forward image (xi * |p| + z <= 1e-9 * |p|).
inline std::optional<PixelPoint> try_project(const Eigen::Vector3d& p_cam, const Intrinsics& k) {
  double xn = 0.0, yn = 0.0;
  if (!detail::project_normalized(p_cam.x(), p_cam.y(), p_cam.z(), k.xi, xn, yn)) {
    return std::nullopt;
  }
  return PixelPoint{xn * k.focal_px + k.u0, yn * k.focal_px + k.v0};
}

inline PixelPoint project(const Eigen::Vector3d& p_cam, const Intrinsics& k) {
  if (auto p = try_project(p_cam, k)) return *p;
  throw Error(ErrorCode::kDegenerateProjection, "point lies outside the forward image of the model");
}

/// Lifts a pixel onto the unit sphere. Total for xi in [0, 1].
inline SpherePoint backproject(const PixelPoint& p, const Intrinsics& k) {
  SpherePoint s;
  detail::backproject_normalized((p.u - k.u0) / k.focal_px, (p.v - k.v0) / k.focal_px, k.xi,
                                 s.x(), s.y(), s.z());
  return s;
}

/// Horizontal field of view seen across the image width.
inline double effective_hfov(double focal_px, double xi, double u0) {
  if (!(focal_px > 0.0)) throw Error(ErrorCode::kInvalidArgument, "focal length must be positive");
  const double uh = -u0 / focal_px;
  const double uh2 = uh * uh;
  // Back-project the left border (uh, 0) onto the sphere; atan2 stays well
  // conditioned for narrow fields of view where acos(cos_half) does not.
  const double eta = (xi + std::sqrt(1.0 + (1.0 - xi * xi) * uh2)) / (uh2 + 1.0);
  return 2.0 * std::atan2(eta * -uh, eta - xi);
}

inline double effective_hfov(const Intrinsics& k) { return effective_hfov(k.focal_px, k.xi, k.u0); }

/// Focal length that gives the requested horizontal FoV for a fixed xi.
inline double focal_from_fov(double hfov, double xi, double u0) {
  if (!(hfov > 0.0 && hfov < std::numbers::pi)) {
    throw Error(ErrorCode::kInvalidFov, "horizontal field of view must lie in (0, pi)");
  }
  if (!(xi >= 0.0 && xi <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "xi must lie in [0, 1]");
  // Left image border (u = 0) images the sphere point (X, 0, Z).
  const double x = -std::sin(hfov / 2.0);
  const double z = std::cos(hfov / 2.0);
  return -u0 * (xi + z) / x;
}

/// Distortion that gives the requested horizontal FoV for a fixed focal.
inline double xi_from_fov_focal(double hfov, double focal_px, double u0) {
  if (!(hfov > 0.0 && hfov < std::numbers::pi)) {
    throw Error(ErrorCode::kInvalidFov, "horizontal field of view must lie in (0, pi)");
  }
  if (!(focal_px > 0.0)) throw Error(ErrorCode::kInvalidArgument, "focal length must be positive");
  const double x = -std::sin(hfov / 2.0);
  const double z = std::cos(hfov / 2.0);
  const double xi = (x * focal_px + u0 * z) / (-u0);
  constexpr double kSlack = 1e-12;
  if (xi < -kSlack || xi > 1.0 + kSlack) {
    throw Error(ErrorCode::kOutOfModelRange, "no xi in [0, 1] produces this field of view");
  }
  return std::clamp(xi, 0.0, 1.0);
}

/// Signed distance from the image center to the horizon, measured along the
/// roll-rotated up axis, in normalized units (top = +1).
inline double horizon_midpoint(const Orientation& o, const Intrinsics& k) {
  const double denom = k.xi + std::cos(o.pitch_rad);
  if (std::abs(denom) < 1e-12) {
    throw Error(ErrorCode::kHorizonAtInfinity, "horizon projects to infinity for this pitch");
  }
  return 2.0 * k.focal_px * std::sin(o.pitch_rad) / (k.height * denom);
}

/// Pixel row of the horizon midpoint for a roll-free camera.
inline double horizon_midpoint_px(double midpoint_units, const Intrinsics& k) {
  return k.v0 - midpoint_units * k.height / 2.0;
}

/// Inverse of horizon_midpoint in pitch. Solves
///   k (1 - xi) t^2 + 2 t - k (1 + xi) = 0,  t = tan(pitch / 2),
/// and keeps the root with |pitch| < pi / 2.
inline double pitch_from_midpoint(double midpoint_units, const Intrinsics& k) {
  const double kk = midpoint_units * k.height / (2.0 * k.focal_px);
  if (!std::isfinite(kk)) throw Error(ErrorCode::kNoValidPitch, "midpoint is not finite");
  if (kk == 0.0) return 0.0;
  const double a = kk * (1.0 - k.xi);
  const double c = -kk * (1.0 + k.xi);
  const double disc = 1.0 + kk * kk * (1.0 - k.xi * k.xi);  // (b^2 - 4ac) / 4 with b = 2
  const double q = -(1.0 + std::sqrt(disc));
  std::vector<double> roots;
  roots.push_back(c / q);
  if (a != 0.0) roots.push_back(q / a);
  std::optional<double> best;
  for (double t : roots) {
    if (!std::isfinite(t) || std::abs(t) >= 1.0) continue;
    const double pitch = 2.0 * std::atan(t);
    if (!best || std::abs(pitch) < std::abs(*best)) best = pitch;
  }
  if (!best) throw Error(ErrorCode::kNoValidPitch, "no pitch in (-pi/2, pi/2) yields this midpoint");
  return *best;
}

inline Intrinsics rescale_intrinsics(const Intrinsics& k, double s) {
  if (!(s > 0.0)) throw Error(ErrorCode::kInvalidArgument, "scale must be positive");
  return Intrinsics{k.focal_px / s, k.xi, k.u0 / s, k.v0 / s, k.width / s, k.height / s};
}

struct HorizonSample {
  double azimuth = 0.0;
  PixelPoint pixel;
};

/// Zero-elevation world direction at the given azimuth, mapped to the image.
inline std::optional<PixelPoint> horizon_point(double azimuth, const Eigen::Matrix3d& r,
                                               const Intrinsics& k) {
  const Eigen::Vector3d d_world(std::sin(azimuth), 0.0, std::cos(azimuth));
  return try_project(r * d_world, k);
}

inline std::vector<HorizonSample> horizon_samples(const Orientation& o, const Intrinsics& k,
                                                  int n_samples) {
  if (n_samples < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two horizon samples");
  const Eigen::Matrix3d r = rotation_matrix(o);
  std::vector<HorizonSample> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  const double step = 2.0 * std::numbers::pi / n_samples;
  for (int i = 0; i < n_samples; ++i) {
    const double az = -std::numbers::pi + (i + 0.5) * step;
    if (auto p = horizon_point(az, r, k)) out.push_back({az, *p});
  }
  if (out.empty()) throw Error(ErrorCode::kEmptyHorizon, "no horizon direction projects into the model");
  return out;
}

/// Image of the horizon as a polyline ordered by azimuth. Curved whenever xi > 0.
inline std::vector<PixelPoint> horizon_curve(const Orientation& o, const Intrinsics& k,
                                             int n_samples) {
  std::vector<PixelPoint> out;
  for (const auto& s : horizon_samples(o, k, n_samples)) out.push_back(s.pixel);
  return out;
}

/// v of the horizon crossings with the left (u = 0) and right (u = width)
/// image borders, in normalized units.
inline std::pair<double, double> horizon_endpoints(const Orientation& o, const Intrinsics& k,
                                                   int n_samples = 2048) {
  std::vector<HorizonSample> samples;
  try {
    samples = horizon_samples(o, k, n_samples);
  } catch (const Error& e) {
    throw Error(ErrorCode::kNoIntersection, e.what());
  }
  const Eigen::Matrix3d r = rotation_matrix(o);
  const double step = 2.0 * std::numbers::pi / n_samples;

  // Index of the sample facing the camera's forward direction.
  std::size_t center = 0;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (std::abs(samples[i].azimuth) < std::abs(samples[center].azimuth)) center = i;
  }

  auto crossing = [&](double u_border) -> double {
    auto refine = [&](double a_lo, double a_hi) {
      double f_lo = horizon_point(a_lo, r, k)->u - u_border;
      for (int it = 0; it < 200 && a_hi - a_lo > 1e-15; ++it) {
        const double mid = 0.5 * (a_lo + a_hi);
        const double f_mid = horizon_point(mid, r, k)->u - u_border;
        if ((f_mid <= 0.0) == (f_lo <= 0.0)) {
          a_lo = mid;
          f_lo = f_mid;
        } else {
          a_hi = mid;
        }
      }
      return horizon_point(0.5 * (a_lo + a_hi), r, k)->v;
    };
    auto bracket = [&](std::size_t i, std::size_t j) -> std::optional<double> {
      if (std::abs(samples[j].azimuth - samples[i].azimuth) > 1.5 * step) return std::nullopt;
      const double fi = samples[i].pixel.u - u_border;
      const double fj = samples[j].pixel.u - u_border;
      if (fi == 0.0) return samples[i].pixel.v;
      if ((fi < 0.0) != (fj < 0.0)) {
        return refine(std::min(samples[i].azimuth, samples[j].azimuth),
                      std::max(samples[i].azimuth, samples[j].azimuth));
      }
      return std::nullopt;
    };
    // Search outward from the forward direction so the visible crossing wins.
    for (std::size_t off = 0; off < samples.size(); ++off) {
      if (center + off + 1 < samples.size()) {
        if (auto v = bracket(center + off, center + off + 1)) return *v;
      }
      if (center >= off + 1) {
        if (auto v = bracket(center - off, center - off - 1)) return *v;
      }
    }
    // Crossing lies beyond the sampled span: extend the end tangent closest to the border.
    const auto& first = samples.front().pixel;
    const auto& last = samples.back().pixel;
    const bool use_first = std::abs(first.u - u_border) < std::abs(last.u - u_border);
    if (samples.size() < 2) throw Error(ErrorCode::kNoIntersection, "horizon is a single point");
    const PixelPoint& p0 = use_first ? samples[1].pixel : samples[samples.size() - 2].pixel;
    const PixelPoint& p1 = use_first ? first : last;
    const double du = p1.u - p0.u;
    if (std::abs(du) < 1e-12) throw Error(ErrorCode::kNoIntersection, "horizon never reaches the border");
    return p1.v + (u_border - p1.u) * (p1.v - p0.v) / du;
  };

  const double v_left = crossing(0.0);
  const double v_right = crossing(k.width);
  auto to_units = [&](double v) { return 2.0 * (k.v0 - v) / k.height; };
  return {to_units(v_left), to_units(v_right)};
}

/// Line through the roll-rotated midpoint with slope angle roll; exact image
/// of the horizon for pinhole cameras. Returns v (normalized) at pixel column u.
inline double horizon_line_v_at(const HorizonLine& line, const Intrinsics& k, double u) {
  const double d = line.midpoint_units * k.height / 2.0;
  const double s = std::sin(line.roll_rad), c = std::cos(line.roll_rad);
  // Foot of the perpendicular from the image center, then move along (c, s).
  const double pu = k.u0 + d * s;
  const double pv = k.v0 - d * c;
  const double v = pv + (u - pu) * s / c;
  return 2.0 * (k.v0 - v) / k.height;
}

/// The three coupled horizontal-FoV quantities for a principal point u0.
struct FovTriplet {
  double focal_px = 0.0;
  double hfov_rad = 0.0;
  double xi = 0.0;
};

/// Completes (focal, hfov, xi) from any two of them. With only a focal or
/// only a FoV, xi defaults to 0 (pinhole). All three must agree within 1e-9.
inline FovTriplet complete_fov_triplet(double u0, std::optional<double> focal_px, std::optional<double> hfov_rad,
                                       std::optional<double> xi) {
  if (!xi && (focal_px.has_value() != hfov_rad.has_value())) xi = 0.0;
  FovTriplet t;
  if (focal_px && hfov_rad && xi) {
    t = {*focal_px, *hfov_rad, *xi};
    if (std::abs(effective_hfov(t.focal_px, t.xi, u0) - t.hfov_rad) > 1e-9) {
      throw Error(ErrorCode::kInvalidArgument, "focal, FoV and xi are inconsistent");
    }
  } else if (focal_px && hfov_rad) {
    t = {*focal_px, *hfov_rad, xi_from_fov_focal(*hfov_rad, *focal_px, u0)};
  } else if (hfov_rad && xi) {
    t = {focal_from_fov(*hfov_rad, *xi, u0), *hfov_rad, *xi};
  } else if (focal_px && xi) {
    t = {*focal_px, effective_hfov(*focal_px, *xi, u0), *xi};
  } else {
    throw Error(ErrorCode::kInvalidArgument, "give a focal length or a FoV");
  }
  if (!(t.xi >= 0.0 && t.xi <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "xi must lie in [0, 1]");
  return t;
}

}  // namespace sphcalib
