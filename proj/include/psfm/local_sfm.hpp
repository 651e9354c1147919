#pragma once

#include "psfm/core.hpp"

#include <random>
#include <span>

namespace psfm {

/// Rigid motion of one planar patch, split as rotation, unit translation
/// direction, and positive scale. The full translation is lambda * t_hat.
struct RigidMotion {
  Mat3 R = Mat3::Identity();
  Vec3 t_hat = Vec3(0, 0, 1);
  double lambda = 1.0;

  void validate(double tol = 1e-9) const;
};

/// Planar patch snapshot: unit normal, base depth d (so the plane equation is
/// n . X = lambda * d), and the 3D anchor/boundary points lifted at some
/// lambda. Stored points satisfy the plane equation.
struct PlanePatch {
  Vec3 n = Vec3(0, 0, 1);
  double d = 1.0;
  double lambda = 1.0;
  Vec3 anchor3d = Vec3(0, 0, 1);
  std::vector<Vec3> boundary3d;

  void validate(double rel_tol = 1e-6) const;
};

/// 3x3 plane-induced map between the two views, normalized to unit Frobenius
/// norm with non-negative trace.
struct Homography {
  Mat3 H = Mat3::Identity();

  static Homography from_matrix(const Mat3& m);
  /// Apply to a pixel and dehomogenize.
  Vec2 apply(const Vec2& p) const;
};

struct Corr {
  Vec2 a;  // reference pixel
  Vec2 b;  // next-frame pixel
};

/// Pixel map induced by a plane n . X = D moving as X' = R X + t:
///   K (R + t n^T / D) K^{-1}.
Mat3 plane_homography(const Intrinsics& K, const Mat3& R, const Vec3& t, const Vec3& n, double D);

struct RansacOptions {
  int iterations = 200;
  double inlier_px = 1.5;  // symmetric transfer / epipolar threshold
};

/// Normalized-DLT least-squares homography over all correspondences.
/// Throws DegenerateConfiguration for <4 or collinear points.
Homography fit_homography(std::span<const Corr> corrs);

/// RANSAC wrapper around fit_homography; refits on the best inlier set and
/// keeps whichever candidate has the lower mean symmetric transfer error.
Homography fit_homography_ransac(std::span<const Corr> corrs, std::mt19937_64& rng,
                                 const RansacOptions& opts = {});

struct MotionEstimate {
  Mat3 R = Mat3::Identity();
  Vec3 t_hat = Vec3(0, 0, 1);
  bool near_degenerate = false;  // translation direction unreliable (no parallax)
  int positive_depth = 0;        // cheirality votes for the chosen candidate
  int support = 0;               // correspondences used
};

/// Essential-matrix motion (normalized 8-point + RANSAC), decomposition
/// disambiguated by triangulating to positive depth in both views. When the
/// cheirality vote is indecisive, falls back to a rotation-only fit and flags
/// the translation near-degenerate. Throws InsufficientCorrespondences or,
/// when there is no motion signal at all, InsufficientParallax.
MotionEstimate estimate_motion(std::span<const Corr> corrs, const Intrinsics& K,
                               std::span<const Corr> neighbor_corrs, std::mt19937_64& rng,
                               const RansacOptions& opts = {});

struct PlaneEstimate {
  Vec3 n;
  double d_rel;
};

/// Solve K^{-1} H K = s (R - t_hat m^T) for the gauge s and m = n / d, then
/// return n = m/||m|| oriented so the anchor ray has positive plane depth and
/// d_rel = 1/||m||. Throws NumericallySingular when m vanishes (rotation-only
/// homography).
PlaneEstimate recover_normal_depth(const Homography& H, const Mat3& R, const Vec3& t_hat,
                                   const Intrinsics& K, const Vec2& anchor_px);

/// Backproject pixel (u,v) onto the plane n . X = lambda * d:
///   X = (lambda d / (n . K^{-1} p)) K^{-1} p.
/// Throws RayParallelToPlane when the denominator vanishes.
Vec3 backproject(const Vec2& px, const Vec3& n, double d, double lambda, const Intrinsics& K);

/// Lift a patch (anchor + boundary pixels) through its plane at the given
/// scale.
PlanePatch make_patch(const Vec2& anchor_px, std::span<const Vec2> boundary_px, const Vec3& n,
                      double d, double lambda, const Intrinsics& K);

/// Map all patch points by X' = R X + lambda t_hat and the normal by R n.
PlanePatch transform_patch(const PlanePatch& patch, const RigidMotion& m);

/// Depths of the point seen along rays r (frame 1) and r2 (frame 2) under
/// x2 = R x1 + t; least-squares on r*z1 - r2*z2 = -t.
std::pair<double, double> triangulate_depths(const Vec3& r, const Vec3& r2, const Mat3& R,
                                             const Vec3& t);

}  // namespace psfm
