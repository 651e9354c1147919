#pragma once

#include "psfm/core.hpp"
#include "psfm/energy.hpp"
#include "psfm/local_sfm.hpp"

#include <string>

namespace psfm {

/// Ground-truth scene description. Patches are vertical strips of a folded
/// piecewise-planar surface; strips meet at vertical hinge lines.
struct SceneSpec {
  enum class Family { Rigid, Articulated };

  int n_patches = 2;
  Family family = Family::Articulated;
  int width = 160, height = 120;
  double focal = 120.0;
  double base_depth = 2.0;      // nominal surface depth
  double fold_deg = 8.0;        // zigzag fold tilt of the surface profile
  double hinge_deg = 0.0;       // 2-patch only: requested hinge angle (0 = derive from fold)
  double scale_ratio = 3.0;     // articulated: target max/min translation magnitude
  double base_speed = 0.08;     // rigid: translation magnitude
  Vec3 base_dir = Vec3(0.5, 0.25, 1.0);
  double base_rot_deg = 1.0;
  double flow_noise_sigma = 0.0;   // pixels
  double flow_outlier_frac = 0.0;
  uint64_t seed = 0;
};

struct PatchTruth {
  Vec3 n;              // unit, oriented away from the camera
  double d_rel;        // plane offset divided by lambda_raw
  Mat3 R;
  Vec3 t_hat;
  double lambda_raw;   // actual translation magnitude
  double lambda_true;  // simplex-normalized
  double plane_offset; // n . X for points on the patch (raw scale)
};

struct SyntheticScene {
  Intrinsics K;
  SceneSpec spec;
  std::vector<PatchTruth> patches;
  std::vector<int> assignment;  // per-pixel patch id, row-major
  DenseFlow flow;               // rendered analytically from the patch maps
  DepthMap depth1, depth2;
  ImageRGB ref_image, next_image;  // flat-shaded patch colors
  double arap_residual = 0;        // max anchor-distance violation, hinged pairs
  double arap_residual_all = 0;    // over all anchor pairs
  std::vector<Pixel> anchors;      // snapped centroids of the patch regions

  int patch_at(int x, int y) const { return assignment[size_t(y) * K.width + x]; }
};

/// Generate a ground-truth scene. The rigid family moves every patch with one
/// SE(3) motion; the articulated family chains hinge rotations whose angles
/// are chosen so inter-anchor distances of hinged pairs are preserved, and
/// scales the base translation to hit the requested translation-magnitude
/// ratio. Throws InfeasibleSpec when the requested configuration has no
/// solution.
SyntheticScene gen_scene(const SceneSpec& spec);

/// I.i.d. Gaussian perturbation plus uniform outliers; deterministic under
/// the seed.
DenseFlow corrupt_flow(const DenseFlow& flow, double noise_sigma, double outlier_frac,
                       uint64_t seed);

/// Scene bundle on disk: ref.png, next.png, flow.flo, gt_depth1.pfm,
/// gt_depth2.pfm, labels.png, intrinsics.json, scene.json.
void write_bundle(const SyntheticScene& scene, const std::string& dir);

struct BundleTruth {
  Intrinsics K;
  std::vector<PatchTruth> patches;
  double arap_residual = 0;
  uint64_t seed = 0;
};
BundleTruth load_bundle_truth(const std::string& dir);

}  // namespace psfm
