#pragma once

#include "psfm/core.hpp"
#include "psfm/graph.hpp"
#include "psfm/local_sfm.hpp"
#include "psfm/segmentation.hpp"

namespace psfm {

struct EnergyParams {
  double alpha_proj = 1.0;    // reprojection term trade-off
  double alpha_cont = 1.0;    // 3D continuity trade-off
  double alpha_orient = 0.1;  // orientation trade-off
  double w3 = 1.0;            // reprojection inner scalar
  double beta_spatial = 0.05; // 1/pixels, anchor-distance weight decay
  double beta_color = 5.0;    // per unit color, boundary weight decay
  double sigma_trunc = 0.5;   // scene units, continuity truncation
  double n_trunc = 0.5;       // orientation truncation, in (0, 2]
  int K = 16;

  void validate() const {
    if (alpha_proj < 0 || alpha_cont < 0 || alpha_orient < 0 || w3 < 0)
      fail(Err::InvariantViolation, "energy trade-offs must be non-negative");
    if (!(sigma_trunc > 0)) fail(Err::InvariantViolation, "sigma_trunc must be positive");
    if (!(n_trunc > 0) || n_trunc > 2) fail(Err::InvariantViolation, "n_trunc must be in (0,2]");
    if (!(beta_spatial > 0) || !(beta_color > 0))
      fail(Err::InvariantViolation, "betas must be positive");
  }
};

/// Per-superpixel geometry variables; the scale lives in SceneState::lambda.
struct NodeGeometry {
  Vec3 n = Vec3(0, 0, 1);
  double d = 1.0;
  Mat3 R = Mat3::Identity();
  Vec3 t_hat = Vec3(0, 0, 1);
};

/// Everything the energy terms read: partition, graphs, flow, intrinsics,
/// per-node geometry, and the scale vector.
struct SceneState {
  const SuperpixelPartition* part = nullptr;
  const SceneGraph* graph = nullptr;
  const DenseFlow* flow = nullptr;
  Intrinsics K;
  std::vector<NodeGeometry> geom;
  Eigen::VectorXd lambda;

  int size() const { return int(geom.size()); }
};

/// Backproject a unit-z ray onto the plane n . X = d (unit scale). Returns a
/// non-finite vector when the ray is parallel to the plane.
inline Vec3 lift_unit(const Vec3& ray, const Vec3& n, double d) {
  double denom = n.dot(ray);
  if (std::abs(denom) < 1e-12)
    return Vec3::Constant(std::numeric_limits<double>::infinity());
  return (d / denom) * ray;
}

struct EnergyBreakdown {
  double arap = 0, proj = 0, cont = 0, orient = 0;
  int proj_empty_nodes = 0;  // superpixels with no valid flow (contribute 0)
  double total(const EnergyParams& p) const {
    return arap + p.alpha_proj * proj + p.alpha_cont * cont + p.alpha_orient * orient;
  }
};

double e_arap(const SceneState& state);
double e_proj(const SceneState& state, const EnergyParams& params);
double e_cont(const SceneState& state, const EnergyParams& params);
double e_orient(const SceneState& state, const EnergyParams& params);
EnergyBreakdown energy_breakdown(const SceneState& state, const EnergyParams& params);
double total_energy(const SceneState& state, const EnergyParams& params);

/// Subgradient of the combined energy w.r.t. the scale vector, all other
/// variables held fixed. At kinks the zero branch is taken (sign(0) = 0).
Eigen::VectorXd grad_lambda(const SceneState& state, const EnergyParams& params);

/// Reprojection share of a single node under arbitrary geometry (used as the
/// refinement unary). Scale-free.
double eproj_node(const SuperpixelPartition& part, const DenseFlow& flow, const Intrinsics& K,
                  const EnergyParams& params, int node, const NodeGeometry& geom);

/// Caches every lambda-independent quantity so the scale solve can evaluate
/// energy and gradient cheaply. Geometry is frozen at construction.
class LambdaEnergy {
 public:
  LambdaEnergy(const SceneState& state, const EnergyParams& params);

  double value(const Eigen::VectorXd& lambda) const;
  Eigen::VectorXd grad(const Eigen::VectorXd& lambda) const;
  EnergyBreakdown breakdown(const Eigen::VectorXd& lambda) const;
  int size() const { return n_; }

 private:
  struct KnnTerm {
    int i, k;
    double w1;
    double rot_dist;  // ||R_i - R_k||_F, constant in lambda
    Vec3 ti, tk;      // translation directions
    Vec3 ai, ak;      // unit-scale anchor lifts
    Vec3 bi, bk;      // moved anchor lifts
  };
  struct ContPixel {
    int i, k;
    double w4;
    Vec3 ci, ck, ei, ek;
  };
  int n_ = 0;
  double sigma_ = 0;
  EnergyParams params_;
  std::vector<KnnTerm> knn_;
  std::vector<ContPixel> cont_;
  double proj_ = 0;    // scale-free
  double orient_ = 0;  // scale-free
  int proj_empty_ = 0;
};

}  // namespace psfm
