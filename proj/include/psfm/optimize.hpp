#pragma once

#include "psfm/core.hpp"
#include "psfm/energy.hpp"

#include <random>

namespace psfm {

struct ContinuousConfig {
  int max_iters = 400;
  double grad_tol = 1e-8;     // projected-gradient-mapping norm
  double initial_step = 1.0;
  double armijo_c = 1e-4;
  double min_step = 1e-14;
  double rel_decrease_tol = 1e-10;
};

struct PerturbScales {
  double normal_rad = deg2rad(3.0);
  double rotation_rad = deg2rad(3.0);
  double translation_rad = deg2rad(3.0);
  double depth_rel = 0.05;  // log-normal sigma

  PerturbScales scaled(double f) const {
    return {normal_rad * f, rotation_rad * f, translation_rad * f, depth_rel * f};
  }
};

struct SolverConfig {
  int max_outer_iters = 8;
  int particles_per_node = 50;
  ContinuousConfig continuous;
  uint64_t seed = 0;
  PerturbScales perturb;
  double anneal = 0.5;            // perturbation decay per outer round
  double eps_floor_scale = 1e-6;  // lambda floor = eps_floor_scale / N
  bool resolve_scales_each_round = true;
  bool exact_message_passing = false;  // exhaustive joint enumeration (tiny problems)
  int message_passing_sweeps = 6;
  int greedy_sweeps = 3;  // ICM polish after message passing
  int threads = 1;

  void validate() const {
    if (particles_per_node < 1) fail(Err::InvariantViolation, "need at least one particle");
    if (!(continuous.grad_tol > 0) || !(continuous.min_step > 0))
      fail(Err::InvariantViolation, "tolerances must be positive");
    if (max_outer_iters < 0) fail(Err::InvariantViolation, "negative iteration count");
  }
};

/// lambda_i = 1/N with the last entry adjusted so the compensated sum is
/// exactly one.
Eigen::VectorXd init_scales(int n);

/// Euclidean projection onto { lambda : sum = 1, lambda_i >= floor }.
/// Idempotent.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v, double floor);

struct ContinuousTraceRow {
  int iter;
  double energy;
  double grad_mapping_norm;
  double step;
};

struct ScaleSolveResult {
  Eigen::VectorXd lambda;
  double energy = 0;
  double grad_mapping_norm = 0;
  int iterations = 0;
  bool converged = false;  // grad-mapping criterion met
  std::vector<ContinuousTraceRow> trace;
};

/// Projected gradient descent with Armijo backtracking over the floored
/// simplex; monotone in energy, starts from state.lambda.
ScaleSolveResult solve_scales(const SceneState& state, const EnergyParams& params,
                              const SolverConfig& cfg);

using Particle = NodeGeometry;

struct ParticleSet {
  std::vector<std::vector<Particle>> nodes;  // particle 0 is the incumbent
};

/// Incumbent plus Gaussian perturbations: axis-angle noise on R, tangent
/// noise on n, cone rotation on t_hat, log-normal factor on d. All particles
/// satisfy the unit/positivity invariants.
ParticleSet sample_particles(const SceneState& state, const PerturbScales& scales,
                             int particles_per_node, std::mt19937_64& rng);

struct RefineRound {
  int round = 0;
  double energy_before = 0;
  double energy_after = 0;
  bool accepted = false;
  int nodes_changed = 0;
};

struct RefineReport {
  std::vector<RefineRound> rounds;
  double final_energy = 0;
};

/// Outer refinement: per round, sample particles, select one per node by
/// sequential tree-reweighted message passing over the union of the K-NN and
/// adjacency graphs (unary = reprojection share, pairwise = the edge energy
/// shares), re-solve the scales, and accept only if the joint energy does not
/// increase. The energy trace is non-increasing by construction.
RefineReport refine(SceneState& state, const EnergyParams& params, const SolverConfig& cfg);

// Exposed for the test oracle: select a labeling by exhaustive enumeration /
// message passing over explicit tables.
struct MrfProblem {
  std::vector<std::vector<double>> unary;  // [node][label]
  struct Edge {
    int i, k;
    Eigen::MatrixXd cost;  // labels_i x labels_k
  };
  std::vector<Edge> edges;

  double labeling_energy(const std::vector<int>& labels) const;
};
std::vector<int> select_labels_trws(const MrfProblem& p, int sweeps, int greedy_sweeps);
std::vector<int> select_labels_exact(const MrfProblem& p);

}  // namespace psfm
