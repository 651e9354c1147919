#include "psfm/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace psfm {

// ---------------------------------------------------------------------------
// Scale initialization and simplex projection

Eigen::VectorXd init_scales(int n) {
  if (n < 1) fail(Err::DegenerateRequest, "need at least one superpixel");
  Eigen::VectorXd l = Eigen::VectorXd::Constant(n, 1.0 / n);
  if (n > 1) {
    // Kahan sum of the first n-1 entries; the last entry absorbs the rounding
    // so the total is exactly one.
    double s = 0, comp = 0;
    for (int i = 0; i < n - 1; ++i) {
      double y = l(i) - comp;
      double t = s + y;
      comp = (t - s) - y;
      s = t;
    }
    l(n - 1) = 1.0 - s;
  }
  return l;
}

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v, double floor) {
  const int n = int(v.size());
  if (n < 1) fail(Err::DegenerateRequest, "empty vector");
  if (floor < 0 || floor * n >= 1.0) fail(Err::InvariantViolation, "floor out of range");

  // Shift so the problem becomes projection onto { w >= 0, sum w = T }.
  Eigen::VectorXd w = v.array() - floor;
  const double target = 1.0 - floor * n;

  // theta solves sum max(w_i - theta, 0) = target; the sum is monotone
  // decreasing in theta, so bisect, then refine theta exactly on the
  // identified support set.
  double lo = w.minCoeff() - target, hi = w.maxCoeff();
  auto excess = [&](double theta) {
    double s = 0;
    for (int i = 0; i < n; ++i) s += std::max(w(i) - theta, 0.0);
    return s - target;
  };
  for (int it = 0; it < 100; ++it) {
    double mid = 0.5 * (lo + hi);
    if (excess(mid) > 0)
      lo = mid;
    else
      hi = mid;
  }
  double theta = 0.5 * (lo + hi);
  // Exact theta from the identified support set: Kahan-sum the supported
  // entries so feasible inputs project to themselves bit-for-bit.
  int support = 0;
  double sum = 0, comp = 0;
  for (int i = 0; i < n; ++i)
    if (w(i) > theta) {
      ++support;
      double y = w(i) - comp;
      double t = sum + y;
      comp = (t - sum) - y;
      sum = t;
    }
  if (support == 0) {
    // All mass below floor: distribute evenly.
    return Eigen::VectorXd::Constant(n, 1.0 / n);
  }
  theta = (sum - target) / support;

  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) out(i) = std::max(w(i) - theta, 0.0) + floor;
  return out;
}

// ---------------------------------------------------------------------------
// Continuous scale solve

ScaleSolveResult solve_scales(const SceneState& state, const EnergyParams& params,
                              const SolverConfig& cfg) {
  cfg.validate();
  const int n = state.size();
  const double floor = cfg.eps_floor_scale / std::max(1, n);
  const ContinuousConfig& cc = cfg.continuous;

  LambdaEnergy energy(state, params);
  ScaleSolveResult res;
  res.lambda = project_simplex(state.lambda, floor);
  res.energy = energy.value(res.lambda);
  if (!std::isfinite(res.energy))
    fail(Err::NonFiniteEnergy, "energy non-finite at the initial scales");

  for (int it = 0; it < cc.max_iters; ++it) {
    Eigen::VectorXd g = energy.grad(res.lambda);
    Eigen::VectorXd mapped = res.lambda - project_simplex(res.lambda - g, floor);
    res.grad_mapping_norm = mapped.norm();
    res.trace.push_back({it, res.energy, res.grad_mapping_norm, 0.0});
    if (res.grad_mapping_norm < cc.grad_tol) {
      res.converged = true;
      break;
    }

    double step = cc.initial_step;
    bool moved = false;
    while (step >= cc.min_step) {
      Eigen::VectorXd cand = project_simplex(res.lambda - step * g, floor);
      double e = energy.value(cand);
      double guard = cc.armijo_c / std::max(step, 1e-12) * (cand - res.lambda).squaredNorm();
      if (std::isfinite(e) && e <= res.energy - guard) {
        double decrease = res.energy - e;
        res.lambda = std::move(cand);
        res.energy = e;
        res.trace.back().step = step;
        moved = true;
        if (decrease < cc.rel_decrease_tol * (1.0 + std::abs(res.energy))) {
          res.iterations = it + 1;
          Eigen::VectorXd g2 = energy.grad(res.lambda);
          res.grad_mapping_norm =
              (res.lambda - project_simplex(res.lambda - g2, floor)).norm();
          res.converged = res.grad_mapping_norm < cc.grad_tol;
          return res;
        }
        break;
      }
      step *= 0.5;
    }
    res.iterations = it + 1;
    if (!moved) break;  // no descent step found at the smallest step size
  }
  return res;
}

// ---------------------------------------------------------------------------
// Particle sampling

namespace {

Mat3 axis_angle(const Vec3& w) {
  double a = w.norm();
  if (a < 1e-14) return Mat3::Identity();
  return Eigen::AngleAxisd(a, w / a).toRotationMatrix();
}

/// Deterministic orthonormal tangent basis of a unit vector.
void tangent_basis(const Vec3& n, Vec3& u, Vec3& v) {
  Vec3 ref = std::abs(n.z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
  u = n.cross(ref).normalized();
  v = n.cross(u);
}

}  // namespace

ParticleSet sample_particles(const SceneState& state, const PerturbScales& scales,
                             int particles_per_node, std::mt19937_64& rng) {
  ParticleSet set;
  set.nodes.resize(state.geom.size());
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (size_t i = 0; i < state.geom.size(); ++i) {
    const NodeGeometry& inc = state.geom[i];
    auto& list = set.nodes[i];
    list.reserve(size_t(particles_per_node));
    list.push_back(inc);
    for (int p = 1; p < particles_per_node; ++p) {
      NodeGeometry g = inc;
      if (scales.rotation_rad > 0) {
        Vec3 w(gauss(rng), gauss(rng), gauss(rng));
        g.R = inc.R * axis_angle(w * scales.rotation_rad);
      }
      if (scales.normal_rad > 0) {
        Vec3 u, v;
        tangent_basis(inc.n, u, v);
        g.n = (inc.n + scales.normal_rad * (gauss(rng) * u + gauss(rng) * v)).normalized();
      }
      if (scales.translation_rad > 0) {
        Vec3 w(gauss(rng), gauss(rng), gauss(rng));
        g.t_hat = (axis_angle(w * scales.translation_rad) * inc.t_hat).normalized();
      }
      if (scales.depth_rel > 0) g.d = inc.d * std::exp(scales.depth_rel * gauss(rng));
      list.push_back(g);
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Discrete selection

double MrfProblem::labeling_energy(const std::vector<int>& labels) const {
  double e = 0;
  for (size_t i = 0; i < unary.size(); ++i) e += unary[i][size_t(labels[i])];
  for (const Edge& edge : edges) e += edge.cost(labels[size_t(edge.i)], labels[size_t(edge.k)]);
  return e;
}

std::vector<int> select_labels_exact(const MrfProblem& p) {
  const int n = int(p.unary.size());
  size_t total = 1;
  for (const auto& u : p.unary) {
    total *= u.size();
    if (total > (size_t(1) << 22))
      fail(Err::DegenerateRequest, "exhaustive enumeration too large");
  }
  std::vector<int> cur(n, 0), best(n, 0);
  double best_e = p.labeling_energy(cur);
  while (true) {
    int pos = n - 1;
    while (pos >= 0) {
      if (++cur[size_t(pos)] < int(p.unary[size_t(pos)].size())) break;
      cur[size_t(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    double e = p.labeling_energy(cur);
    if (e < best_e) {
      best_e = e;
      best = cur;
    }
  }
  return best;
}

std::vector<int> select_labels_trws(const MrfProblem& p, int sweeps, int greedy_sweeps) {
  const int n = int(p.unary.size());
  std::vector<std::vector<std::pair<int, int>>> nbrs(n);  // (edge index, other node)
  for (size_t e = 0; e < p.edges.size(); ++e) {
    nbrs[size_t(p.edges[e].i)].push_back({int(e), p.edges[e].k});
    nbrs[size_t(p.edges[e].k)].push_back({int(e), p.edges[e].i});
  }
  // Messages m[e][0]: i -> k, m[e][1]: k -> i.
  std::vector<std::array<Eigen::VectorXd, 2>> msg(p.edges.size());
  for (size_t e = 0; e < p.edges.size(); ++e) {
    msg[e][0] = Eigen::VectorXd::Zero(long(p.unary[size_t(p.edges[e].k)].size()));
    msg[e][1] = Eigen::VectorXd::Zero(long(p.unary[size_t(p.edges[e].i)].size()));
  }

  auto belief = [&](int i) {
    Eigen::VectorXd b(long(p.unary[size_t(i)].size()));
    for (long a = 0; a < b.size(); ++a) b(a) = p.unary[size_t(i)][size_t(a)];
    for (auto [e, k] : nbrs[size_t(i)]) b += p.edges[size_t(e)].i == i ? msg[size_t(e)][1] : msg[size_t(e)][0];
    return b;
  };

  auto pass = [&](bool forward) {
    for (int step = 0; step < n; ++step) {
      int i = forward ? step : n - 1 - step;
      if (nbrs[size_t(i)].empty()) continue;
      Eigen::VectorXd b = belief(i);
      double gamma = 1.0 / double(nbrs[size_t(i)].size());
      for (auto [e, k] : nbrs[size_t(i)]) {
        bool to_later = forward ? k > i : k < i;
        if (!to_later) continue;
        const MrfProblem::Edge& edge = p.edges[size_t(e)];
        bool i_is_row = edge.i == i;
        const Eigen::VectorXd& incoming = i_is_row ? msg[size_t(e)][1] : msg[size_t(e)][0];
        Eigen::VectorXd& outgoing = i_is_row ? msg[size_t(e)][0] : msg[size_t(e)][1];
        for (long bk = 0; bk < outgoing.size(); ++bk) {
          double best = std::numeric_limits<double>::infinity();
          for (long a = 0; a < b.size(); ++a) {
            double cost = i_is_row ? edge.cost(a, bk) : edge.cost(bk, a);
            best = std::min(best, gamma * b(a) - incoming(a) + cost);
          }
          outgoing(bk) = best;
        }
        outgoing.array() -= outgoing.minCoeff();  // normalize for stability
      }
    }
  };
  for (int s = 0; s < std::max(1, sweeps); ++s) {
    pass(true);
    pass(false);
  }

  // Greedy extraction in node order given the final messages.
  std::vector<int> labels(n, 0);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd b(long(p.unary[size_t(i)].size()));
    for (long a = 0; a < b.size(); ++a) b(a) = p.unary[size_t(i)][size_t(a)];
    for (auto [e, k] : nbrs[size_t(i)]) {
      const MrfProblem::Edge& edge = p.edges[size_t(e)];
      bool i_is_row = edge.i == i;
      if (k < i) {
        for (long a = 0; a < b.size(); ++a)
          b(a) += i_is_row ? edge.cost(a, labels[size_t(k)]) : edge.cost(labels[size_t(k)], a);
      } else {
        b += i_is_row ? msg[size_t(e)][1] : msg[size_t(e)][0];
      }
    }
    long arg = 0;
    b.minCoeff(&arg);
    labels[size_t(i)] = int(arg);
  }

  // ICM polish: single-node moves are monotone in the true joint energy.
  for (int s = 0; s < greedy_sweeps; ++s) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd b(long(p.unary[size_t(i)].size()));
      for (long a = 0; a < b.size(); ++a) b(a) = p.unary[size_t(i)][size_t(a)];
      for (auto [e, k] : nbrs[size_t(i)]) {
        const MrfProblem::Edge& edge = p.edges[size_t(e)];
        bool i_is_row = edge.i == i;
        for (long a = 0; a < b.size(); ++a)
          b(a) += i_is_row ? edge.cost(a, labels[size_t(k)]) : edge.cost(labels[size_t(k)], a);
      }
      long arg = 0;
      b.minCoeff(&arg);
      if (int(arg) != labels[size_t(i)]) {
        labels[size_t(i)] = int(arg);
        changed = true;
      }
    }
    if (!changed) break;
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Refinement

namespace {

/// Pairwise energy share between nodes i and k for a given particle pair:
/// every directed K-NN and adjacency contribution between the two, evaluated
/// at fixed lambda.
struct EdgeWork {
  int i, k;
  double w1_ik = 0, w1_ki = 0;  // K-NN weights per direction (0 = absent)
  const AdjEdge* adj_ik = nullptr;
  const AdjEdge* adj_ki = nullptr;
};

double knn_dir_term(double w1, const NodeGeometry& gi, const NodeGeometry& gk, const Vec3& ai,
                    const Vec3& ak, double li, double lk) {
  Vec3 bi = gi.R * ai + gi.t_hat;
  Vec3 bk = gk.R * ak + gk.t_hat;
  double d1 = (li * ai - lk * ak).norm();
  double d2 = (li * bi - lk * bk).norm();
  return w1 * ((gi.R - gk.R).norm() + (li * gi.t_hat - lk * gk.t_hat).norm()) +
         w1 * std::abs(d1 - d2);
}

}  // namespace

RefineReport refine(SceneState& state, const EnergyParams& params, const SolverConfig& cfg) {
  cfg.validate();
  const int n = state.size();
  RefineReport report;
  double current = total_energy(state, params);
  report.final_energy = current;

  // Union graph: one undirected work item per node pair that appears in the
  // K-NN or the adjacency edge set.
  std::vector<EdgeWork> works;
  auto find_work = [&](int i, int k) -> EdgeWork& {
    int a = std::min(i, k), b = std::max(i, k);
    for (EdgeWork& w : works)
      if (w.i == a && w.k == b) return w;
    works.push_back({a, b});
    return works.back();
  };
  for (const KnnEdge& e : state.graph->knn) {
    EdgeWork& w = find_work(e.i, e.k);
    (e.i == w.i ? w.w1_ik : w.w1_ki) = e.w1;
  }
  for (const AdjEdge& e : state.graph->adjacency) {
    EdgeWork& w = find_work(e.i, e.k);
    (e.i == w.i ? w.adj_ik : w.adj_ki) = &e;
  }
  std::stable_sort(works.begin(), works.end(), [](const EdgeWork& a, const EdgeWork& b) {
    return a.i != b.i ? a.i < b.i : a.k < b.k;
  });

  std::vector<Vec3> anchor_rays(size_t(n));
  for (int i = 0; i < n; ++i) {
    const Pixel& ap = state.part->anchors[size_t(i)];
    anchor_rays[size_t(i)] = state.K.ray(ap.x, ap.y);
  }
  // Boundary pixel rays per adjacency edge, aligned with edge pixel order.
  std::vector<std::vector<Vec3>> adj_rays(state.graph->adjacency.size());
  for (size_t e = 0; e < state.graph->adjacency.size(); ++e) {
    const AdjEdge& edge = state.graph->adjacency[e];
    adj_rays[e].reserve(edge.pixels.size());
    for (const Pixel& p : edge.pixels) adj_rays[e].push_back(state.K.ray(p.x, p.y));
  }
  auto adj_index = [&](const AdjEdge* e) { return size_t(e - state.graph->adjacency.data()); };

  for (int round = 0; round < cfg.max_outer_iters; ++round) {
    PerturbScales scales = cfg.perturb.scaled(std::pow(cfg.anneal, round));
    std::mt19937_64 rng(mix_seed(cfg.seed, 0x5eed0000ULL + uint64_t(round)));
    ParticleSet particles = sample_particles(state, scales, cfg.particles_per_node, rng);
    const int P = cfg.particles_per_node;

    MrfProblem problem;
    problem.unary.assign(size_t(n), std::vector<double>(size_t(P), 0.0));
    parallel_for(size_t(n), cfg.threads, [&](size_t i) {
      for (int a = 0; a < P; ++a)
        problem.unary[i][size_t(a)] =
            params.alpha_proj *
            eproj_node(*state.part, *state.flow, state.K, params, int(i), particles.nodes[i][size_t(a)]);
    });

    problem.edges.resize(works.size());
    parallel_for(works.size(), cfg.threads, [&](size_t wi) {
      const EdgeWork& w = works[wi];
      const auto& pi = particles.nodes[size_t(w.i)];
      const auto& pk = particles.nodes[size_t(w.k)];
      const double li = state.lambda(w.i), lk = state.lambda(w.k);

      // Per-particle lifts of everything this edge touches.
      std::vector<Vec3> ai(size_t(P)), ak(size_t(P));
      for (int a = 0; a < P; ++a) {
        ai[size_t(a)] = lift_unit(anchor_rays[size_t(w.i)], pi[size_t(a)].n, pi[size_t(a)].d);
        ak[size_t(a)] = lift_unit(anchor_rays[size_t(w.k)], pk[size_t(a)].n, pk[size_t(a)].d);
      }
      struct Lift {
        std::vector<Vec3> c, e;  // scaled by the node's lambda
      };
      auto lift_pixels = [&](const std::vector<Vec3>& rays, const NodeGeometry& g, double lam) {
        Lift out;
        out.c.reserve(rays.size());
        out.e.reserve(rays.size());
        for (const Vec3& r : rays) {
          Vec3 c = lam * lift_unit(r, g.n, g.d);
          out.c.push_back(c);
          out.e.push_back(g.R * c + lam * g.t_hat);
        }
        return out;
      };
      std::vector<Lift> lifts_ik_i(size_t(w.adj_ik ? P : 0)), lifts_ik_k(size_t(w.adj_ik ? P : 0));
      std::vector<Lift> lifts_ki_i(size_t(w.adj_ki ? P : 0)), lifts_ki_k(size_t(w.adj_ki ? P : 0));
      if (w.adj_ik) {
        const auto& rays = adj_rays[adj_index(w.adj_ik)];
        for (int a = 0; a < P; ++a) {
          lifts_ik_i[size_t(a)] = lift_pixels(rays, pi[size_t(a)], li);
          lifts_ik_k[size_t(a)] = lift_pixels(rays, pk[size_t(a)], lk);
        }
      }
      if (w.adj_ki) {
        const auto& rays = adj_rays[adj_index(w.adj_ki)];
        for (int a = 0; a < P; ++a) {
          lifts_ki_i[size_t(a)] = lift_pixels(rays, pi[size_t(a)], li);
          lifts_ki_k[size_t(a)] = lift_pixels(rays, pk[size_t(a)], lk);
        }
      }

      Eigen::MatrixXd cost(P, P);
      for (int a = 0; a < P; ++a) {
        for (int b = 0; b < P; ++b) {
          double e = 0;
          if (w.w1_ik > 0)
            e += knn_dir_term(w.w1_ik, pi[size_t(a)], pk[size_t(b)], ai[size_t(a)], ak[size_t(b)], li, lk);
          if (w.w1_ki > 0)
            e += knn_dir_term(w.w1_ki, pk[size_t(b)], pi[size_t(a)], ak[size_t(b)], ai[size_t(a)], lk, li);
          if (w.adj_ik || w.adj_ki) {
            double cont = 0;
            if (w.adj_ik) {
              const auto& wa = w.adj_ik->w4;
              const Lift& Li = lifts_ik_i[size_t(a)];
              const Lift& Lk = lifts_ik_k[size_t(b)];
              for (size_t px = 0; px < wa.size(); ++px)
                cont += wa[px] * ((Li.c[px] - Lk.c[px]).norm() +
                                  std::min((Li.e[px] - Lk.e[px]).norm(), params.sigma_trunc));
            }
            if (w.adj_ki) {
              const auto& wa = w.adj_ki->w4;
              const Lift& Lk = lifts_ki_k[size_t(b)];
              const Lift& Li = lifts_ki_i[size_t(a)];
              for (size_t px = 0; px < wa.size(); ++px)
                cont += wa[px] * ((Lk.c[px] - Li.c[px]).norm() +
                                  std::min((Lk.e[px] - Li.e[px]).norm(), params.sigma_trunc));
            }
            e += params.alpha_cont * cont;
            double orient =
                std::min(std::abs(1.0 - pi[size_t(a)].n.dot(pk[size_t(b)].n)), params.n_trunc);
            e += params.alpha_orient * orient * ((w.adj_ik != nullptr) + (w.adj_ki != nullptr));
          }
          cost(a, b) = e;
        }
      }
      problem.edges[wi] = {w.i, w.k, std::move(cost)};
    });

    std::vector<int> labels =
        (cfg.exact_message_passing && n <= 8)
            ? select_labels_exact(problem)
            : select_labels_trws(problem, cfg.message_passing_sweeps, cfg.greedy_sweeps);

    // Never take a relabeling that is jointly worse than the incumbent.
    std::vector<int> incumbent(size_t(n), 0);
    if (problem.labeling_energy(labels) > problem.labeling_energy(incumbent)) labels = incumbent;

    SceneState cand = state;
    int changed = 0;
    for (int i = 0; i < n; ++i) {
      if (labels[size_t(i)] != 0) ++changed;
      cand.geom[size_t(i)] = particles.nodes[size_t(i)][size_t(labels[size_t(i)])];
    }
    if (cfg.resolve_scales_each_round) {
      ScaleSolveResult s = solve_scales(cand, params, cfg);
      cand.lambda = s.lambda;
    }
    double cand_energy = total_energy(cand, params);

    RefineRound row;
    row.round = round;
    row.energy_before = current;
    row.accepted = std::isfinite(cand_energy) && cand_energy <= current;
    if (row.accepted) {
      state = std::move(cand);
      row.nodes_changed = changed;
      current = cand_energy;
    }
    row.energy_after = current;
    report.rounds.push_back(row);

    double improvement = row.energy_before - row.energy_after;
    if (improvement <= 1e-12 * (1.0 + std::abs(current))) break;
  }
  report.final_energy = current;
  return report;
}

}  // namespace psfm
