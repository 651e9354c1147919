#include "psfm/energy.hpp"

#include <cmath>

namespace psfm {

namespace {

inline double sgn(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

void check_state(const SceneState& s) {
  if (!s.part || !s.graph || !s.flow) fail(Err::InvariantViolation, "incomplete scene state");
  if (int(s.geom.size()) != s.part->count || s.lambda.size() != s.part->count)
    fail(Err::InvariantViolation, "scene state size mismatch");
}

}  // namespace

double eproj_node(const SuperpixelPartition& part, const DenseFlow& flow, const Intrinsics& K,
                  const EnergyParams& params, int node, const NodeGeometry& geom) {
  const Mat3 H = plane_homography(K, geom.R, geom.t_hat, geom.n, geom.d);
  double sum = 0;
  size_t used = 0;
  for (const Pixel& p : part.interiors[size_t(node)]) {
    size_t i = flow.idx(p.x, p.y);
    if (!flow.valid[i]) continue;
    Vec3 q = H * Vec3(p.x, p.y, 1.0);
    if (std::abs(q.z()) < 1e-12) return std::numeric_limits<double>::infinity();
    double du = p.x + flow.u[i] - q.x() / q.z();
    double dv = p.y + flow.v[i] - q.y() / q.z();
    sum += std::sqrt(du * du + dv * dv);
    ++used;
  }
  if (used == 0) return 0.0;
  return params.w3 * sum / double(used);
}

LambdaEnergy::LambdaEnergy(const SceneState& state, const EnergyParams& params) {
  check_state(state);
  n_ = state.size();
  sigma_ = params.sigma_trunc;
  params_ = params;

  const auto& geom = state.geom;
  std::vector<Vec3> a(n_), b(n_);
  for (int i = 0; i < n_; ++i) {
    const Pixel& ap = state.part->anchors[size_t(i)];
    a[size_t(i)] = lift_unit(state.K.ray(ap.x, ap.y), geom[size_t(i)].n, geom[size_t(i)].d);
    b[size_t(i)] = geom[size_t(i)].R * a[size_t(i)] + geom[size_t(i)].t_hat;
  }

  knn_.reserve(state.graph->knn.size());
  for (const KnnEdge& e : state.graph->knn) {
    KnnTerm t;
    t.i = e.i;
    t.k = e.k;
    t.w1 = e.w1;
    t.rot_dist = (geom[size_t(e.i)].R - geom[size_t(e.k)].R).norm();
    t.ti = geom[size_t(e.i)].t_hat;
    t.tk = geom[size_t(e.k)].t_hat;
    t.ai = a[size_t(e.i)];
    t.ak = a[size_t(e.k)];
    t.bi = b[size_t(e.i)];
    t.bk = b[size_t(e.k)];
    knn_.push_back(t);
  }

  for (const AdjEdge& e : state.graph->adjacency) {
    const NodeGeometry& gi = geom[size_t(e.i)];
    const NodeGeometry& gk = geom[size_t(e.k)];
    for (size_t p = 0; p < e.pixels.size(); ++p) {
      ContPixel c;
      c.i = e.i;
      c.k = e.k;
      c.w4 = e.w4[p];
      Vec3 ray = state.K.ray(e.pixels[p].x, e.pixels[p].y);
      c.ci = lift_unit(ray, gi.n, gi.d);
      c.ck = lift_unit(ray, gk.n, gk.d);
      c.ei = gi.R * c.ci + gi.t_hat;
      c.ek = gk.R * c.ck + gk.t_hat;
      cont_.push_back(c);
    }
    orient_ += std::min(std::abs(1.0 - gi.n.dot(gk.n)), params.n_trunc);
  }

  for (int i = 0; i < n_; ++i) {
    double ep = eproj_node(*state.part, *state.flow, state.K, params, i, geom[size_t(i)]);
    bool empty = true;
    for (const Pixel& p : state.part->interiors[size_t(i)])
      if (state.flow->valid[state.flow->idx(p.x, p.y)]) {
        empty = false;
        break;
      }
    if (empty) ++proj_empty_;
    proj_ += ep;
  }
}

EnergyBreakdown LambdaEnergy::breakdown(const Eigen::VectorXd& lambda) const {
  EnergyBreakdown out;
  out.proj = proj_;
  out.orient = orient_;
  out.proj_empty_nodes = proj_empty_;
  for (const KnnTerm& t : knn_) {
    double li = lambda(t.i), lk = lambda(t.k);
    double motion = (li * t.ti - lk * t.tk).norm();
    double d1 = (li * t.ai - lk * t.ak).norm();
    double d2 = (li * t.bi - lk * t.bk).norm();
    out.arap += t.w1 * (t.rot_dist + motion) + t.w1 * std::abs(d1 - d2);
  }
  for (const ContPixel& c : cont_) {
    double li = lambda(c.i), lk = lambda(c.k);
    double g1 = (li * c.ci - lk * c.ck).norm();
    double g2 = (li * c.ei - lk * c.ek).norm();
    out.cont += c.w4 * (g1 + std::min(g2, sigma_));
  }
  return out;
}

double LambdaEnergy::value(const Eigen::VectorXd& lambda) const {
  return breakdown(lambda).total(params_);
}

Eigen::VectorXd LambdaEnergy::grad(const Eigen::VectorXd& lambda) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n_);
  for (const KnnTerm& t : knn_) {
    double li = lambda(t.i), lk = lambda(t.k);
    Vec3 u = li * t.ti - lk * t.tk;
    double nu = u.norm();
    if (nu > 0) {
      g(t.i) += t.w1 * t.ti.dot(u) / nu;
      g(t.k) -= t.w1 * t.tk.dot(u) / nu;
    }
    Vec3 v1 = li * t.ai - lk * t.ak;
    Vec3 v2 = li * t.bi - lk * t.bk;
    double d1 = v1.norm(), d2 = v2.norm();
    double s = sgn(d1 - d2);
    if (s != 0) {
      if (d1 > 0) {
        g(t.i) += t.w1 * s * t.ai.dot(v1) / d1;
        g(t.k) -= t.w1 * s * t.ak.dot(v1) / d1;
      }
      if (d2 > 0) {
        g(t.i) -= t.w1 * s * t.bi.dot(v2) / d2;
        g(t.k) += t.w1 * s * t.bk.dot(v2) / d2;
      }
    }
  }
  const double ac = params_.alpha_cont;
  for (const ContPixel& c : cont_) {
    double li = lambda(c.i), lk = lambda(c.k);
    Vec3 v1 = li * c.ci - lk * c.ck;
    double g1 = v1.norm();
    if (g1 > 0) {
      g(c.i) += ac * c.w4 * c.ci.dot(v1) / g1;
      g(c.k) -= ac * c.w4 * c.ck.dot(v1) / g1;
    }
    Vec3 v2 = li * c.ei - lk * c.ek;
    double g2 = v2.norm();
    if (g2 > 0 && g2 < sigma_) {  // the truncated branch contributes zero
      g(c.i) += ac * c.w4 * c.ei.dot(v2) / g2;
      g(c.k) -= ac * c.w4 * c.ek.dot(v2) / g2;
    }
  }
  return g;
}

double e_arap(const SceneState& state) {
  EnergyParams p;  // arap ignores the trade-offs
  return LambdaEnergy(state, p).breakdown(state.lambda).arap;
}

double e_proj(const SceneState& state, const EnergyParams& params) {
  check_state(state);
  double sum = 0;
  for (int i = 0; i < state.size(); ++i)
    sum += eproj_node(*state.part, *state.flow, state.K, params, i, state.geom[size_t(i)]);
  return sum;
}

double e_cont(const SceneState& state, const EnergyParams& params) {
  return LambdaEnergy(state, params).breakdown(state.lambda).cont;
}

double e_orient(const SceneState& state, const EnergyParams& params) {
  check_state(state);
  double sum = 0;
  for (const AdjEdge& e : state.graph->adjacency)
    sum += std::min(std::abs(1.0 - state.geom[size_t(e.i)].n.dot(state.geom[size_t(e.k)].n)),
                    params.n_trunc);
  return sum;
}

EnergyBreakdown energy_breakdown(const SceneState& state, const EnergyParams& params) {
  return LambdaEnergy(state, params).breakdown(state.lambda);
}

double total_energy(const SceneState& state, const EnergyParams& params) {
  return energy_breakdown(state, params).total(params);
}

Eigen::VectorXd grad_lambda(const SceneState& state, const EnergyParams& params) {
  return LambdaEnergy(state, params).grad(state.lambda);
}

}  // namespace psfm
