#include "psfm/local_sfm.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace psfm {

void RigidMotion::validate(double tol) const {
  if ((R.transpose() * R - Mat3::Identity()).norm() > tol || std::abs(R.determinant() - 1.0) > tol)
    fail(Err::InvariantViolation, "R is not a rotation");
  if (std::abs(t_hat.norm() - 1.0) > tol)
    fail(Err::InvariantViolation, "translation direction is not unit length");
  if (!(lambda > 0)) fail(Err::InvariantViolation, "scale must be positive");
}

void PlanePatch::validate(double rel_tol) const {
  if (std::abs(n.norm() - 1.0) > 1e-9) fail(Err::InvariantViolation, "normal is not unit length");
  if (!(d > 0) || !(lambda > 0)) fail(Err::InvariantViolation, "plane depth/scale must be positive");
  const double target = lambda * d;
  auto on_plane = [&](const Vec3& x) { return std::abs(n.dot(x) - target) <= rel_tol * std::abs(target); };
  if (!on_plane(anchor3d)) fail(Err::InvariantViolation, "anchor off the plane");
  for (const Vec3& x : boundary3d)
    if (!on_plane(x)) fail(Err::InvariantViolation, "boundary point off the plane");
}

Homography Homography::from_matrix(const Mat3& m) {
  double norm = m.norm();
  if (!(norm > 0) || !std::isfinite(norm)) fail(Err::DegenerateConfiguration, "zero homography");
  Mat3 h = m / norm;
  if (h.trace() < 0) h = -h;
  if (std::abs(h.determinant()) < 1e-15) fail(Err::DegenerateConfiguration, "singular homography");
  return Homography{h};
}

Vec2 Homography::apply(const Vec2& p) const {
  Vec3 q = H * Vec3(p.x(), p.y(), 1.0);
  return Vec2(q.x() / q.z(), q.y() / q.z());
}

Mat3 plane_homography(const Intrinsics& K, const Mat3& R, const Vec3& t, const Vec3& n, double D) {
  return K.K() * (R + t * n.transpose() / D) * K.Kinv();
}

// ---------------------------------------------------------------------------
// Homography fitting

namespace {

/// Hartley normalization: translate to the centroid, scale mean distance to
/// sqrt(2).
Mat3 normalizing_transform(std::span<const Corr> corrs, bool second) {
  Vec2 mean = Vec2::Zero();
  for (const Corr& c : corrs) mean += second ? c.b : c.a;
  mean /= double(corrs.size());
  double dist = 0;
  for (const Corr& c : corrs) dist += ((second ? c.b : c.a) - mean).norm();
  dist /= double(corrs.size());
  double s = dist > 1e-12 ? std::sqrt(2.0) / dist : 1.0;
  Mat3 t = Mat3::Identity();
  t(0, 0) = t(1, 1) = s;
  t(0, 2) = -s * mean.x();
  t(1, 2) = -s * mean.y();
  return t;
}

bool points_collinear(std::span<const Corr> corrs) {
  Vec2 mean = Vec2::Zero();
  for (const Corr& c : corrs) mean += c.a;
  mean /= double(corrs.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const Corr& c : corrs) {
    Vec2 d = c.a - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  return eig.eigenvalues()(0) <= 1e-9 * std::max(1.0, eig.eigenvalues()(1));
}

double symmetric_transfer(const Homography& h, const Corr& c) {
  Mat3 inv = h.H.inverse();
  Vec3 fwd = h.H * Vec3(c.a.x(), c.a.y(), 1.0);
  Vec3 bwd = inv * Vec3(c.b.x(), c.b.y(), 1.0);
  if (std::abs(fwd.z()) < 1e-12 || std::abs(bwd.z()) < 1e-12)
    return std::numeric_limits<double>::infinity();
  double e1 = (Vec2(fwd.x() / fwd.z(), fwd.y() / fwd.z()) - c.b).norm();
  double e2 = (Vec2(bwd.x() / bwd.z(), bwd.y() / bwd.z()) - c.a).norm();
  return 0.5 * (e1 + e2);
}

Homography fit_homography_subset(std::span<const Corr> corrs, std::span<const int> idx) {
  std::vector<Corr> sub;
  sub.reserve(idx.size());
  for (int i : idx) sub.push_back(corrs[size_t(i)]);
  return fit_homography(sub);
}

}  // namespace

Homography fit_homography(std::span<const Corr> corrs) {
  if (corrs.size() < 4)
    fail(Err::DegenerateConfiguration, "need at least 4 correspondences for a homography");
  if (points_collinear(corrs)) fail(Err::DegenerateConfiguration, "collinear correspondences");

  Mat3 ta = normalizing_transform(corrs, false);
  Mat3 tb = normalizing_transform(corrs, true);
  Eigen::MatrixXd A(2 * corrs.size(), 9);
  for (size_t i = 0; i < corrs.size(); ++i) {
    Vec3 p = ta * Vec3(corrs[i].a.x(), corrs[i].a.y(), 1.0);
    Vec3 q = tb * Vec3(corrs[i].b.x(), corrs[i].b.y(), 1.0);
    A.row(2 * i) << 0, 0, 0, -q.z() * p.transpose(), q.y() * p.transpose();
    A.row(2 * i + 1) << q.z() * p.transpose(), 0, 0, 0, -q.x() * p.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  Eigen::Matrix<double, 9, 1> hv = svd.matrixV().col(8);
  Mat3 hn;
  hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
  return Homography::from_matrix(tb.inverse() * hn * ta);
}

Homography fit_homography_ransac(std::span<const Corr> corrs, std::mt19937_64& rng,
                                 const RansacOptions& opts) {
  if (corrs.size() < 4)
    fail(Err::DegenerateConfiguration, "need at least 4 correspondences for a homography");
  const size_t n = corrs.size();

  auto score = [&](const Homography& h, std::vector<int>* inliers) {
    double total = 0;
    size_t cnt = 0;
    for (size_t i = 0; i < n; ++i) {
      double e = symmetric_transfer(h, corrs[i]);
      if (e <= opts.inlier_px) {
        if (inliers) inliers->push_back(int(i));
        total += e;
        ++cnt;
      }
    }
    return cnt == 0 ? std::numeric_limits<double>::infinity() : total / double(cnt);
  };

  std::vector<int> best_inliers;
  std::uniform_int_distribution<size_t> pick(0, n - 1);
  for (int it = 0; it < opts.iterations; ++it) {
    int idx[4];
    for (int j = 0; j < 4; ++j) {
      bool fresh;
      do {
        idx[j] = int(pick(rng));
        fresh = true;
        for (int t = 0; t < j; ++t) fresh &= idx[t] != idx[j];
      } while (!fresh);
    }
    Homography h;
    try {
      h = fit_homography_subset(corrs, idx);
    } catch (const Error&) {
      continue;
    }
    std::vector<int> inl;
    score(h, &inl);
    if (inl.size() > best_inliers.size()) best_inliers = std::move(inl);
  }

  // Candidates: full least squares, and the refit on RANSAC inliers.
  Homography best = fit_homography(corrs);
  double best_err = score(best, nullptr);
  if (best_inliers.size() >= 4) {
    try {
      Homography refit = fit_homography_subset(corrs, best_inliers);
      double err = score(refit, nullptr);
      if (err < best_err) {
        best = refit;
        best_err = err;
      }
    } catch (const Error&) {
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Essential-matrix motion

std::pair<double, double> triangulate_depths(const Vec3& r, const Vec3& r2, const Mat3& R,
                                             const Vec3& t) {
  Eigen::Matrix<double, 3, 2> A;
  A.col(0) = R * r;
  A.col(1) = -r2;
  Eigen::Vector2d z = A.colPivHouseholderQr().solve(-t);
  return {z(0), z(1)};
}

namespace {

Mat3 eight_point(const std::vector<Vec3>& ra, const std::vector<Vec3>& rb,
                 std::span<const int> idx) {
  Eigen::MatrixXd A(idx.size(), 9);
  for (size_t i = 0; i < idx.size(); ++i) {
    const Vec3& p = ra[size_t(idx[i])];
    const Vec3& q = rb[size_t(idx[i])];
    A.row(i) << q.x() * p.x(), q.x() * p.y(), q.x() * p.z(), q.y() * p.x(), q.y() * p.y(),
        q.y() * p.z(), q.z() * p.x(), q.z() * p.y(), q.z() * p.z();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  Eigen::Matrix<double, 9, 1> ev = svd.matrixV().col(8);
  Mat3 E;
  E << ev(0), ev(1), ev(2), ev(3), ev(4), ev(5), ev(6), ev(7), ev(8);
  // Project onto the essential manifold (equal singular values, rank 2).
  Eigen::JacobiSVD<Mat3> esvd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return esvd.matrixU() * Eigen::DiagonalMatrix<double, 3>(1, 1, 0) *
         esvd.matrixV().transpose();
}

double symmetric_epipolar_px(const Mat3& F, const Corr& c) {
  Vec3 p(c.a.x(), c.a.y(), 1.0), q(c.b.x(), c.b.y(), 1.0);
  Vec3 l2 = F * p;
  Vec3 l1 = F.transpose() * q;
  double num = std::abs(q.dot(l2));
  double d2 = std::hypot(l2.x(), l2.y());
  double d1 = std::hypot(l1.x(), l1.y());
  if (d1 < 1e-15 || d2 < 1e-15) return std::numeric_limits<double>::infinity();
  return 0.5 * (num / d2 + num / d1);
}

struct Candidate {
  Mat3 R;
  Vec3 t;
  int votes = 0;
};

/// Best rotation aligning the unit ray bundles (Kabsch).
Mat3 fit_rotation_only(const std::vector<Vec3>& ra, const std::vector<Vec3>& rb) {
  Mat3 M = Mat3::Zero();
  for (size_t i = 0; i < ra.size(); ++i) M += rb[i].normalized() * ra[i].normalized().transpose();
  Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1 : 1;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

}  // namespace

MotionEstimate estimate_motion(std::span<const Corr> corrs, const Intrinsics& K,
                               std::span<const Corr> neighbor_corrs, std::mt19937_64& rng,
                               const RansacOptions& opts) {
  std::vector<Corr> all(corrs.begin(), corrs.end());
  if (all.size() < 8) all.insert(all.end(), neighbor_corrs.begin(), neighbor_corrs.end());
  if (all.size() < 8)
    fail(Err::InsufficientCorrespondences, "need at least 8 correspondences, have " +
                                               std::to_string(all.size()));
  const size_t n = all.size();

  double flow_mag = 0;
  for (const Corr& c : all) flow_mag = std::max(flow_mag, (c.b - c.a).norm());
  if (flow_mag < 1e-9) fail(Err::InsufficientParallax, "no motion signal in the flow");

  const Mat3 kinv = K.Kinv();
  std::vector<Vec3> ra(n), rb(n);
  for (size_t i = 0; i < n; ++i) {
    ra[i] = kinv * Vec3(all[i].a.x(), all[i].a.y(), 1.0);
    rb[i] = kinv * Vec3(all[i].b.x(), all[i].b.y(), 1.0);
  }

  const Mat3 kit = K.K().inverse().transpose();
  auto fundamental = [&](const Mat3& E) { return Mat3(kit * E * kinv); };

  auto count_inliers = [&](const Mat3& E, std::vector<int>* inliers) {
    Mat3 F = fundamental(E);
    int cnt = 0;
    for (size_t i = 0; i < n; ++i)
      if (symmetric_epipolar_px(F, all[i]) <= opts.inlier_px) {
        ++cnt;
        if (inliers) inliers->push_back(int(i));
      }
    return cnt;
  };

  std::vector<int> all_idx(n);
  std::iota(all_idx.begin(), all_idx.end(), 0);
  Mat3 bestE = eight_point(ra, rb, all_idx);
  std::vector<int> best_inl;
  count_inliers(bestE, &best_inl);

  std::uniform_int_distribution<size_t> pick(0, n - 1);
  for (int it = 0; it < opts.iterations; ++it) {
    int idx[8];
    for (int j = 0; j < 8; ++j) {
      bool fresh;
      do {
        idx[j] = int(pick(rng));
        fresh = true;
        for (int t = 0; t < j; ++t) fresh &= idx[t] != idx[j];
      } while (!fresh);
    }
    Mat3 E = eight_point(ra, rb, idx);
    std::vector<int> inl;
    count_inliers(E, &inl);
    if (inl.size() > best_inl.size()) {
      bestE = E;
      best_inl = std::move(inl);
    }
  }
  if (best_inl.size() >= 8) bestE = eight_point(ra, rb, best_inl);  // algebraic refinement
  std::vector<int> inliers;
  count_inliers(bestE, &inliers);
  if (inliers.size() < 8) inliers = all_idx;

  // Four-way decomposition, disambiguated by positive depth in both views.
  Eigen::JacobiSVD<Mat3> svd(bestE, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 U = svd.matrixU(), V = svd.matrixV();
  if (U.determinant() < 0) U.col(2) *= -1;
  if (V.determinant() < 0) V.col(2) *= -1;
  Mat3 W;
  W << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  Vec3 t = U.col(2);
  Candidate cands[4] = {{U * W * V.transpose(), t},
                        {U * W * V.transpose(), -t},
                        {U * W.transpose() * V.transpose(), t},
                        {U * W.transpose() * V.transpose(), -t}};
  for (Candidate& c : cands) {
    for (int i : inliers) {
      auto [z1, z2] = triangulate_depths(ra[size_t(i)], rb[size_t(i)], c.R, c.t);
      if (z1 > 0 && z2 > 0) ++c.votes;
    }
  }
  std::stable_sort(std::begin(cands), std::end(cands),
                   [](const Candidate& a, const Candidate& b) { return a.votes > b.votes; });

  const int ni = int(inliers.size());
  const bool decisive =
      cands[0].votes >= int(0.8 * ni) && cands[0].votes - cands[1].votes > std::max(1, ni / 20);

  MotionEstimate out;
  out.support = int(n);
  if (decisive) {
    out.R = cands[0].R;
    out.t_hat = cands[0].t.normalized();
    out.positive_depth = cands[0].votes;
    return out;
  }

  // Indecisive cheirality: if a pure rotation explains the flow, report it
  // with the translation flagged unreliable.
  Mat3 R_only = fit_rotation_only(ra, rb);
  double max_err = 0;
  const Mat3 kmat = K.K();
  for (size_t i = 0; i < n; ++i) {
    Vec3 proj = kmat * (R_only * ra[i]);
    if (proj.z() <= 1e-12) {
      max_err = std::numeric_limits<double>::infinity();
      break;
    }
    max_err = std::max(max_err, (Vec2(proj.x() / proj.z(), proj.y() / proj.z()) - all[i].b).norm());
  }
  if (max_err <= std::max(0.5, opts.inlier_px)) {
    out.R = R_only;
    out.t_hat = cands[0].t.normalized();
    out.near_degenerate = true;
    out.positive_depth = cands[0].votes;
    return out;
  }

  out.R = cands[0].R;
  out.t_hat = cands[0].t.normalized();
  out.positive_depth = cands[0].votes;
  out.near_degenerate = true;
  return out;
}

// ---------------------------------------------------------------------------
// Plane recovery and backprojection

PlaneEstimate recover_normal_depth(const Homography& H, const Mat3& R, const Vec3& t_hat,
                                   const Intrinsics& K, const Vec2& anchor_px) {
  const Mat3 G = K.Kinv() * H.H * K.K();
  // Least squares over (s, q): G = s R + t_hat q^T, with m = q / s.
  Eigen::Matrix<double, 9, 4> A;
  Eigen::Matrix<double, 9, 1> b;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      int row = 3 * r + c;
      A(row, 0) = R(r, c);
      A(row, 1) = c == 0 ? t_hat(r) : 0.0;
      A(row, 2) = c == 1 ? t_hat(r) : 0.0;
      A(row, 3) = c == 2 ? t_hat(r) : 0.0;
      b(row) = G(r, c);
    }
  Eigen::Vector4d sol = A.colPivHouseholderQr().solve(b);
  double s = sol(0);
  Vec3 q(sol(1), sol(2), sol(3));
  if (std::abs(s) < 1e-12) fail(Err::NumericallySingular, "vanishing homography gauge");
  Vec3 m = q / s;
  double mn = m.norm();
  if (mn < 1e-9) fail(Err::NumericallySingular, "rotation-only homography, n/d unobservable");

  Vec3 n = m / mn;
  if (n.dot(K.ray(anchor_px.x(), anchor_px.y())) < 0) n = -n;
  return {n, 1.0 / mn};
}

Vec3 backproject(const Vec2& px, const Vec3& n, double d, double lambda, const Intrinsics& K) {
  if (!(lambda > 0) || !(d > 0)) fail(Err::InvariantViolation, "lambda and d must be positive");
  Vec3 r = K.ray(px.x(), px.y());
  double denom = n.dot(r);
  if (std::abs(denom) < 1e-12) fail(Err::RayParallelToPlane, "viewing ray parallel to plane");
  return (lambda * d / denom) * r;
}

PlanePatch make_patch(const Vec2& anchor_px, std::span<const Vec2> boundary_px, const Vec3& n,
                      double d, double lambda, const Intrinsics& K) {
  PlanePatch patch;
  patch.n = n.normalized();
  patch.d = d;
  patch.lambda = lambda;
  patch.anchor3d = backproject(anchor_px, patch.n, d, lambda, K);
  patch.boundary3d.reserve(boundary_px.size());
  for (const Vec2& p : boundary_px) patch.boundary3d.push_back(backproject(p, patch.n, d, lambda, K));
  return patch;
}

PlanePatch transform_patch(const PlanePatch& patch, const RigidMotion& m) {
  const Vec3 t = m.lambda * m.t_hat;
  PlanePatch out;
  out.n = m.R * patch.n;
  out.lambda = patch.lambda;
  out.anchor3d = m.R * patch.anchor3d + t;
  out.boundary3d.reserve(patch.boundary3d.size());
  for (const Vec3& x : patch.boundary3d) out.boundary3d.push_back(m.R * x + t);
  // Plane offset after motion: n' . X' = lambda d + n' . t.
  out.d = (patch.lambda * patch.d + out.n.dot(t)) / patch.lambda;
  return out;
}

}  // namespace psfm
