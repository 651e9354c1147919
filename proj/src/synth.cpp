#include "psfm/synth.hpp"

#include "psfm/scene_io.hpp"
#include "psfm/segmentation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

namespace psfm {

namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap_angle(double a) {
  while (a > kPi) a -= 2 * kPi;
  while (a <= -kPi) a += 2 * kPi;
  return a;
}

struct SE3 {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  Vec3 apply(const Vec3& x) const { return R * x + t; }
  SE3 compose(const SE3& other) const { return {R * other.R, R * other.t + t}; }
};

/// Rotation by angle about the vertical line through (x0, *, z0).
SE3 hinge_rotation(double x0, double z0, double angle) {
  Mat3 R = Eigen::AngleAxisd(angle, Vec3(0, 1, 0)).toRotationMatrix();
  Vec3 c(x0, 0, z0);
  return {R, c - R * c};
}

/// Angle of a point about a vertical axis at (x0, z0), in the XZ plane.
double axis_angle_of(const Vec3& p, double x0, double z0) {
  return std::atan2(p.x() - x0, p.z() - z0);
}

struct Profile {
  // P+1 vertical profile lines (u in continuous image coords, depth z);
  // patch j spans profile points j..j+1.
  std::vector<double> u, z;
};

struct PlaneDef {
  Vec3 n;
  double D;  // n . X on the plane
};

PlaneDef plane_through(const Intrinsics& K, double ua, double za, double ub, double zb) {
  Vec3 A(za * (ua - K.cx) / K.fx, 0, za);
  Vec3 B(zb * (ub - K.cx) / K.fx, 0, zb);
  Vec3 n = (B - A).cross(Vec3(0, 1, 0)).normalized();
  double mid_u = 0.5 * (ua + ub);
  if (n.dot(K.ray(mid_u, K.cy)) < 0) n = -n;
  return {n, n.dot(A)};
}

struct Layout {
  std::vector<int> assignment;
  std::vector<Pixel> anchors;      // snapped region centroids
  std::vector<double> splits;      // continuous split coordinates (P-1)
  std::vector<int> strip_start;    // first pixel column per strip
};

Layout strip_layout(const SceneSpec& spec) {
  Layout lay;
  const int w = spec.width, h = spec.height, p = spec.n_patches;
  lay.assignment.resize(size_t(w) * h);
  lay.strip_start.resize(size_t(p));
  for (int j = 0; j < p; ++j) lay.strip_start[size_t(j)] = j * w / p;
  for (int x = 0; x < w; ++x) {
    int strip = std::min(p - 1, x * p / w);
    for (int y = 0; y < h; ++y) lay.assignment[size_t(y) * w + x] = strip;
  }
  for (int j = 0; j + 1 < p; ++j) lay.splits.push_back(double((j + 1) * w / p) - 0.5);
  SuperpixelPartition part = partition_from_labels(lay.assignment, w, h);
  lay.anchors = part.anchors;
  return lay;
}

std::vector<PlaneDef> profile_planes(const Intrinsics& K, const Profile& prof) {
  std::vector<PlaneDef> planes;
  for (size_t j = 0; j + 1 < prof.u.size(); ++j)
    planes.push_back(plane_through(K, prof.u[j], prof.z[j], prof.u[j + 1], prof.z[j + 1]));
  return planes;
}

Profile make_profile(const SceneSpec& spec, const Layout& lay, double fold_amp) {
  Profile prof;
  const int p = spec.n_patches;
  prof.u.push_back(-0.5);
  for (double s : lay.splits) prof.u.push_back(s);
  prof.u.push_back(spec.width - 0.5);
  prof.z.resize(size_t(p) + 1);
  for (int k = 0; k <= p; ++k)
    prof.z[size_t(k)] = spec.base_depth + fold_amp * (k % 2 == 0 ? -1.0 : 1.0);
  return prof;
}

Vec3 anchor_point(const Intrinsics& K, const Pixel& px, const PlaneDef& pl) {
  Vec3 r = K.ray(px.x, px.y);
  return (pl.D / pl.n.dot(r)) * r;
}

/// Hinge angle preserving the distance between the two anchors when the
/// second one rotates about the axis.
double preserving_hinge_angle(const Vec3& a_prev, const Vec3& a_next, double x0, double z0) {
  double dphi = wrap_angle(axis_angle_of(a_prev, x0, z0) - axis_angle_of(a_next, x0, z0));
  return wrap_angle(2.0 * dphi);
}

}  // namespace

DenseFlow corrupt_flow(const DenseFlow& flow, double noise_sigma, double outlier_frac,
                       uint64_t seed) {
  if (noise_sigma < 0 || outlier_frac < 0 || outlier_frac >= 1)
    fail(Err::InvariantViolation, "bad corruption parameters");
  DenseFlow out = flow;
  if (noise_sigma == 0 && outlier_frac == 0) return out;
  std::mt19937_64 rng(mix_seed(seed, 0xf10337));
  std::normal_distribution<double> gauss(0.0, noise_sigma);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::uniform_real_distribution<double> big(-0.25 * flow.width, 0.25 * flow.width);
  for (size_t i = 0; i < out.u.size(); ++i) {
    if (!out.valid[i]) continue;
    if (outlier_frac > 0 && uni(rng) < outlier_frac) {
      out.u[i] += float(big(rng));
      out.v[i] += float(big(rng));
    } else if (noise_sigma > 0) {
      out.u[i] += float(gauss(rng));
      out.v[i] += float(gauss(rng));
    }
  }
  return out;
}

SyntheticScene gen_scene(const SceneSpec& spec) {
  if (spec.n_patches < 1) fail(Err::InfeasibleSpec, "need at least one patch");
  if (spec.width < spec.n_patches) fail(Err::InfeasibleSpec, "strips need at least one column");

  SyntheticScene scene;
  scene.spec = spec;
  scene.K = {spec.focal, spec.focal, (spec.width - 1) / 2.0, (spec.height - 1) / 2.0,
             spec.width, spec.height};
  const Intrinsics& K = scene.K;
  const int P = spec.n_patches;

  Layout lay = strip_layout(spec);
  scene.assignment = lay.assignment;
  scene.anchors = lay.anchors;

  double fold_amp =
      std::tan(deg2rad(spec.fold_deg)) * spec.base_depth * spec.width / (2.0 * P * spec.focal);

  // 2-patch scenes can target an exact hinge angle by adjusting the fold
  // amplitude: scan for a bracket, then bisect.
  if (spec.family == SceneSpec::Family::Articulated && P == 2 && spec.hinge_deg != 0) {
    auto hinge_of = [&](double amp) {
      Profile prof = make_profile(spec, lay, amp);
      auto planes = profile_planes(K, prof);
      Vec3 a0 = anchor_point(K, lay.anchors[0], planes[0]);
      Vec3 a1 = anchor_point(K, lay.anchors[1], planes[1]);
      double xh = prof.z[1] * (prof.u[1] - K.cx) / K.fx;
      return rad2deg(preserving_hinge_angle(a0, a1, xh, prof.z[1]));
    };
    const double target = spec.hinge_deg;
    double lo = 1e-6 * spec.base_depth, hi = lo;
    double flo = hinge_of(lo) - target;
    bool found = false;
    for (int s = 1; s <= 400 && !found; ++s) {
      hi = s * 0.002 * spec.base_depth;
      double fhi = hinge_of(hi) - target;
      if (flo == 0 || flo * fhi <= 0) found = true;
      if (!found) {
        lo = hi;
        flo = fhi;
      }
    }
    if (!found) {
      // Try the mirrored fold direction.
      lo = -1e-6 * spec.base_depth;
      flo = hinge_of(lo) - target;
      for (int s = 1; s <= 400 && !found; ++s) {
        hi = -s * 0.002 * spec.base_depth;
        double fhi = hinge_of(hi) - target;
        if (flo * fhi <= 0) found = true;
        if (!found) {
          lo = hi;
          flo = fhi;
        }
      }
    }
    if (!found) fail(Err::InfeasibleSpec, "no fold amplitude reaches the requested hinge angle");
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      if ((hinge_of(lo) - target) * (hinge_of(mid) - target) <= 0)
        hi = mid;
      else
        lo = mid;
    }
    fold_amp = 0.5 * (lo + hi);
  }

  Profile prof = make_profile(spec, lay, fold_amp);
  std::vector<PlaneDef> planes = profile_planes(K, prof);

  // Base motion shared by every patch.
  SE3 base;
  base.R = Eigen::AngleAxisd(deg2rad(spec.base_rot_deg), Vec3(0.2, 1.0, 0.1).normalized())
               .toRotationMatrix();

  std::vector<SE3> motions(size_t(P));
  std::vector<Vec3> hinge_parts(size_t(P), Vec3::Zero());  // translation chains minus base
  std::vector<Mat3> rot_chain(size_t(P), Mat3::Identity());
  std::vector<double> hinge_angles;

  if (spec.family == SceneSpec::Family::Articulated && P > 1) {
    std::vector<Vec3> anchors3d(size_t(P));
    for (int j = 0; j < P; ++j)
      anchors3d[size_t(j)] = anchor_point(K, lay.anchors[size_t(j)], planes[size_t(j)]);
    SE3 chain;  // relative motion of patch j w.r.t. patch 0, frame-1 coords
    for (int j = 1; j < P; ++j) {
      double zh = prof.z[size_t(j)];
      double xh = zh * (prof.u[size_t(j)] - K.cx) / K.fx;
      double delta =
          preserving_hinge_angle(anchors3d[size_t(j - 1)], anchors3d[size_t(j)], xh, zh);
      if (std::abs(delta) > deg2rad(60.0))
        fail(Err::InfeasibleSpec, "derived hinge angle too large; reduce the fold");
      hinge_angles.push_back(delta);
      chain = chain.compose(hinge_rotation(xh, zh, delta));
      rot_chain[size_t(j)] = chain.R;
      hinge_parts[size_t(j)] = chain.t;
    }
  }

  // Pick the base translation magnitude. Articulated scenes solve it for the
  // requested magnitude ratio; rigid scenes use base_speed directly.
  Vec3 dir = spec.base_dir.normalized();
  double speed = spec.base_speed;
  if (spec.family == SceneSpec::Family::Articulated && P > 1) {
    auto ratio_of = [&](double g) {
      double mn = std::numeric_limits<double>::max(), mx = 0;
      for (int j = 0; j < P; ++j) {
        double m = (base.R * hinge_parts[size_t(j)] + g * dir).norm();
        mn = std::min(mn, m);
        mx = std::max(mx, m);
      }
      return mx / mn;
    };
    if (spec.scale_ratio < 1.0) fail(Err::InfeasibleSpec, "scale ratio below one");
    double lo = 1e-5, hi = 1e-5;
    double flo = ratio_of(lo) - spec.scale_ratio;
    bool found = flo == 0;
    for (int s = 1; s <= 2000 && !found; ++s) {
      hi = s * 0.005;
      double fhi = ratio_of(hi) - spec.scale_ratio;
      if (flo * fhi <= 0) found = true;
      if (!found) {
        lo = hi;
        flo = fhi;
      }
    }
    if (!found) fail(Err::InfeasibleSpec, "requested scale ratio unreachable");
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      if ((ratio_of(lo) - spec.scale_ratio) * (ratio_of(mid) - spec.scale_ratio) <= 0)
        hi = mid;
      else
        lo = mid;
    }
    speed = 0.5 * (lo + hi);
  }
  base.t = speed * dir;

  for (int j = 0; j < P; ++j)
    motions[size_t(j)] = base.compose(SE3{rot_chain[size_t(j)], hinge_parts[size_t(j)]});

  // Record per-patch truth.
  double lambda_sum = 0;
  scene.patches.resize(size_t(P));
  for (int j = 0; j < P; ++j) {
    PatchTruth& pt = scene.patches[size_t(j)];
    pt.n = planes[size_t(j)].n;
    pt.plane_offset = planes[size_t(j)].D;
    pt.R = motions[size_t(j)].R;
    pt.lambda_raw = motions[size_t(j)].t.norm();
    if (pt.lambda_raw < 1e-12) fail(Err::InfeasibleSpec, "a patch has no translation");
    pt.t_hat = motions[size_t(j)].t / pt.lambda_raw;
    pt.d_rel = pt.plane_offset / pt.lambda_raw;
    lambda_sum += pt.lambda_raw;
  }
  for (auto& pt : scene.patches) pt.lambda_true = pt.lambda_raw / lambda_sum;

  // Anchor-distance residuals.
  std::vector<Vec3> a3(size_t(P)), a3m(size_t(P));
  for (int j = 0; j < P; ++j) {
    a3[size_t(j)] = anchor_point(K, lay.anchors[size_t(j)], planes[size_t(j)]);
    a3m[size_t(j)] = motions[size_t(j)].apply(a3[size_t(j)]);
  }
  for (int i = 0; i < P; ++i)
    for (int k = i + 1; k < P; ++k) {
      double r = std::abs((a3[size_t(i)] - a3[size_t(k)]).norm() -
                          (a3m[size_t(i)] - a3m[size_t(k)]).norm());
      scene.arap_residual_all = std::max(scene.arap_residual_all, r);
      if (k == i + 1) scene.arap_residual = std::max(scene.arap_residual, r);
    }

  // Flat-shaded patch colors.
  std::mt19937_64 crng(mix_seed(spec.seed, 0xc0104));
  std::uniform_real_distribution<float> cuni(0.15f, 0.95f);
  std::vector<std::array<float, 3>> colors(size_t(P));
  for (auto& c : colors) c = {cuni(crng), cuni(crng), cuni(crng)};

  // Render flow, both depth maps, and both images.
  const int W = spec.width, H = spec.height;
  scene.flow = DenseFlow::zeros(W, H);
  scene.depth1 = DepthMap::invalid_map(W, H);
  scene.depth2 = DepthMap::invalid_map(W, H);
  scene.ref_image = ImageRGB::filled(W, H, 0, 0, 0);
  scene.next_image = ImageRGB::filled(W, H, 0, 0, 0);

  std::vector<Mat3> homs(size_t(P)), homs_inv(size_t(P));
  for (int j = 0; j < P; ++j) {
    homs[size_t(j)] =
        plane_homography(K, motions[size_t(j)].R, motions[size_t(j)].t, planes[size_t(j)].n,
                         planes[size_t(j)].D);
    homs_inv[size_t(j)] = homs[size_t(j)].inverse();
  }

  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      int j = scene.patch_at(x, y);
      Vec3 r = K.ray(x, y);
      double denom = planes[size_t(j)].n.dot(r);
      if (denom <= 1e-9) fail(Err::InfeasibleSpec, "patch plane behind a viewing ray");
      double z = planes[size_t(j)].D / denom;
      if (z <= 0) fail(Err::InfeasibleSpec, "negative patch depth");
      size_t i = scene.flow.idx(x, y);
      scene.depth1.z[i] = float(z);
      scene.depth1.valid[i] = 1;
      Vec3 q = homs[size_t(j)] * Vec3(x, y, 1.0);
      if (std::abs(q.z()) < 1e-12) fail(Err::InfeasibleSpec, "homography sends pixel to infinity");
      scene.flow.u[i] = float(q.x() / q.z() - x);
      scene.flow.v[i] = float(q.y() / q.z() - y);
      scene.ref_image.set(x, y, colors[size_t(j)][0], colors[size_t(j)][1], colors[size_t(j)][2]);
    }

  // Frame-2 depth: every patch plane is still a plane after motion; a pixel
  // belongs to a patch when it back-warps into that patch's frame-1 region.
  // The nearest candidate wins.
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double best = std::numeric_limits<double>::max();
      int best_j = -1;
      Vec3 r = K.ray(x, y);
      for (int j = 0; j < P; ++j) {
        Vec3 n2 = motions[size_t(j)].R * planes[size_t(j)].n;
        double D2 = planes[size_t(j)].D + n2.dot(motions[size_t(j)].t);
        double denom = n2.dot(r);
        if (std::abs(denom) < 1e-12) continue;
        double z2 = D2 / denom;
        if (z2 <= 0 || z2 >= best) continue;
        Vec3 back = homs_inv[size_t(j)] * Vec3(x, y, 1.0);
        if (std::abs(back.z()) < 1e-12) continue;
        int bx = int(std::lround(back.x() / back.z()));
        int by = int(std::lround(back.y() / back.z()));
        if (bx < 0 || bx >= W || by < 0 || by >= H) continue;
        if (scene.patch_at(bx, by) != j) continue;
        best = z2;
        best_j = j;
      }
      if (best_j >= 0) {
        size_t i = scene.depth2.idx(x, y);
        scene.depth2.z[i] = float(best);
        scene.depth2.valid[i] = 1;
        scene.next_image.set(x, y, colors[size_t(best_j)][0], colors[size_t(best_j)][1],
                             colors[size_t(best_j)][2]);
      }
    }

  if (spec.flow_noise_sigma > 0 || spec.flow_outlier_frac > 0)
    scene.flow = corrupt_flow(scene.flow, spec.flow_noise_sigma, spec.flow_outlier_frac, spec.seed);
  return scene;
}

// ---------------------------------------------------------------------------
// Bundles

void write_bundle(const SyntheticScene& scene, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_image_png(scene.ref_image, dir + "/ref.png");
  save_image_png(scene.next_image, dir + "/next.png");
  save_flow(scene.flow, dir + "/flow.flo");
  save_depth_pfm(scene.depth1, dir + "/gt_depth1.pfm");
  save_depth_pfm(scene.depth2, dir + "/gt_depth2.pfm");
  save_intrinsics(scene.K, dir + "/intrinsics.json");

  LabelMap labels;
  labels.width = scene.K.width;
  labels.height = scene.K.height;
  labels.labels.assign(scene.assignment.begin(), scene.assignment.end());
  save_label_png(labels, dir + "/labels.png");

  nlohmann::json j;
  j["seed"] = scene.spec.seed;
  j["family"] = scene.spec.family == SceneSpec::Family::Rigid ? "rigid" : "articulated";
  j["arap_residual"] = scene.arap_residual;
  j["arap_residual_all"] = scene.arap_residual_all;
  j["labels"] = "labels.png";
  auto& jp = j["patches"] = nlohmann::json::array();
  for (const PatchTruth& p : scene.patches) {
    nlohmann::json e;
    e["normal"] = {p.n.x(), p.n.y(), p.n.z()};
    e["d_rel"] = p.d_rel;
    e["plane_offset"] = p.plane_offset;
    e["lambda_raw"] = p.lambda_raw;
    e["lambda_true"] = p.lambda_true;
    e["t_hat"] = {p.t_hat.x(), p.t_hat.y(), p.t_hat.z()};
    std::vector<double> r(p.R.data(), p.R.data() + 9);  // column-major
    e["rotation"] = r;
    jp.push_back(e);
  }
  std::ofstream out(dir + "/scene.json");
  if (!out) fail(Err::IoFailure, "cannot write scene.json");
  out << j.dump(2) << "\n";
}

BundleTruth load_bundle_truth(const std::string& dir) {
  BundleTruth truth;
  truth.K = load_intrinsics(dir + "/intrinsics.json");
  std::ifstream in(dir + "/scene.json");
  if (!in) fail(Err::IoFailure, "cannot open scene.json in '" + dir + "'");
  nlohmann::json j;
  in >> j;
  truth.arap_residual = j.value("arap_residual", 0.0);
  truth.seed = j.value("seed", uint64_t(0));
  for (const auto& e : j.at("patches")) {
    PatchTruth p;
    auto nv = e.at("normal");
    p.n = Vec3(nv[0], nv[1], nv[2]);
    p.d_rel = e.at("d_rel");
    p.plane_offset = e.at("plane_offset");
    p.lambda_raw = e.at("lambda_raw");
    p.lambda_true = e.at("lambda_true");
    auto tv = e.at("t_hat");
    p.t_hat = Vec3(tv[0], tv[1], tv[2]);
    auto rv = e.at("rotation");
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < 3; ++r) p.R(r, c) = rv[size_t(3 * c + r)];
    truth.patches.push_back(p);
  }
  return truth;
}

}  // namespace psfm
