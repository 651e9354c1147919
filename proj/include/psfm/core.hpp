#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace psfm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// ---------------------------------------------------------------------------
// Errors

enum class Err {
  MalformedHeader,
  DimensionOverflow,
  IoFailure,
  MissingField,
  NonPositiveFocal,
  InvariantViolation,
  DegenerateRequest,
  IdOutOfRange,
  DegenerateConfiguration,
  InsufficientParallax,
  InsufficientCorrespondences,
  NumericallySingular,
  RayParallelToPlane,
  NoOverlap,
  InfeasibleSpec,
  NonFiniteEnergy,
};

const char* err_name(Err e);

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& msg)
      : std::runtime_error(std::string(err_name(code)) + ": " + msg), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& msg) { throw Error(code, msg); }

// ---------------------------------------------------------------------------
// Basic raster types

struct Pixel {
  int x = 0;
  int y = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// Pinhole calibration shared by both frames.
struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  Mat3 K() const {
    Mat3 k = Mat3::Identity();
    k(0, 0) = fx;
    k(1, 1) = fy;
    k(0, 2) = cx;
    k(1, 2) = cy;
    return k;
  }
  Mat3 Kinv() const {
    Mat3 k = Mat3::Identity();
    k(0, 0) = 1.0 / fx;
    k(1, 1) = 1.0 / fy;
    k(0, 2) = -cx / fx;
    k(1, 2) = -cy / fy;
    return k;
  }
  /// Viewing ray of pixel (u,v), normalized so z = 1.
  Vec3 ray(double u, double v) const { return Vec3((u - cx) / fx, (v - cy) / fy, 1.0); }

  void validate() const {
    if (fx <= 0 || fy <= 0) fail(Err::NonPositiveFocal, "focal lengths must be positive");
    if (width <= 0 || height <= 0) fail(Err::InvariantViolation, "image dimensions must be positive");
    if (cx < 0 || cx >= width || cy < 0 || cy >= height)
      fail(Err::InvariantViolation, "principal point outside image");
  }
  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

/// RGB image, channels in [0,1], row-major, origin top-left.
struct ImageRGB {
  int width = 0, height = 0;
  std::vector<float> rgb;  // 3 * width * height

  static ImageRGB filled(int w, int h, float r, float g, float b) {
    ImageRGB img;
    img.width = w;
    img.height = h;
    img.rgb.resize(size_t(3) * w * h);
    for (size_t i = 0; i < size_t(w) * h; ++i) {
      img.rgb[3 * i + 0] = r;
      img.rgb[3 * i + 1] = g;
      img.rgb[3 * i + 2] = b;
    }
    return img;
  }
  size_t idx(int x, int y) const { return size_t(y) * width + x; }
  Vec3 color(int x, int y) const {
    size_t i = 3 * idx(x, y);
    return Vec3(rgb[i], rgb[i + 1], rgb[i + 2]);
  }
  void set(int x, int y, float r, float g, float b) {
    size_t i = 3 * idx(x, y);
    rgb[i] = r;
    rgb[i + 1] = g;
    rgb[i + 2] = b;
  }
  bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

/// Dense optical flow, reference -> next, displacements in pixels.
struct DenseFlow {
  int width = 0, height = 0;
  std::vector<float> u, v;
  std::vector<uint8_t> valid;

  static DenseFlow zeros(int w, int h) {
    DenseFlow f;
    f.width = w;
    f.height = h;
    f.u.assign(size_t(w) * h, 0.f);
    f.v.assign(size_t(w) * h, 0.f);
    f.valid.assign(size_t(w) * h, 1);
    return f;
  }
  size_t idx(int x, int y) const { return size_t(y) * width + x; }
};

/// Per-pixel depth in scene units; valid depths are strictly positive and finite.
struct DepthMap {
  int width = 0, height = 0;
  std::vector<float> z;
  std::vector<uint8_t> valid;

  static DepthMap invalid_map(int w, int h) {
    DepthMap d;
    d.width = w;
    d.height = h;
    d.z.assign(size_t(w) * h, 0.f);
    d.valid.assign(size_t(w) * h, 0);
    return d;
  }
  size_t idx(int x, int y) const { return size_t(y) * width + x; }
};

// ---------------------------------------------------------------------------
// Deterministic seeding

/// splitmix64 step; used to derive independent sub-seeds from (seed, salt).
inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Minimal chunked parallel-for. Results must be written to disjoint slots so
// reductions stay deterministic regardless of the thread count.

inline int default_thread_count() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : int(n);
}

void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn);

inline double deg2rad(double d) { return d * 3.14159265358979323846 / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / 3.14159265358979323846; }

}  // namespace psfm
