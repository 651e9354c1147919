#pragma once

#include "psfm/core.hpp"

#include <string>

namespace psfm {

// All loaders validate against the type invariants and throw instead of
// returning a malformed value. Save/load pairs are exact inverses on valid
// inputs (bit-level for the float containers).

inline constexpr size_t kDefaultPixelCap = size_t(1) << 26;

/// Middlebury .flo container: float magic 202021.25, int32 width, int32
/// height, then interleaved float32 (u,v) row-major. Non-finite components
/// mark a pixel invalid on load; invalid pixels are stored as NaN.
DenseFlow load_flow(const std::string& path, size_t max_pixels = kDefaultPixelCap);
void save_flow(const DenseFlow& flow, const std::string& path);

/// Grayscale PFM ("Pf"), negative scale field = little-endian, rows stored
/// bottom-up. Invalid pixels are stored as 0 and restored as invalid.
DepthMap load_depth_pfm(const std::string& path, size_t max_pixels = kDefaultPixelCap);
void save_depth_pfm(const DepthMap& depth, const std::string& path);

/// JSON sidecar with keys fx, fy, cx, cy, width, height.
Intrinsics load_intrinsics(const std::string& path);
void save_intrinsics(const Intrinsics& k, const std::string& path);

/// 8-bit color images; PNG or binary PPM (P6) decided by file extension.
/// Channels are normalized to [0,1] on load.
ImageRGB load_image(const std::string& path);
void save_image_png(const ImageRGB& img, const std::string& path);
void save_image_ppm(const ImageRGB& img, const std::string& path);

/// 16-bit grayscale PNG label maps (external segmentation input).
struct LabelMap {
  int width = 0, height = 0;
  std::vector<uint16_t> labels;
};
LabelMap load_label_png(const std::string& path);
void save_label_png(const LabelMap& labels, const std::string& path);

/// 8-bit grayscale PNG mask; nonzero = selected.
std::vector<uint8_t> load_mask_png(const std::string& path, int& width, int& height);

}  // namespace psfm
