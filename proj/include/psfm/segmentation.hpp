#pragma once

#include "psfm/core.hpp"

namespace psfm {

/// Over-segmentation of the reference image with per-superpixel anchor,
/// boundary, and interior pixel lists.
///
/// Invariants:
///   - labels cover every pixel and interiors partition the image;
///   - the anchor is the region centroid snapped to the nearest interior pixel;
///   - p is a boundary pixel of i iff label(p) == i and some 4-neighbor of p
///     inside the image has a different label.
struct SuperpixelPartition {
  int width = 0, height = 0;
  int count = 0;                      // N
  std::vector<int> labels;            // width*height, row-major
  std::vector<Pixel> anchors;         // per superpixel
  std::vector<std::vector<Pixel>> interiors;
  std::vector<std::vector<Pixel>> boundaries;

  /// Boundary pixels of i that 4-touch superpixel k, grouped per neighbor.
  struct SharedBoundary {
    int neighbor = 0;
    std::vector<Pixel> pixels;
  };
  std::vector<std::vector<SharedBoundary>> shared;  // per superpixel, sorted by neighbor id

  int label_at(int x, int y) const { return labels[size_t(y) * width + x]; }
  const std::vector<Pixel>& shared_boundary(int i, int k) const;
};

/// Near-square cells; |N - target_n| <= 2*ceil(sqrt(target_n)).
SuperpixelPartition grid_segment(int width, int height, int target_n);

/// 5-D (labxy) k-means with fixed iteration count and connectivity
/// enforcement; orphan fragments below min_region pixels are merged into the
/// largest adjacent superpixel.
SuperpixelPartition slic_segment(const ImageRGB& img, int target_n, double compactness = 10.0,
                                 int iterations = 10, int min_region = 16);

/// Build a partition from an externally supplied label map (ids are
/// compacted; derived fields recomputed).
SuperpixelPartition partition_from_labels(std::vector<int> labels, int width, int height);

/// Pixels belonging to superpixel i.
const std::vector<Pixel>& pixels_of(const SuperpixelPartition& part, int i);

}  // namespace psfm
