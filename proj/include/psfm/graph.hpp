#pragma once

#include "psfm/core.hpp"
#include "psfm/segmentation.hpp"

#include <json.hpp>

namespace psfm {

struct KnnEdge {
  int i = 0, k = 0;
  double w1 = 0;  // exp(-beta * anchor pixel distance); w2 is identical
};

struct AdjEdge {
  int i = 0, k = 0;
  std::vector<Pixel> pixels;   // boundary pixels of i touching k
  std::vector<double> w4;      // per-pixel color weight, same order
};

/// Directed neighbor structures used by the energy terms: a K-NN graph over
/// anchor points and a shared-boundary adjacency graph. Energies iterate the
/// stored directed edges in order.
struct SceneGraph {
  std::vector<KnnEdge> knn;        // grouped by i, each group sorted by distance
  std::vector<AdjEdge> adjacency;  // sorted by (i, k)
  int K = 0;
  double beta_spatial = 0;
  double beta_color = 0;
  bool k_clamped = false;  // true when K exceeded N-1 and was clamped

  std::vector<std::vector<int>> knn_of;  // per node: indices into knn
  std::vector<std::vector<int>> adj_of;  // per node: indices into adjacency (outgoing)

  nlohmann::json to_json() const;
};

/// K nearest anchors by Euclidean pixel distance, ties broken by ascending
/// superpixel id. K is clamped to N-1 (flagged in the result).
std::vector<KnnEdge> build_knn_graph(const SuperpixelPartition& part, int K, double beta);

/// Edge (i,k) exists iff a boundary pixel of i 4-touches a pixel of k. Each
/// boundary pixel carries w4 = sum over its 4 neighbors of
/// exp(-beta * ||color difference||); out-of-image neighbors mirror
/// (reflect-101, degenerate dimensions clamp).
std::vector<AdjEdge> build_adjacency(const SuperpixelPartition& part, const ImageRGB& img,
                                     double beta);

SceneGraph build_scene_graph(const SuperpixelPartition& part, const ImageRGB& img, int K,
                             double beta_spatial, double beta_color);

}  // namespace psfm
