#include "psfm/graph.hpp"

#include <algorithm>
#include <cmath>

namespace psfm {

std::vector<KnnEdge> build_knn_graph(const SuperpixelPartition& part, int K, double beta) {
  if (K < 1) fail(Err::DegenerateRequest, "K must be at least 1");
  if (beta <= 0) fail(Err::DegenerateRequest, "beta must be positive");
  const int n = part.count;
  const int k_eff = std::min(K, n - 1);

  std::vector<KnnEdge> edges;
  if (k_eff <= 0) return edges;
  edges.reserve(size_t(n) * k_eff);

  std::vector<std::pair<double, int>> cand(size_t(n));
  for (int i = 0; i < n; ++i) {
    const Pixel& ai = part.anchors[size_t(i)];
    size_t m = 0;
    for (int k = 0; k < n; ++k) {
      if (k == i) continue;
      const Pixel& ak = part.anchors[size_t(k)];
      double dx = ai.x - ak.x, dy = ai.y - ak.y;
      cand[m++] = {dx * dx + dy * dy, k};
    }
    // (distance, id) ordering makes equal-distance ties deterministic.
    std::partial_sort(cand.begin(), cand.begin() + k_eff, cand.begin() + m);
    for (int j = 0; j < k_eff; ++j)
      edges.push_back({i, cand[size_t(j)].second, std::exp(-beta * std::sqrt(cand[size_t(j)].first))});
  }
  return edges;
}

std::vector<AdjEdge> build_adjacency(const SuperpixelPartition& part, const ImageRGB& img,
                                     double beta) {
  if (img.width != part.width || img.height != part.height)
    fail(Err::InvariantViolation, "image and partition dimensions differ");

  // reflect-101 (mirror across the border pixel); clamps when the dimension
  // is too small to reflect.
  auto mirror = [](int c, int n) {
    if (c < 0) c = -c;
    if (c >= n) c = 2 * n - 2 - c;
    return std::clamp(c, 0, n - 1);
  };
  auto pixel_w4 = [&](const Pixel& p) {
    static constexpr int dx[4] = {1, -1, 0, 0};
    static constexpr int dy[4] = {0, 0, 1, -1};
    Vec3 c0 = img.color(p.x, p.y);
    double w = 0;
    for (int d = 0; d < 4; ++d) {
      int qx = mirror(p.x + dx[d], img.width);
      int qy = mirror(p.y + dy[d], img.height);
      w += std::exp(-beta * (c0 - img.color(qx, qy)).norm());
    }
    return w;
  };

  std::vector<AdjEdge> edges;
  for (int i = 0; i < part.count; ++i) {
    for (const auto& sb : part.shared[size_t(i)]) {
      AdjEdge e;
      e.i = i;
      e.k = sb.neighbor;
      e.pixels = sb.pixels;
      e.w4.reserve(e.pixels.size());
      for (const Pixel& p : e.pixels) e.w4.push_back(pixel_w4(p));
      edges.push_back(std::move(e));
    }
  }
  return edges;
}

SceneGraph build_scene_graph(const SuperpixelPartition& part, const ImageRGB& img, int K,
                             double beta_spatial, double beta_color) {
  SceneGraph g;
  g.K = K;
  g.beta_spatial = beta_spatial;
  g.beta_color = beta_color;
  g.k_clamped = K > part.count - 1;
  g.knn = build_knn_graph(part, K, beta_spatial);
  g.adjacency = build_adjacency(part, img, beta_color);
  g.knn_of.assign(size_t(part.count), {});
  g.adj_of.assign(size_t(part.count), {});
  for (size_t e = 0; e < g.knn.size(); ++e) g.knn_of[size_t(g.knn[e].i)].push_back(int(e));
  for (size_t e = 0; e < g.adjacency.size(); ++e)
    g.adj_of[size_t(g.adjacency[e].i)].push_back(int(e));
  return g;
}

nlohmann::json SceneGraph::to_json() const {
  nlohmann::json j;
  j["K"] = K;
  j["beta_spatial"] = beta_spatial;
  j["beta_color"] = beta_color;
  j["k_clamped"] = k_clamped;
  auto& jk = j["knn"] = nlohmann::json::array();
  for (const auto& e : knn) jk.push_back({{"i", e.i}, {"k", e.k}, {"w1", e.w1}});
  auto& ja = j["adjacency"] = nlohmann::json::array();
  for (const auto& e : adjacency) {
    double w4_sum = 0;
    for (double w : e.w4) w4_sum += w;
    ja.push_back({{"i", e.i}, {"k", e.k}, {"pixels", e.pixels.size()}, {"w4_sum", w4_sum}});
  }
  return j;
}

}  // namespace psfm
