#include "psfm/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace psfm {

namespace {

constexpr int kNbrX[4] = {1, -1, 0, 0};
constexpr int kNbrY[4] = {0, 0, 1, -1};

/// Compute anchors, interiors, boundaries and shared-boundary lists from a
/// dense label image whose ids already form [0, N).
void derive_fields(SuperpixelPartition& part) {
  const int w = part.width, h = part.height, n = part.count;
  part.interiors.assign(n, {});
  part.boundaries.assign(n, {});
  part.shared.assign(n, {});

  std::vector<double> sx(n, 0), sy(n, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int id = part.label_at(x, y);
      part.interiors[id].push_back({x, y});
      sx[id] += x;
      sy[id] += y;
    }

  part.anchors.resize(n);
  for (int i = 0; i < n; ++i) {
    if (part.interiors[i].empty()) fail(Err::InvariantViolation, "empty superpixel id");
    double cx = sx[i] / part.interiors[i].size();
    double cy = sy[i] / part.interiors[i].size();
    // Snap the centroid to the nearest interior pixel (lowest row-major index
    // on ties) so the anchor is always an observed pixel.
    double best = std::numeric_limits<double>::max();
    Pixel best_px = part.interiors[i][0];
    for (const Pixel& p : part.interiors[i]) {
      double d = (p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy);
      if (d < best - 1e-12) {
        best = d;
        best_px = p;
      }
    }
    part.anchors[i] = best_px;
  }

  // Boundary pixels and per-neighbor shared lists, in row-major pixel order.
  std::vector<std::vector<std::pair<int, Pixel>>> touch(n);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int id = part.label_at(x, y);
      bool is_boundary = false;
      int seen[4];
      int n_seen = 0;
      for (int d = 0; d < 4; ++d) {
        int nx = x + kNbrX[d], ny = y + kNbrY[d];
        if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
        int nid = part.label_at(nx, ny);
        if (nid == id) continue;
        is_boundary = true;
        bool dup = false;
        for (int s = 0; s < n_seen; ++s) dup |= seen[s] == nid;
        if (!dup) {
          seen[n_seen++] = nid;
          touch[id].push_back({nid, {x, y}});
        }
      }
      if (is_boundary) part.boundaries[id].push_back({x, y});
    }

  for (int i = 0; i < n; ++i) {
    std::stable_sort(touch[i].begin(), touch[i].end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [k, px] : touch[i]) {
      if (part.shared[i].empty() || part.shared[i].back().neighbor != k)
        part.shared[i].push_back({k, {}});
      part.shared[i].back().pixels.push_back(px);
    }
  }
}

SuperpixelPartition pixel_partition(int w, int h) {
  SuperpixelPartition part;
  part.width = w;
  part.height = h;
  part.count = w * h;
  part.labels.resize(size_t(w) * h);
  std::iota(part.labels.begin(), part.labels.end(), 0);
  derive_fields(part);
  return part;
}

/// Relabel connected components; fragments that are not the largest component
/// of their original label, or are smaller than min_region, get merged into
/// the largest 4-adjacent region. Final ids are dense, ordered by first
/// (row-major) appearance.
std::vector<int> enforce_connectivity(const std::vector<int>& labels, int w, int h,
                                      int min_region) {
  const size_t npx = size_t(w) * h;
  std::vector<int> comp(npx, -1);
  struct Component {
    int orig_label;
    std::vector<int> pixels;
  };
  std::vector<Component> comps;
  std::vector<int> stack;
  for (size_t seed = 0; seed < npx; ++seed) {
    if (comp[seed] >= 0) continue;
    int id = int(comps.size());
    comps.push_back({labels[seed], {}});
    stack.assign(1, int(seed));
    comp[seed] = id;
    while (!stack.empty()) {
      int p = stack.back();
      stack.pop_back();
      comps[id].pixels.push_back(p);
      int x = p % w, y = p / w;
      for (int d = 0; d < 4; ++d) {
        int nx = x + kNbrX[d], ny = y + kNbrY[d];
        if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
        int q = ny * w + nx;
        if (comp[q] < 0 && labels[q] == labels[size_t(p)]) {
          comp[q] = id;
          stack.push_back(q);
        }
      }
    }
  }

  // Largest component per original label survives; everything else merges.
  std::vector<int> largest_of_label;
  for (size_t c = 0; c < comps.size(); ++c) {
    int lbl = comps[c].orig_label;
    if (lbl >= int(largest_of_label.size())) largest_of_label.resize(lbl + 1, -1);
    if (largest_of_label[lbl] < 0 ||
        comps[c].pixels.size() > comps[largest_of_label[lbl]].pixels.size())
      largest_of_label[lbl] = int(c);
  }
  std::vector<char> keep(comps.size(), 0);
  for (size_t c = 0; c < comps.size(); ++c)
    keep[c] = largest_of_label[comps[c].orig_label] == int(c) &&
              int(comps[c].pixels.size()) >= min_region;
  // Never drop every component: if a label's largest fragment is below the
  // floor but nothing larger is adjacent-mergeable, it still merges below.
  if (std::none_of(keep.begin(), keep.end(), [](char k) { return k != 0; }))
    keep[0] = 1;

  std::vector<int> out(npx, -1);
  for (size_t c = 0; c < comps.size(); ++c)
    if (keep[c])
      for (int p : comps[c].pixels) out[size_t(p)] = int(c);

  // Merge dropped fragments into the largest adjacent kept component,
  // repeating until everything is absorbed.
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t c = 0; c < comps.size(); ++c) {
      if (keep[c]) continue;
      if (comps[c].pixels.empty() || out[size_t(comps[c].pixels[0])] >= 0) continue;
      std::vector<std::pair<int, size_t>> adj;  // (component id, contact count)
      for (int p : comps[c].pixels) {
        int x = p % w, y = p / w;
        for (int d = 0; d < 4; ++d) {
          int nx = x + kNbrX[d], ny = y + kNbrY[d];
          if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
          int t = out[size_t(ny) * w + nx];
          if (t < 0) continue;
          auto it = std::find_if(adj.begin(), adj.end(), [t](auto& a) { return a.first == t; });
          if (it == adj.end())
            adj.push_back({t, 1});
          else
            it->second++;
        }
      }
      if (adj.empty()) continue;  // not yet reachable; next sweep
      int target = adj[0].first;
      size_t best = 0;
      for (auto& [t, cnt] : adj)
        if (comps[size_t(t)].pixels.size() > best ||
            (comps[size_t(t)].pixels.size() == best && t < target)) {
          best = comps[size_t(t)].pixels.size();
          target = t;
        }
      for (int p : comps[c].pixels) out[size_t(p)] = target;
      comps[size_t(target)].pixels.insert(comps[size_t(target)].pixels.end(),
                                          comps[c].pixels.begin(), comps[c].pixels.end());
      changed = true;
    }
  }

  // Dense ids in order of first appearance.
  std::vector<int> remap(comps.size(), -1);
  int next = 0;
  std::vector<int> result(npx);
  for (size_t p = 0; p < npx; ++p) {
    int c = out[p];
    if (remap[size_t(c)] < 0) remap[size_t(c)] = next++;
    result[p] = remap[size_t(c)];
  }
  return result;
}

}  // namespace

const std::vector<Pixel>& SuperpixelPartition::shared_boundary(int i, int k) const {
  static const std::vector<Pixel> kEmpty;
  if (i < 0 || i >= count) fail(Err::IdOutOfRange, "superpixel id " + std::to_string(i));
  for (const auto& sb : shared[size_t(i)])
    if (sb.neighbor == k) return sb.pixels;
  return kEmpty;
}

const std::vector<Pixel>& pixels_of(const SuperpixelPartition& part, int i) {
  if (i < 0 || i >= part.count) fail(Err::IdOutOfRange, "superpixel id " + std::to_string(i));
  return part.interiors[size_t(i)];
}

SuperpixelPartition grid_segment(int width, int height, int target_n) {
  if (width <= 0 || height <= 0 || target_n < 1)
    fail(Err::DegenerateRequest, "bad grid segmentation request");
  if (size_t(target_n) > size_t(width) * height)
    fail(Err::DegenerateRequest, "more cells requested than pixels");
  if (size_t(target_n) == size_t(width) * height) return pixel_partition(width, height);

  int rows = std::max(1, int(std::lround(std::sqrt(double(target_n) * height / width))));
  rows = std::min(rows, height);
  int cols = std::clamp(int(std::lround(double(target_n) / rows)), 1, width);

  SuperpixelPartition part;
  part.width = width;
  part.height = height;
  part.count = rows * cols;
  part.labels.resize(size_t(width) * height);
  for (int y = 0; y < height; ++y) {
    int ry = std::min(int(size_t(y) * rows / height), rows - 1);
    for (int x = 0; x < width; ++x) {
      int cx = std::min(int(size_t(x) * cols / width), cols - 1);
      part.labels[size_t(y) * width + x] = ry * cols + cx;
    }
  }
  derive_fields(part);
  return part;
}

SuperpixelPartition partition_from_labels(std::vector<int> labels, int width, int height) {
  if (labels.size() != size_t(width) * height)
    fail(Err::InvariantViolation, "label map size mismatch");
  std::vector<int> remap;
  int next = 0;
  for (int& l : labels) {
    if (l < 0) fail(Err::InvariantViolation, "negative label");
    if (l >= int(remap.size())) remap.resize(size_t(l) + 1, -1);
    if (remap[size_t(l)] < 0) remap[size_t(l)] = next++;
    l = remap[size_t(l)];
  }
  SuperpixelPartition part;
  part.width = width;
  part.height = height;
  part.count = next;
  part.labels = std::move(labels);
  derive_fields(part);
  return part;
}

// ---------------------------------------------------------------------------
// SLIC

namespace {

Vec3 rgb_to_lab(const Vec3& rgb) {
  auto inv_gamma = [](double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
  };
  double r = inv_gamma(rgb[0]), g = inv_gamma(rgb[1]), b = inv_gamma(rgb[2]);
  double x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
  double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  double z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
  auto f = [](double t) { return t > 0.008856 ? std::cbrt(t) : 7.787 * t + 16.0 / 116.0; };
  double fx = f(x), fy = f(y), fz = f(z);
  return Vec3(116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz));
}

}  // namespace

SuperpixelPartition slic_segment(const ImageRGB& img, int target_n, double compactness,
                                 int iterations, int min_region) {
  const int w = img.width, h = img.height;
  const size_t npx = size_t(w) * h;
  if (target_n < 1 || size_t(target_n) > npx)
    fail(Err::DegenerateRequest, "superpixel count out of range");
  if (size_t(target_n) == npx) return pixel_partition(w, h);

  std::vector<Vec3> lab(npx);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) lab[img.idx(x, y)] = rgb_to_lab(img.color(x, y));

  const double step = std::sqrt(double(npx) / target_n);
  int nx = std::max(1, int(std::lround(w / step)));
  int ny = std::max(1, int(std::lround(h / step)));

  struct Center {
    Vec3 lab;
    double x, y;
  };
  std::vector<Center> centers;
  centers.reserve(size_t(nx) * ny);
  for (int gy = 0; gy < ny; ++gy)
    for (int gx = 0; gx < nx; ++gx) {
      int px = std::clamp(int((gx + 0.5) * w / nx), 0, w - 1);
      int py = std::clamp(int((gy + 0.5) * h / ny), 0, h - 1);
      // Move off strong gradients inside a 3x3 window.
      double best_grad = std::numeric_limits<double>::max();
      int bx = px, by = py;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          int qx = px + dx, qy = py + dy;
          if (qx < 1 || qx >= w - 1 || qy < 1 || qy >= h - 1) continue;
          double g = (lab[img.idx(qx + 1, qy)] - lab[img.idx(qx - 1, qy)]).squaredNorm() +
                     (lab[img.idx(qx, qy + 1)] - lab[img.idx(qx, qy - 1)]).squaredNorm();
          if (g < best_grad - 1e-12) {
            best_grad = g;
            bx = qx;
            by = qy;
          }
        }
      centers.push_back({lab[img.idx(bx, by)], double(bx), double(by)});
    }

  const double inv_s2 = (compactness * compactness) / (step * step);
  std::vector<int> assign(npx, 0);
  std::vector<double> best(npx);
  for (int iter = 0; iter < iterations; ++iter) {
    std::fill(best.begin(), best.end(), std::numeric_limits<double>::max());
    for (size_t c = 0; c < centers.size(); ++c) {
      const Center& ctr = centers[c];
      int x0 = std::max(0, int(ctr.x - 2 * step)), x1 = std::min(w - 1, int(ctr.x + 2 * step));
      int y0 = std::max(0, int(ctr.y - 2 * step)), y1 = std::min(h - 1, int(ctr.y + 2 * step));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          size_t i = img.idx(x, y);
          double d = (lab[i] - ctr.lab).squaredNorm() +
                     ((x - ctr.x) * (x - ctr.x) + (y - ctr.y) * (y - ctr.y)) * inv_s2;
          if (d < best[i]) {  // strict: ties stay with the lower center id
            best[i] = d;
            assign[i] = int(c);
          }
        }
    }
    std::vector<Vec3> sum_lab(centers.size(), Vec3::Zero());
    std::vector<double> sum_x(centers.size(), 0), sum_y(centers.size(), 0);
    std::vector<size_t> cnt(centers.size(), 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        size_t i = img.idx(x, y);
        sum_lab[assign[i]] += lab[i];
        sum_x[assign[i]] += x;
        sum_y[assign[i]] += y;
        cnt[assign[i]]++;
      }
    for (size_t c = 0; c < centers.size(); ++c)
      if (cnt[c] > 0)
        centers[c] = {sum_lab[c] / double(cnt[c]), sum_x[c] / cnt[c], sum_y[c] / cnt[c]};
  }

  std::vector<int> labels = enforce_connectivity(assign, w, h, min_region);
  SuperpixelPartition part;
  part.width = w;
  part.height = h;
  part.count = 1 + *std::max_element(labels.begin(), labels.end());
  part.labels = std::move(labels);
  derive_fields(part);
  return part;
}

}  // namespace psfm
