#include "psfm/evaluate.hpp"

#include <algorithm>
#include <cmath>

namespace psfm {

namespace {

std::vector<size_t> joint_indices(const DepthMap& est, const DepthMap& gt,
                                  const std::vector<uint8_t>* mask) {
  if (est.width != gt.width || est.height != gt.height)
    fail(Err::InvariantViolation, "depth map dimensions differ");
  if (mask && mask->size() != est.z.size())
    fail(Err::InvariantViolation, "mask size mismatch");
  std::vector<size_t> idx;
  for (size_t i = 0; i < est.z.size(); ++i)
    if (est.valid[i] && gt.valid[i] && (!mask || (*mask)[i])) idx.push_back(i);
  if (idx.empty()) fail(Err::NoOverlap, "no jointly valid pixels");
  return idx;
}

}  // namespace

double align_scale(const DepthMap& est, const DepthMap& gt, ScaleAlignment method,
                   const std::vector<uint8_t>* mask) {
  std::vector<size_t> idx = joint_indices(est, gt, mask);
  if (method == ScaleAlignment::MedianRatio) {
    std::vector<double> ratios;
    ratios.reserve(idx.size());
    for (size_t i : idx) ratios.push_back(double(gt.z[i]) / double(est.z[i]));
    size_t mid = ratios.size() / 2;
    std::nth_element(ratios.begin(), ratios.begin() + mid, ratios.end());
    if (ratios.size() % 2 == 1) return ratios[mid];
    double hi = ratios[mid];
    std::nth_element(ratios.begin(), ratios.begin() + mid - 1, ratios.end());
    return 0.5 * (ratios[mid - 1] + hi);
  }
  double num = 0, den = 0;
  for (size_t i : idx) {
    num += double(gt.z[i]) * double(est.z[i]);
    den += double(est.z[i]) * double(est.z[i]);
  }
  if (den <= 0) fail(Err::NoOverlap, "degenerate least-squares alignment");
  return num / den;
}

double mre(const DepthMap& est, const DepthMap& gt, const std::vector<uint8_t>* mask) {
  std::vector<size_t> idx = joint_indices(est, gt, mask);
  double sum = 0;
  for (size_t i : idx) sum += std::abs(double(gt.z[i]) - double(est.z[i])) / double(gt.z[i]);
  return sum / double(idx.size());
}

double rmse(const DepthMap& est, const DepthMap& gt, const std::vector<uint8_t>* mask) {
  std::vector<size_t> idx = joint_indices(est, gt, mask);
  double sum = 0;
  for (size_t i : idx) {
    double d = double(gt.z[i]) - double(est.z[i]);
    sum += d * d;
  }
  return std::sqrt(sum / double(idx.size()));
}

MetricReport score_depth(const DepthMap& est, const DepthMap& gt, ScaleAlignment method,
                         const std::vector<uint8_t>* mask) {
  MetricReport report;
  report.alignment_scale = align_scale(est, gt, method, mask);
  DepthMap aligned = est;
  for (size_t i = 0; i < aligned.z.size(); ++i)
    if (aligned.valid[i]) aligned.z[i] = float(double(aligned.z[i]) * report.alignment_scale);
  report.points = joint_indices(aligned, gt, mask).size();
  report.mre = mre(aligned, gt, mask);
  report.rmse = rmse(aligned, gt, mask);
  return report;
}

nlohmann::json MetricReport::to_json() const {
  return {{"mre", mre}, {"rmse", rmse}, {"points", points}, {"alignment_scale", alignment_scale}};
}

}  // namespace psfm
