#pragma once

#include "psfm/core.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace psfm {

enum class ScaleAlignment { MedianRatio, LeastSquares };

/// Global scale c so that c * est best matches gt over jointly valid pixels.
/// MedianRatio (default) is the median of gt/est; LeastSquares minimizes
/// sum (gt - c est)^2. Throws NoOverlap when no pixel is valid in both maps.
double align_scale(const DepthMap& est, const DepthMap& gt,
                   ScaleAlignment method = ScaleAlignment::MedianRatio,
                   const std::vector<uint8_t>* mask = nullptr);

/// Mean relative error (1/P) sum |gt - est| / gt over jointly valid pixels.
/// Callers align first; these are the raw formulas.
double mre(const DepthMap& est, const DepthMap& gt, const std::vector<uint8_t>* mask = nullptr);
double rmse(const DepthMap& est, const DepthMap& gt, const std::vector<uint8_t>* mask = nullptr);

struct MetricReport {
  double mre = 0;
  double rmse = 0;
  size_t points = 0;
  double alignment_scale = 1.0;
  nlohmann::json to_json() const;
};

/// Align (by the chosen statistic) then score.
MetricReport score_depth(const DepthMap& est, const DepthMap& gt,
                         ScaleAlignment method = ScaleAlignment::MedianRatio,
                         const std::vector<uint8_t>* mask = nullptr);

}  // namespace psfm
