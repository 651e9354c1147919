#include "psfm/core.hpp"

#include <algorithm>

namespace psfm {

const char* err_name(Err e) {
  switch (e) {
    case Err::MalformedHeader: return "MalformedHeader";
    case Err::DimensionOverflow: return "DimensionOverflow";
    case Err::IoFailure: return "IoFailure";
    case Err::MissingField: return "MissingField";
    case Err::NonPositiveFocal: return "NonPositiveFocal";
    case Err::InvariantViolation: return "InvariantViolation";
    case Err::DegenerateRequest: return "DegenerateRequest";
    case Err::IdOutOfRange: return "IdOutOfRange";
    case Err::DegenerateConfiguration: return "DegenerateConfiguration";
    case Err::InsufficientParallax: return "InsufficientParallax";
    case Err::InsufficientCorrespondences: return "InsufficientCorrespondences";
    case Err::NumericallySingular: return "NumericallySingular";
    case Err::RayParallelToPlane: return "RayParallelToPlane";
    case Err::NoOverlap: return "NoOverlap";
    case Err::InfeasibleSpec: return "InfeasibleSpec";
    case Err::NonFiniteEnergy: return "NonFiniteEnergy";
  }
  return "Unknown";
}

void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn) {
  if (n == 0) return;
  threads = std::max(1, threads);
  size_t nt = std::min<size_t>(threads, n);
  if (nt <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nt);
  size_t chunk = (n + nt - 1) / nt;
  for (size_t t = 0; t < nt; ++t) {
    size_t lo = t * chunk;
    size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace psfm
