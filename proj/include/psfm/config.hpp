#pragma once

#include "psfm/core.hpp"
#include "psfm/energy.hpp"
#include "psfm/local_sfm.hpp"
#include "psfm/optimize.hpp"

#include <json.hpp>

#include <string>

namespace psfm {

/// One document holding every tunable of a reconstruction run. The effective
/// (defaulted) config is echoed next to the outputs so a run can be
/// reproduced exactly.
struct RunConfig {
  enum class Segmentation { Grid, Slic, Labels };

  Segmentation segmentation = Segmentation::Slic;
  int target_superpixels = 1000;
  double slic_compactness = 10.0;
  int slic_min_region = 16;
  std::string labels_path;  // Segmentation::Labels input

  EnergyParams energy;
  SolverConfig solver;
  RansacOptions ransac;
  int max_corrs_per_superpixel = 200;
  int min_corrs_for_motion = 8;
  int min_superpixel_px = 16;  // below this, motion borrows neighbor flow

  uint64_t seed = 0;
  int threads = 0;  // 0 = all cores
  bool dump_graph = false;
  bool dump_trace = true;

  int effective_threads() const { return threads > 0 ? threads : default_thread_count(); }
  void validate() const;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;
};

}  // namespace psfm
