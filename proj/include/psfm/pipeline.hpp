#pragma once

#include "psfm/config.hpp"
#include "psfm/core.hpp"
#include "psfm/energy.hpp"
#include "psfm/graph.hpp"
#include "psfm/optimize.hpp"
#include "psfm/scene_io.hpp"
#include "psfm/segmentation.hpp"

#include <optional>
#include <string>

namespace psfm {

struct ReconstructionInputs {
  ImageRGB ref;
  ImageRGB next;
  DenseFlow flow;
  Intrinsics K;
  std::optional<LabelMap> labels;  // external segmentation
};

struct ReconstructionResult {
  SuperpixelPartition part;
  SceneGraph graph;
  std::vector<NodeGeometry> geom;
  Eigen::VectorXd lambda;
  DepthMap depth1, depth2;
  double final_energy = 0;
  nlohmann::json trace;
};

/// Full pipeline: segment, build the neighbor graphs, fit per-superpixel
/// two-view motion and plane geometry, solve the scales, refine, and render
/// both depth maps.
ReconstructionResult reconstruct(const ReconstructionInputs& in, const RunConfig& cfg);

/// Render depth maps for a solved state: frame 1 from each superpixel's
/// plane, frame 2 by moving every plane and keeping the nearest candidate
/// that back-warps into its own frame-1 region.
void render_depth_maps(const SuperpixelPartition& part, const std::vector<NodeGeometry>& geom,
                       const Eigen::VectorXd& lambda, const Intrinsics& K, DepthMap& depth1,
                       DepthMap& depth2);

/// File-level front end: loads inputs, runs, writes depth1.pfm, depth2.pfm,
/// scales.json, trace.json and the echoed config.json into out_dir.
ReconstructionResult reconstruct_files(const std::string& ref_path, const std::string& next_path,
                                       const std::string& flow_path,
                                       const std::string& intrinsics_path,
                                       const std::string& out_dir, const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Experiment harness

struct AblationRow {
  std::string config;
  double mre = 0;
  double rmse = 0;
  double energy = 0;
};

/// Four runs with cumulative term activation (rigidity only; +reprojection;
/// +continuity; +orientation), scored against the bundle's frame-1 ground
/// truth.
std::vector<AblationRow> ablation_run(const std::string& bundle_dir, const RunConfig& base);

enum class SweepAxis { SuperpixelCount, K, FlowNoise, GridVsSlic };

struct SweepRow {
  std::string axis;
  std::string value;
  double mre = 0;
  double rmse = 0;
};

std::vector<SweepRow> sensitivity_run(const std::string& bundle_dir, SweepAxis axis,
                                      const std::vector<std::string>& values,
                                      const RunConfig& base);

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

/// Run the pipeline on a scene bundle directory (uses the bundle's own label
/// map when the config asks for label segmentation without a path).
ReconstructionResult reconstruct_bundle(const std::string& bundle_dir, const RunConfig& cfg);

}  // namespace psfm
