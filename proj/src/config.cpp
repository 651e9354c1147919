#include "psfm/config.hpp"

#include <fstream>

namespace psfm {

void RunConfig::validate() const {
  energy.validate();
  solver.validate();
  if (target_superpixels < 1) fail(Err::InvariantViolation, "target_superpixels must be >= 1");
  if (max_corrs_per_superpixel < 4)
    fail(Err::InvariantViolation, "max_corrs_per_superpixel too small");
  if (segmentation == Segmentation::Labels && labels_path.empty())
    fail(Err::MissingField, "label segmentation requested without labels_path");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["segmentation"]["method"] = segmentation == Segmentation::Grid   ? "grid"
                                : segmentation == Segmentation::Slic ? "slic"
                                                                     : "labels";
  j["segmentation"]["target_superpixels"] = target_superpixels;
  j["segmentation"]["slic_compactness"] = slic_compactness;
  j["segmentation"]["slic_min_region"] = slic_min_region;
  j["segmentation"]["labels_path"] = labels_path;

  j["energy"] = {{"alpha_proj", energy.alpha_proj},
                 {"alpha_cont", energy.alpha_cont},
                 {"alpha_orient", energy.alpha_orient},
                 {"w3", energy.w3},
                 {"beta_spatial", energy.beta_spatial},
                 {"beta_color", energy.beta_color},
                 {"sigma_trunc", energy.sigma_trunc},
                 {"n_trunc", energy.n_trunc},
                 {"K", energy.K}};

  j["solver"] = {{"max_outer_iters", solver.max_outer_iters},
                 {"particles_per_node", solver.particles_per_node},
                 {"anneal", solver.anneal},
                 {"eps_floor_scale", solver.eps_floor_scale},
                 {"resolve_scales_each_round", solver.resolve_scales_each_round},
                 {"exact_message_passing", solver.exact_message_passing},
                 {"message_passing_sweeps", solver.message_passing_sweeps},
                 {"greedy_sweeps", solver.greedy_sweeps},
                 {"perturb",
                  {{"normal_deg", rad2deg(solver.perturb.normal_rad)},
                   {"rotation_deg", rad2deg(solver.perturb.rotation_rad)},
                   {"translation_deg", rad2deg(solver.perturb.translation_rad)},
                   {"depth_rel", solver.perturb.depth_rel}}},
                 {"continuous",
                  {{"max_iters", solver.continuous.max_iters},
                   {"grad_tol", solver.continuous.grad_tol},
                   {"initial_step", solver.continuous.initial_step},
                   {"armijo_c", solver.continuous.armijo_c},
                   {"min_step", solver.continuous.min_step},
                   {"rel_decrease_tol", solver.continuous.rel_decrease_tol}}}};

  j["ransac"] = {{"iterations", ransac.iterations}, {"inlier_px", ransac.inlier_px}};
  j["max_corrs_per_superpixel"] = max_corrs_per_superpixel;
  j["min_corrs_for_motion"] = min_corrs_for_motion;
  j["min_superpixel_px"] = min_superpixel_px;
  j["seed"] = seed;
  j["threads"] = threads;
  j["dump_graph"] = dump_graph;
  j["dump_trace"] = dump_trace;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  if (j.contains("segmentation")) {
    const auto& s = j["segmentation"];
    std::string method = s.value("method", "slic");
    if (method == "grid")
      c.segmentation = Segmentation::Grid;
    else if (method == "slic")
      c.segmentation = Segmentation::Slic;
    else if (method == "labels")
      c.segmentation = Segmentation::Labels;
    else
      fail(Err::MissingField, "unknown segmentation method '" + method + "'");
    c.target_superpixels = s.value("target_superpixels", c.target_superpixels);
    c.slic_compactness = s.value("slic_compactness", c.slic_compactness);
    c.slic_min_region = s.value("slic_min_region", c.slic_min_region);
    c.labels_path = s.value("labels_path", c.labels_path);
  }
  if (j.contains("energy")) {
    const auto& e = j["energy"];
    c.energy.alpha_proj = e.value("alpha_proj", c.energy.alpha_proj);
    c.energy.alpha_cont = e.value("alpha_cont", c.energy.alpha_cont);
    c.energy.alpha_orient = e.value("alpha_orient", c.energy.alpha_orient);
    c.energy.w3 = e.value("w3", c.energy.w3);
    c.energy.beta_spatial = e.value("beta_spatial", c.energy.beta_spatial);
    c.energy.beta_color = e.value("beta_color", c.energy.beta_color);
    c.energy.sigma_trunc = e.value("sigma_trunc", c.energy.sigma_trunc);
    c.energy.n_trunc = e.value("n_trunc", c.energy.n_trunc);
    c.energy.K = e.value("K", c.energy.K);
  }
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    c.solver.max_outer_iters = s.value("max_outer_iters", c.solver.max_outer_iters);
    c.solver.particles_per_node = s.value("particles_per_node", c.solver.particles_per_node);
    c.solver.anneal = s.value("anneal", c.solver.anneal);
    c.solver.eps_floor_scale = s.value("eps_floor_scale", c.solver.eps_floor_scale);
    c.solver.resolve_scales_each_round =
        s.value("resolve_scales_each_round", c.solver.resolve_scales_each_round);
    c.solver.exact_message_passing =
        s.value("exact_message_passing", c.solver.exact_message_passing);
    c.solver.message_passing_sweeps =
        s.value("message_passing_sweeps", c.solver.message_passing_sweeps);
    c.solver.greedy_sweeps = s.value("greedy_sweeps", c.solver.greedy_sweeps);
    if (s.contains("perturb")) {
      const auto& p = s["perturb"];
      c.solver.perturb.normal_rad = deg2rad(p.value("normal_deg", rad2deg(c.solver.perturb.normal_rad)));
      c.solver.perturb.rotation_rad =
          deg2rad(p.value("rotation_deg", rad2deg(c.solver.perturb.rotation_rad)));
      c.solver.perturb.translation_rad =
          deg2rad(p.value("translation_deg", rad2deg(c.solver.perturb.translation_rad)));
      c.solver.perturb.depth_rel = p.value("depth_rel", c.solver.perturb.depth_rel);
    }
    if (s.contains("continuous")) {
      const auto& cc = s["continuous"];
      c.solver.continuous.max_iters = cc.value("max_iters", c.solver.continuous.max_iters);
      c.solver.continuous.grad_tol = cc.value("grad_tol", c.solver.continuous.grad_tol);
      c.solver.continuous.initial_step = cc.value("initial_step", c.solver.continuous.initial_step);
      c.solver.continuous.armijo_c = cc.value("armijo_c", c.solver.continuous.armijo_c);
      c.solver.continuous.min_step = cc.value("min_step", c.solver.continuous.min_step);
      c.solver.continuous.rel_decrease_tol =
          cc.value("rel_decrease_tol", c.solver.continuous.rel_decrease_tol);
    }
  }
  if (j.contains("ransac")) {
    c.ransac.iterations = j["ransac"].value("iterations", c.ransac.iterations);
    c.ransac.inlier_px = j["ransac"].value("inlier_px", c.ransac.inlier_px);
  }
  c.max_corrs_per_superpixel = j.value("max_corrs_per_superpixel", c.max_corrs_per_superpixel);
  c.min_corrs_for_motion = j.value("min_corrs_for_motion", c.min_corrs_for_motion);
  c.min_superpixel_px = j.value("min_superpixel_px", c.min_superpixel_px);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.dump_graph = j.value("dump_graph", c.dump_graph);
  c.dump_trace = j.value("dump_trace", c.dump_trace);
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Err::IoFailure, "cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Err::MalformedHeader, "bad config JSON in '" + path + "': " + e.what());
  }
  return from_json(j);
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) fail(Err::IoFailure, "cannot write config '" + path + "'");
  out << to_json().dump(2) << "\n";
}

}  // namespace psfm
