#pragma once

#include <cstdlib>
#include <iostream>

#include "rmpflow/config.hpp"
#include "rmpflow/io.hpp"
#include "rmpflow/verify.hpp"

namespace rmpflow::cli {

namespace fs = std::filesystem;

inline bool log_enabled() {
  const char* level = std::getenv("RMPFLAB_LOG");
  return level != nullptr && std::string(level) != "quiet" && std::string(level) != "error";
}

inline void log_info(const std::string& msg) {
  if (log_enabled()) std::cerr << "[rmpflab] " << msg << "\n";
}

namespace detail {

inline json metrics_to_json(const TrialMetrics& m) {
  json j;
  j["time_to_goal"] = m.time_to_goal;
  j["cspace_path_length"] = m.cspace_path_length;
  j["min_goal_distance"] = m.min_goal_distance;
  j["collision_intensity"] = m.collision_intensity;
  j["collided"] = m.collided;
  j["timed_out"] = m.timed_out;
  j["failed"] = m.failed;
  if (m.failed) j["failure_reason"] = m.failure_reason;
  return j;
}

inline json report_to_json(const verify::CheckReport& r) {
  json j;
  j["name"] = r.name;
  j["samples"] = r.samples;
  j["max_abs_err"] = r.max_abs_err;
  j["max_rel_err"] = r.max_rel_err;
  j["tolerance"] = r.tolerance;
  j["passed"] = r.passed;
  j["skipped"] = r.skipped;
  if (!r.note.empty()) j["note"] = r.note;
  j["failures"] = json::array();
  for (const auto& f : r.failures) j["failures"].push_back({{"digest", f.digest}, {"err", f.err}});
  return j;
}

/// Fills the min_dist column of exp1d trajectories with the task value x.
inline void fill_task_value_column(Trajectory& traj) {
  for (auto& s : traj.samples) s.min_dist = 1.0 / s.q(0);
}

inline json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline json matrix_to_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

/// Per-node RMP dump (state and natural form) at one evaluation.
inline json tree_debug_json(RmpTree& tree, const Vector& q, const Vector& qdot) {
  std::vector<NodeSnapshot> snaps;
  tree.evaluate(q, qdot, &snaps);
  json out = json::array();
  for (const auto& s : snaps) {
    json node;
    node["path"] = s.path;
    node["x"] = vector_to_json(s.x);
    node["xdot"] = vector_to_json(s.xdot);
    node["f"] = vector_to_json(s.rmp.f);
    node["M"] = matrix_to_json(s.rmp.M);
    out.push_back(std::move(node));
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// run: the 1-D and 2-D controlled experiments.
// ---------------------------------------------------------------------------

inline int run_exp1d(const ExperimentConfig& cfg, const fs::path& out, bool dump_tree) {
  const Exp1dConfig& e = cfg.exp1d;
  const Vector q0 = Vector::Constant(1, e.q0);
  const Vector qdot0 = Vector::Constant(1, e.qdot0);

  if (dump_tree) {
    RmpTree tree = build_exp1d_tree(e.x_goal);
    io::write_text(out / (cfg.out_prefix + "_tree_debug.json"),
                   detail::tree_debug_json(tree, q0, qdot0).dump(2) + "\n");
  }

  struct Variant {
    std::string name;
    bool use_jdot;
    Exp1dDamping damping;
  };
  const std::vector<Variant> variants = {
      {"with_jdot", true, Exp1dDamping::kStandard},
      {"no_jdot", false, Exp1dDamping::kStandard},
      {"no_jdot_damped", false, Exp1dDamping::kNonlinearVelocity},
  };

  // Task-space reference: the designed GDS integrated directly in x.
  const double x0 = 1.0 / e.q0;
  const double xd0 = -e.qdot0 / (e.q0 * e.q0);
  Trajectory reference;
  {
    const Policy ref = exp1d_reference_policy(e.x_goal);
    SimState s{0.0, Vector::Constant(1, x0), Vector::Constant(1, xd0)};
    const int steps_per_record =
        std::max(1, static_cast<int>(std::lround(cfg.integrator.record_dt / cfg.integrator.dt)));
    int step = 0;
    reference.samples.push_back({0.0, s.q, s.qdot, 0, 0, s.q(0), 0, 0});
    while (s.t < cfg.integrator.timeout - 0.5 * cfg.integrator.dt) {
      s = integrate_step(ref, s, cfg.integrator.dt);
      if (++step % steps_per_record == 0)
        reference.samples.push_back({s.t, s.q, s.qdot, 0, 0, s.q(0), 0, 0});
    }
    io::write_trajectory_csv(out / (cfg.out_prefix + "_reference.csv"), reference, 1);
  }

  json metrics;
  for (const auto& v : variants) {
    RmpTree tree = build_exp1d_tree(e.x_goal, v.damping);
    tree.options.use_jdot = v.use_jdot;
    IntegratorParams ip = cfg.integrator;
    ip.v_eps = 0.0;  // full horizon for the portraits
    auto [traj, trial] = run_trial(tree, q0, qdot0, ip);
    detail::fill_task_value_column(traj);
    io::write_trajectory_csv(out / (cfg.out_prefix + "_" + v.name + ".csv"), traj, 1);

    // Sup-norm deviation of the task trajectory from the designed one.
    double sup = 0.0;
    const std::size_t n = std::min(traj.samples.size(), reference.samples.size());
    for (std::size_t i = 0; i < n; ++i)
      sup = std::max(sup, std::abs(1.0 / traj.samples[i].q(0) -
                                   reference.samples[i].q(0)));
    const double x_final = 1.0 / traj.samples.back().q(0);

    RmpTree lyap_tree = build_exp1d_tree(e.x_goal, v.damping);
    lyap_tree.options.use_jdot = v.use_jdot;
    IntegratorParams lip = cfg.integrator;
    lip.record_dt = lip.dt;
    lip.v_eps = 0.0;
    auto [ltraj, lmetrics] = run_trial(lyap_tree, q0, qdot0, lip);
    const verify::CheckReport lyap = verify::check_lyapunov(ltraj, lyap_tree);

    json m = detail::metrics_to_json(trial);
    m["final_goal_error"] = std::abs(x_final - e.x_goal);
    m["sup_deviation_from_reference"] = sup;
    m["lyapunov_max_violation"] = lyap.max_abs_err;
    m["lyapunov_passed"] = lyap.passed;
    metrics[v.name] = std::move(m);
    log_info("exp1d " + v.name + ": |x(T)-x0| = " + io::format_double(std::abs(x_final - e.x_goal)));
  }

  // Phase portrait grid in the task space: designed field next to the
  // executed pullback fields.
  {
    io::CsvWriter csv(out / (cfg.out_prefix + "_phase.csv"),
                      {"x", "xd", "xdd_designed", "xdd_with_jdot", "xdd_no_jdot",
                       "xdd_no_jdot_damped"});
    std::vector<RmpTree> trees;
    for (const auto& v : variants) {
      trees.push_back(build_exp1d_tree(e.x_goal, v.damping));
      trees.back().options.use_jdot = v.use_jdot;
    }
    const Policy designed = exp1d_reference_policy(e.x_goal);
    const TaskMap barrier = reciprocal_map();
    for (int i = 0; i <= 40; ++i) {
      for (int k = 0; k <= 40; ++k) {
        const double x = 0.2 + 1.8 * i / 40.0;
        const double xd = -2.0 + 4.0 * k / 40.0;
        const double q = 1.0 / x;
        const double qd = -xd * q * q;  // xd = -qd/q^2
        std::vector<double> row{x, xd,
                                designed(Vector::Constant(1, x), Vector::Constant(1, xd))(0)};
        for (auto& tree : trees) {
          const Vector qdd = tree.evaluate(Vector::Constant(1, q), Vector::Constant(1, qd)).qddot;
          const TaskMapEval ev = taskmap_apply(barrier, Vector::Constant(1, q),
                                               Vector::Constant(1, qd));
          row.push_back(ev.J(0, 0) * qdd(0) + ev.jdotxdot(0));
        }
        csv.row(row);
      }
    }
  }

  io::write_text(out / (cfg.out_prefix + "_metrics.json"), metrics.dump(2) + "\n");
  return 0;
}

inline int run_exp2d(const ExperimentConfig& cfg, const fs::path& out, bool dump_tree) {
  const Exp2dConfig& e = cfg.exp2d;
  Scene scene = cfg.exp2d_scene;

  Exp2dParams params;
  params.collision = e.collision;
  params.attractor = e.attractor;
  params.with_attractor = e.with_attractor;

  if (dump_tree && !e.fan.empty()) {
    RmpTree tree = build_exp2d_tree(scene, params);
    io::write_text(out / (cfg.out_prefix + "_tree_debug.json"),
                   detail::tree_debug_json(tree, e.fan[0].q, e.fan[0].qdot).dump(2) + "\n");
  }

  struct Variant {
    std::string name;
    bool use_curvature;
  };
  std::vector<Variant> variants;
  if (e.compare_curvature)
    variants = {{"curv", true}, {"nocurv", false}};
  else
    variants = {{cfg.disable_curvature ? "nocurv" : "curv", !cfg.disable_curvature}};

  json metrics;
  const TrialContext ctx = particle_trial_context(scene, e.with_attractor);
  for (const auto& v : variants) {
    json per_ic = json::array();
    for (std::size_t ic = 0; ic < e.fan.size(); ++ic) {
      RmpTree tree = build_exp2d_tree(scene, params);
      tree.options.use_curvature = v.use_curvature;
      tree.options.use_jdot = !cfg.disable_jdot;
      IntegratorParams ip = cfg.integrator;
      ip.v_eps = 0.0;
      auto [traj, trial] = run_trial(tree, e.fan[ic].q, e.fan[ic].qdot, ip, ctx);
      char suffix[32];
      std::snprintf(suffix, sizeof(suffix), "_%s_ic%02zu.csv", v.name.c_str(), ic);
      io::write_trajectory_csv(out / (cfg.out_prefix + suffix), traj, 2);

      double min_s = std::numeric_limits<double>::infinity();
      double straight_dev = 0.0;
      for (const auto& s : traj.samples) {
        min_s = std::min(min_s, s.min_dist);
        const Vector line = e.fan[ic].q + s.t * e.fan[ic].qdot;
        straight_dev = std::max(straight_dev, (s.q - line).norm());
      }
      json m = detail::metrics_to_json(trial);
      m["min_obstacle_distance"] = min_s;
      m["max_straightline_deviation"] = straight_dev;
      per_ic.push_back(std::move(m));
    }
    metrics[v.name] = std::move(per_ic);
  }

  // Acceleration field over a position grid at the probe velocity.
  {
    RmpTree tree = build_exp2d_tree(scene, params);
    tree.options.use_jdot = !cfg.disable_jdot;
    io::CsvWriter csv(out / (cfg.out_prefix + "_field.csv"), {"x", "y", "ax", "ay"});
    for (int i = 0; i <= 40; ++i) {
      for (int k = 0; k <= 40; ++k) {
        Vector q(2);
        q << -3.0 + 6.0 * i / 40.0, -3.0 + 6.0 * k / 40.0;
        bool inside = false;
        for (const auto& o : scene.obstacles)
          inside = inside || (q - o.center).norm() <= o.radius + 1e-6;
        if (inside) continue;
        const Vector a = tree.evaluate(q, e.field_probe_qdot).qddot;
        csv.row({q(0), q(1), a(0), a(1)});
      }
    }
  }

  io::write_text(out / (cfg.out_prefix + "_metrics.json"), metrics.dump(2) + "\n");
  return 0;
}

inline int cmd_run(const std::string& config_path, const std::string& out_dir,
                   std::optional<std::uint64_t> seed_override, bool dump_tree = false) {
  ExperimentConfig cfg;
  try {
    cfg = parse_config_file(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  if (seed_override) cfg.seed = *seed_override;
  try {
    const fs::path out(out_dir);
    fs::create_directories(out);
    if (cfg.kind == "exp1d") return run_exp1d(cfg, out, dump_tree);
    if (cfg.kind == "exp2d") return run_exp2d(cfg, out, dump_tree);
    std::cerr << "config error: 'run' handles exp1d/exp2d configs; got kind '" << cfg.kind
              << "'\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 1;
  }
}

// ---------------------------------------------------------------------------
// reach: the desk-scale reaching suite.
// ---------------------------------------------------------------------------

inline int cmd_reach(const std::string& config_path, const std::string& out_dir,
                     std::optional<std::uint64_t> seed_override, int jobs) {
  ExperimentConfig cfg;
  try {
    cfg = parse_config_file(config_path);
    if (cfg.kind != "reach")
      throw ConfigError(config_path + ": 'reach' needs a config with kind 'reach'");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  if (seed_override) cfg.seed = *seed_override;

  try {
    const fs::path out(out_dir);
    fs::create_directories(out);

    SuiteSpec spec;
    spec.scenes = cfg.reach.scenes;
    spec.targets_per_scene = cfg.reach.targets_per_scene;
    spec.seed = cfg.seed;
    spec.integrator = cfg.integrator;
    spec.leaves = cfg.reach.leaves;
    spec.pf = cfg.reach.pf;
    spec.methods = cfg.reach.methods;
    spec.target_lo = cfg.reach.target_lo;
    spec.target_hi = cfg.reach.target_hi;
    spec.jobs = jobs;

    log_info("reach: " + std::to_string(spec.scenes.size()) + " scenes x " +
             std::to_string(spec.targets_per_scene) + " targets x " +
             std::to_string(spec.methods.size()) + " methods");
    const SuiteSummary summary = run_suite(spec);

    const int dof = cfg.reach.scenes.front().arm.dof();
    for (const auto& rec : summary.records) {
      char name[128];
      std::snprintf(name, sizeof(name), "%s_%s_t%02d.csv",
                    cfg.reach.scene_names[rec.scene_index].c_str(), rec.method.c_str(),
                    rec.target_index);
      io::write_trajectory_csv(out / name, rec.trajectory, dof);
    }

    json report;
    report["targets"] = json::array();
    for (std::size_t s = 0; s < summary.targets.size(); ++s) {
      json per_scene = json::array();
      for (const auto& t : summary.targets[s]) per_scene.push_back({t(0), t(1)});
      report["targets"].push_back(per_scene);
    }
    report["trials"] = json::array();
    for (const auto& rec : summary.records) {
      json t = detail::metrics_to_json(rec.metrics);
      t["scene"] = cfg.reach.scene_names[rec.scene_index];
      t["method"] = rec.method;
      t["target_index"] = rec.target_index;
      t["target"] = {rec.target(0), rec.target(1)};
      report["trials"].push_back(std::move(t));
    }
    report["summary"] = json::object();
    for (const auto& [label, ms] : summary.by_method) {
      json m;
      m["trials"] = ms.trials;
      m["failures"] = ms.failures;
      m["time_to_goal"] = {{"mean", ms.time_to_goal.mean}, {"std", ms.time_to_goal.stddev}};
      m["cspace_path_length"] = {{"mean", ms.path_length.mean}, {"std", ms.path_length.stddev}};
      m["min_goal_distance"] = {{"mean", ms.goal_distance.mean},
                                {"std", ms.goal_distance.stddev}};
      m["collision_intensity"] = {{"mean", ms.collision_intensity.mean},
                                  {"std", ms.collision_intensity.stddev}};
      m["collided_fraction"] = ms.collided_fraction;
      report["summary"][label] = std::move(m);
    }
    io::write_text(out / (cfg.out_prefix + "_summary.json"), report.dump(2) + "\n");

    std::string csv_text =
        "method,time_mean,time_std,length_mean,length_std,goal_dist_mean,goal_dist_std,"
        "collision_intensity_mean,collision_intensity_std,collided_fraction\n";
    for (const auto& [label, ms] : summary.by_method) {
      csv_text += label;
      for (double v : {ms.time_to_goal.mean, ms.time_to_goal.stddev, ms.path_length.mean,
                       ms.path_length.stddev, ms.goal_distance.mean, ms.goal_distance.stddev,
                       ms.collision_intensity.mean, ms.collision_intensity.stddev,
                       ms.collided_fraction})
        csv_text += "," + io::format_double(v);
      csv_text += "\n";
    }
    io::write_text(out / (cfg.out_prefix + "_summary.csv"), csv_text);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 1;
  }
}

// ---------------------------------------------------------------------------
// verify: numerical certification of the analysis.
// ---------------------------------------------------------------------------

inline int cmd_verify(const std::string& selector, const std::string& out_dir,
                      std::uint64_t seed) {
  const std::set<std::string> known = {"all",        "closure",    "lyapunov",
                                       "coriolis",   "invariance", "xi_psd",
                                       "diagonal",   "geodesic",   "convergence"};
  if (!known.count(selector)) {
    std::cerr << "unknown verify selector '" << selector << "'\n";
    return 2;
  }
  auto want = [&selector](const char* name) { return selector == "all" || selector == name; };

  std::vector<json> entries;
  bool ok = true;
  auto add = [&](const verify::CheckReport& rep, bool expected_fail = false) {
    json j = detail::report_to_json(rep);
    if (expected_fail) {
      j["expected_fail"] = true;
      j["passed"] = !rep.passed;  // the fixture must report violations
      j["note"] = "ablation fixture: a passing check here is itself a failure";
    }
    if (!(j["passed"].get<bool>() || rep.skipped)) ok = false;
    log_info(rep.name + (j["passed"].get<bool>() ? ": pass" : ": FAIL"));
    entries.push_back(std::move(j));
  };

  try {
    if (want("closure")) {
      add(verify::check_closure_identity(seed + 1));
      add(verify::check_closure(seed + 2, 100, false));
      add(verify::check_closure(seed + 3, 100, true));
    }
    if (want("lyapunov")) {
      add(verify::check_lyapunov_1d(true));
      add(verify::check_lyapunov_1d(false), /*expected_fail=*/true);
      add(verify::check_lyapunov_2d(seed + 4));
    }
    if (want("coriolis")) add(verify::check_coriolis(seed + 5, 100));
    if (want("invariance")) {
      add(verify::check_invariance(verify::identity_diffeo(), 1e-12));
      add(verify::check_invariance(verify::linear_diffeo(2.0), 1e-6));
      add(verify::check_invariance(verify::cubic_diffeo(), 1e-4));
    }
    if (want("xi_psd")) add(verify::check_xi_psd(seed + 6, 1000));
    if (want("diagonal")) add(verify::check_diagonal_scaling(seed + 7, 100));
    if (want("geodesic")) add(verify::check_geodesic(seed + 8));
    if (want("convergence")) add(verify::check_convergence(seed + 9, 50));

    const fs::path out(out_dir);
    fs::create_directories(out);
    json report = json::array();
    for (auto& e : entries) report.push_back(std::move(e));
    io::write_text(out / "verify_report.json", report.dump(2) + "\n");
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 1;
  }
  return ok ? 0 : 1;
}

}  // namespace rmpflow::cli
