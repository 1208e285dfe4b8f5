#pragma once

#include <json.hpp>
#include <fstream>
#include <optional>
#include <set>

#include "rmpflow/simlab.hpp"

namespace rmpflow::cli {

using nlohmann::json;

/// Schema violation; message carries the config path and, where resolvable,
/// the line of the offending key.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Exp1dConfig {
  double x_goal = 1.0;
  double q0 = 2.0;
  double qdot0 = -1.0;
};

struct FanState {
  Vector q;
  Vector qdot;
};

struct Exp2dConfig {
  InvQuarticParams collision;
  AttractorParams attractor;
  bool with_attractor = false;
  std::vector<FanState> fan;
  bool compare_curvature = true;
  Vector field_probe_qdot;  // velocity used for the acceleration-field grid
};

struct ReachConfig {
  std::vector<Scene> scenes;  // share arm/limits, obstacles differ
  std::vector<std::string> scene_names;
  int targets_per_scene = 10;
  Vector target_lo, target_hi;
  std::vector<MethodSpec> methods;
  ReachLeafParams leaves;
  PfBaselineSpec pf;
};

struct ExperimentConfig {
  int schema = 1;
  std::string kind;  // exp1d | exp2d | reach | verify
  std::uint64_t seed = 0;
  std::string out_prefix;
  IntegratorParams integrator;
  bool disable_jdot = false;
  bool disable_curvature = false;
  std::string damping_variant = "standard";  // standard | nonlinear
  Exp1dConfig exp1d;
  Exp2dConfig exp2d;
  Scene exp2d_scene;
  ReachConfig reach;
  std::string verify_selector = "all";
};

namespace detail {

inline int line_of_key(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return -1;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + pos, '\n'));
}

struct Ctx {
  const std::string* raw;
  std::string file;

  [[noreturn]] void fail(const std::string& what, const std::string& key = "") const {
    std::string msg = file + ": " + what;
    if (!key.empty()) {
      const int line = line_of_key(*raw, key);
      if (line > 0) msg += " (line " + std::to_string(line) + ")";
    }
    throw ConfigError(msg);
  }

  void check_keys(const json& j, const std::string& where,
                  const std::set<std::string>& allowed) const {
    if (!j.is_object()) fail("expected an object at " + where);
    for (const auto& [key, value] : j.items())
      if (!allowed.count(key)) fail("unknown field '" + key + "' in " + where, key);
  }

  double number(const json& j, const std::string& where) const {
    if (!j.is_number()) fail("expected a number at " + where);
    return j.get<double>();
  }

  Vector vector(const json& j, const std::string& where, int want_size = -1) const {
    if (!j.is_array()) fail("expected an array at " + where);
    Vector v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(i) = number(j[i], where);
    if (want_size >= 0 && v.size() != want_size)
      fail("expected " + std::to_string(want_size) + " entries at " + where);
    return v;
  }
};

inline void parse_integrator(const Ctx& ctx, const json& j, IntegratorParams& ip) {
  ctx.check_keys(j, "integrator",
                 {"dt", "record_dt", "timeout", "v_eps", "a_eps", "hold"});
  if (j.contains("dt")) ip.dt = ctx.number(j["dt"], "integrator.dt");
  if (j.contains("record_dt")) ip.record_dt = ctx.number(j["record_dt"], "integrator.record_dt");
  if (j.contains("timeout")) ip.timeout = ctx.number(j["timeout"], "integrator.timeout");
  if (j.contains("v_eps")) ip.v_eps = ctx.number(j["v_eps"], "integrator.v_eps");
  if (j.contains("a_eps")) ip.a_eps = ctx.number(j["a_eps"], "integrator.a_eps");
  if (j.contains("hold")) ip.hold = ctx.number(j["hold"], "integrator.hold");
  if (ip.dt <= 0.0 || ip.record_dt <= 0.0 || ip.timeout <= 0.0)
    ctx.fail("integrator steps and timeout must be positive", "dt");
}

inline void parse_quartic(const Ctx& ctx, const json& j, InvQuarticParams& p) {
  ctx.check_keys(j, "collision", {"alpha", "eta_damp", "epsilon"});
  if (j.contains("alpha")) p.alpha = ctx.number(j["alpha"], "collision.alpha");
  if (j.contains("eta_damp")) p.eta_damp = ctx.number(j["eta_damp"], "collision.eta_damp");
  if (j.contains("epsilon")) p.epsilon = ctx.number(j["epsilon"], "collision.epsilon");
}

inline void parse_collision(const Ctx& ctx, const json& j, CollisionParams& p) {
  ctx.check_keys(j, "collision", {"r_w", "sigma", "alpha", "eta_damp", "epsilon"});
  if (j.contains("r_w")) p.r_w = ctx.number(j["r_w"], "collision.r_w");
  if (j.contains("sigma")) p.sigma = ctx.number(j["sigma"], "collision.sigma");
  if (j.contains("alpha")) p.alpha = ctx.number(j["alpha"], "collision.alpha");
  if (j.contains("eta_damp")) p.eta_damp = ctx.number(j["eta_damp"], "collision.eta_damp");
  if (j.contains("epsilon")) p.epsilon = ctx.number(j["epsilon"], "collision.epsilon");
  p.validate();
}

inline void parse_attractor(const Ctx& ctx, const json& j, AttractorParams& p) {
  ctx.check_keys(j, "attractor",
                 {"eta_softmax", "w_u", "w_l", "sigma_gamma", "sigma_alpha", "eps_stretch",
                  "damp", "metric_kind"});
  if (j.contains("eta_softmax")) p.eta_softmax = ctx.number(j["eta_softmax"], "eta_softmax");
  if (j.contains("w_u")) p.w_u = ctx.number(j["w_u"], "w_u");
  if (j.contains("w_l")) p.w_l = ctx.number(j["w_l"], "w_l");
  if (j.contains("sigma_gamma")) p.sigma_gamma = ctx.number(j["sigma_gamma"], "sigma_gamma");
  if (j.contains("sigma_alpha")) p.sigma_alpha = ctx.number(j["sigma_alpha"], "sigma_alpha");
  if (j.contains("eps_stretch")) p.eps_stretch = ctx.number(j["eps_stretch"], "eps_stretch");
  if (j.contains("damp")) p.damp = ctx.number(j["damp"], "damp");
  if (j.contains("metric_kind")) {
    const std::string kind = j["metric_kind"].get<std::string>();
    if (kind == "uniform")
      p.metric_kind = AttractorMetricKind::kUniform;
    else if (kind == "stretch")
      p.metric_kind = AttractorMetricKind::kStretch;
    else
      ctx.fail("metric_kind must be 'uniform' or 'stretch'", "metric_kind");
  }
  p.validate();
}

inline std::vector<Disk> parse_obstacles(const Ctx& ctx, const json& j,
                                         const std::string& where) {
  if (!j.is_array()) ctx.fail("expected an array at " + where);
  std::vector<Disk> out;
  for (const auto& o : j) {
    ctx.check_keys(o, where, {"center", "radius"});
    if (!o.contains("center") || !o.contains("radius"))
      ctx.fail("obstacles need 'center' and 'radius'", "radius");
    Disk d;
    d.center = ctx.vector(o["center"], where + ".center", 2);
    d.radius = ctx.number(o["radius"], where + ".radius");
    if (d.radius < 0.0) ctx.fail("obstacle radius must be nonnegative", "radius");
    out.push_back(std::move(d));
  }
  return out;
}

inline void parse_exp1d(const Ctx& ctx, const json& j, Exp1dConfig& c) {
  ctx.check_keys(j, "exp1d", {"x_goal", "q0", "qdot0"});
  if (j.contains("x_goal")) c.x_goal = ctx.number(j["x_goal"], "x_goal");
  if (j.contains("q0")) c.q0 = ctx.number(j["q0"], "q0");
  if (j.contains("qdot0")) c.qdot0 = ctx.number(j["qdot0"], "qdot0");
  if (c.x_goal <= 0.0) ctx.fail("exp1d.x_goal must be positive", "x_goal");
  if (c.q0 == 0.0) ctx.fail("exp1d.q0 = 0 is outside the barrier map domain", "q0");
}

inline PlanarArm parse_arm(const Ctx& ctx, const json& j, Scene& scene) {
  ctx.check_keys(j, "arm",
                 {"link_lengths", "control_points", "joint_lower", "joint_upper",
                  "rest_posture"});
  PlanarArm arm;
  for (const auto& l : j.at("link_lengths")) arm.link_lengths.push_back(l.get<double>());
  for (const auto& cp : j.at("control_points")) {
    if (!cp.is_array() || cp.size() != 2)
      ctx.fail("control_points entries are [link_index, fraction]", "control_points");
    arm.control_points.emplace_back(cp[0].get<int>(), cp[1].get<double>());
  }
  arm.validate();
  const int d = arm.dof();
  scene.joint_lower = ctx.vector(j.at("joint_lower"), "arm.joint_lower", d);
  scene.joint_upper = ctx.vector(j.at("joint_upper"), "arm.joint_upper", d);
  scene.rest_posture = ctx.vector(j.at("rest_posture"), "arm.rest_posture", d);
  return arm;
}

}  // namespace detail

namespace detail {
inline ExperimentConfig parse_config_json(const json& j, const Ctx& ctx);
}

inline ExperimentConfig parse_config_text(const std::string& text, const std::string& name) {
  detail::Ctx ctx{&text, name};
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const int line =
        1 + static_cast<int>(std::count(text.begin(),
                                        text.begin() + std::min(text.size(), e.byte), '\n'));
    throw ConfigError(name + ": JSON parse error at line " + std::to_string(line) + ": " +
                      e.what());
  }
  try {
    return detail::parse_config_json(j, ctx);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    // Missing keys and type mismatches surface as json exceptions.
    throw ConfigError(name + ": " + e.what());
  }
}

namespace detail {

inline ExperimentConfig parse_config_json(const json& j, const Ctx& ctx) {
  ExperimentConfig cfg;
  ctx.check_keys(j, "top level",
                 {"schema", "kind", "seed", "out_prefix", "integrator", "ablation", "exp1d",
                  "scene", "collision", "attractor", "fan", "compare_curvature",
                  "field_probe_qdot", "scenes", "arm", "targets_per_scene", "target_box",
                  "methods", "joint_limit", "cspace_damper", "pf", "selector"});
  if (!j.contains("schema") || !j["schema"].is_number_integer() || j["schema"].get<int>() != 1)
    ctx.fail("missing or unsupported 'schema' (expected 1)", "schema");
  if (!j.contains("kind")) ctx.fail("missing 'kind'", "kind");
  cfg.kind = j["kind"].get<std::string>();
  if (cfg.kind != "exp1d" && cfg.kind != "exp2d" && cfg.kind != "reach" &&
      cfg.kind != "verify")
    ctx.fail("kind must be one of exp1d, exp2d, reach, verify", "kind");
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  cfg.out_prefix = j.value("out_prefix", cfg.kind);
  if (j.contains("integrator")) parse_integrator(ctx, j["integrator"], cfg.integrator);
  if (j.contains("ablation")) {
    const json& a = j["ablation"];
    ctx.check_keys(a, "ablation", {"disable_jdot", "disable_curvature", "damping_variant"});
    cfg.disable_jdot = a.value("disable_jdot", false);
    cfg.disable_curvature = a.value("disable_curvature", false);
    cfg.damping_variant = a.value("damping_variant", "standard");
    if (cfg.damping_variant != "standard" && cfg.damping_variant != "nonlinear")
      ctx.fail("damping_variant must be 'standard' or 'nonlinear'", "damping_variant");
  }
  if (j.contains("selector")) cfg.verify_selector = j["selector"].get<std::string>();

  if (cfg.kind == "exp1d") {
    if (j.contains("exp1d")) parse_exp1d(ctx, j["exp1d"], cfg.exp1d);
  } else if (cfg.kind == "exp2d") {
    if (!j.contains("scene")) ctx.fail("exp2d needs a 'scene'", "kind");
    const json& sc = j["scene"];
    ctx.check_keys(sc, "scene", {"obstacles", "goal"});
    Scene scene;
    if (sc.contains("obstacles"))
      scene.obstacles = parse_obstacles(ctx, sc["obstacles"], "scene.obstacles");
    cfg.exp2d.with_attractor = sc.contains("goal");
    if (cfg.exp2d.with_attractor) scene.goal = ctx.vector(sc["goal"], "scene.goal", 2);
    cfg.exp2d_scene = std::move(scene);
    if (j.contains("collision")) parse_quartic(ctx, j["collision"], cfg.exp2d.collision);
    if (j.contains("attractor")) parse_attractor(ctx, j["attractor"], cfg.exp2d.attractor);
    cfg.exp2d.compare_curvature = j.value("compare_curvature", true);
    cfg.exp2d.field_probe_qdot = j.contains("field_probe_qdot")
                                     ? ctx.vector(j["field_probe_qdot"], "field_probe_qdot", 2)
                                     : Vector::Zero(2);
    if (!j.contains("fan")) ctx.fail("exp2d needs a 'fan' of initial states", "kind");
    for (const auto& ic : j["fan"]) {
      ctx.check_keys(ic, "fan", {"q", "qdot"});
      FanState st;
      st.q = ctx.vector(ic.at("q"), "fan.q", 2);
      st.qdot = ctx.vector(ic.at("qdot"), "fan.qdot", 2);
      cfg.exp2d.fan.push_back(std::move(st));
    }
  } else if (cfg.kind == "reach") {
    if (!j.contains("arm")) ctx.fail("reach needs an 'arm'", "kind");
    Scene proto;
    proto.arm = parse_arm(ctx, j["arm"], proto);
    if (!j.contains("scenes")) ctx.fail("reach needs 'scenes'", "kind");
    int index = 0;
    for (const auto& sc : j["scenes"]) {
      ctx.check_keys(sc, "scenes", {"name", "obstacles"});
      Scene scene = proto;
      scene.obstacles = parse_obstacles(ctx, sc.at("obstacles"), "scenes.obstacles");
      cfg.reach.scene_names.push_back(sc.value("name", "scene" + std::to_string(index)));
      cfg.reach.scenes.push_back(std::move(scene));
      ++index;
    }
    cfg.reach.targets_per_scene = j.value("targets_per_scene", 10);
    if (!j.contains("target_box")) ctx.fail("reach needs 'target_box'", "kind");
    ctx.check_keys(j["target_box"], "target_box", {"lo", "hi"});
    cfg.reach.target_lo = ctx.vector(j["target_box"].at("lo"), "target_box.lo", 2);
    cfg.reach.target_hi = ctx.vector(j["target_box"].at("hi"), "target_box.hi", 2);
    if (j.contains("methods")) {
      for (const auto& m : j["methods"]) {
        ctx.check_keys(m, "methods", {"name", "scaling"});
        MethodSpec spec;
        spec.name = m.at("name").get<std::string>();
        spec.scaling = m.value("scaling", "baseline");
        if (spec.name != "rmpflow" && spec.name != "pf_basic" && spec.name != "pf_nonlinear")
          ctx.fail("method name must be rmpflow, pf_basic or pf_nonlinear", "methods");
        pf_scaling(PfBaselineSpec{}, spec.scaling);  // validates the level
        cfg.reach.methods.push_back(std::move(spec));
      }
    } else {
      cfg.reach.methods = {{"rmpflow", "baseline"}, {"pf_basic", "low"}};
    }
    if (j.contains("collision"))
      parse_collision(ctx, j["collision"], cfg.reach.leaves.collision);
    if (j.contains("attractor"))
      parse_attractor(ctx, j["attractor"], cfg.reach.leaves.attractor);
    if (j.contains("joint_limit")) {
      const json& jl = j["joint_limit"];
      ctx.check_keys(jl, "joint_limit", {"sigma", "lambda", "eta_p", "eta_d"});
      if (jl.contains("sigma")) cfg.reach.leaves.jl_sigma = ctx.number(jl["sigma"], "sigma");
      if (jl.contains("lambda")) cfg.reach.leaves.jl_lambda = ctx.number(jl["lambda"], "lambda");
      if (jl.contains("eta_p")) cfg.reach.leaves.jl_eta_p = ctx.number(jl["eta_p"], "eta_p");
      if (jl.contains("eta_d")) cfg.reach.leaves.jl_eta_d = ctx.number(jl["eta_d"], "eta_d");
    }
    if (j.contains("cspace_damper")) {
      const json& cd = j["cspace_damper"];
      ctx.check_keys(cd, "cspace_damper", {"lambda_m", "c"});
      if (cd.contains("lambda_m"))
        cfg.reach.leaves.damper_lambda = ctx.number(cd["lambda_m"], "lambda_m");
      if (cd.contains("c")) cfg.reach.leaves.damper_c = ctx.number(cd["c"], "c");
    }
    if (j.contains("pf")) {
      const json& pf = j["pf"];
      ctx.check_keys(pf, "pf", {"w_obstacle", "alpha", "gamma_p", "gamma_d", "w_cspace"});
      if (pf.contains("w_obstacle"))
        cfg.reach.pf.w_obstacle = ctx.number(pf["w_obstacle"], "w_obstacle");
      if (pf.contains("alpha")) cfg.reach.pf.alpha = ctx.number(pf["alpha"], "alpha");
      if (pf.contains("gamma_p")) cfg.reach.pf.gamma_p = ctx.number(pf["gamma_p"], "gamma_p");
      if (pf.contains("gamma_d")) cfg.reach.pf.gamma_d = ctx.number(pf["gamma_d"], "gamma_d");
      if (pf.contains("w_cspace")) cfg.reach.pf.w_cspace = ctx.number(pf["w_cspace"], "w_cspace");
    }
  }
  return cfg;
}

}  // namespace detail

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path);
}

}  // namespace rmpflow::cli
