#pragma once

// Quick invariant battery behind `safenav check`. Each check is small and
// deterministic; the full acceptance run lives in the test suite.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "safenav/training.hpp"

namespace safenav {

struct CheckResult {
  std::string name;
  bool pass{false};
  std::string detail;
};

namespace detail {

inline Observation static_observation(const Costmap& map, Action velocity) {
  const std::vector<Costmap> frames(3, map);
  const std::vector<EgoMotion> motions(2);
  RobotState robot;
  robot.velocity = velocity;
  robot.goal = {3.0, 0.0};
  return build_observation(frames, motions, robot);
}

}  // namespace detail

inline std::vector<CheckResult> run_self_checks() {
  std::vector<CheckResult> out;
  auto check = [&](std::string name, const std::function<std::string()>& body) {
    try {
      const std::string why = body();
      out.push_back({std::move(name), why.empty(), why});
    } catch (const std::exception& e) {
      out.push_back({std::move(name), false, e.what()});
    }
  };

  check("barrier_values", []() -> std::string {
    CbfParams p;
    p.r_min = 0.3;
    struct Case { Vec2 d; double v; double h; };
    for (const Case& c : {Case{{2.0, 0.0}, 1.0, 1.2}, Case{{2.0, 0.0}, -1.0, 2.0}, Case{{0.4, 0.0}, 1.0, -0.4}}) {
      const double h = barrier_value(c.d, c.v, p);
      if (std::abs(h - c.h) > 1e-12) return "h(" + std::to_string(c.d.x) + ") = " + std::to_string(h);
    }
    return std::string();
  });

  check("barrier_monotone_in_speed", []() -> std::string {
    CbfParams p;
    for (int k = 0; k < 50; ++k) {
      const Vec2 d{0.5 + 0.02 * k, 0.3 - 0.01 * k};
      if (!(barrier_value(d, 0.2, p) > barrier_value(d, 0.6, p) || d.norm() > p.r_max)) return "not decreasing";
    }
    return std::string();
  });

  check("multiplier_update", []() -> std::string {
    AlmParams p;
    if (next_multiplier(0.0, 1.0, -0.4) != 0.4) return "lambda";
    if (next_multiplier(0.7, 8.0, 0.0) != 0.7) return "zero violation";
    if (next_penalty(1.0, p) != 2.0 || next_penalty(48.0, p) != 64.0) return "penalty cap";
    return std::string();
  });

  check("cbf_reward_sign", []() -> std::string {
    AlmParams alm;
    alm.sigma0 = 2.0;
    ConstraintEval c;
    c.height = 1;
    c.width = 1;
    c.c_cbf = {-0.4};
    const double r_c = -lagrangian_value({0.5, 0.0}, {0.5, 0.0}, Multipliers::uniform(0.0), alm.sigma0, c);
    if (std::abs(r_c + 0.16) > 1e-12) return "r_c = " + std::to_string(r_c);
    return std::string();
  });

  check("feasible_fixed_point", []() -> std::string {
    const Observation obs = detail::static_observation(Costmap{}, {0.5, 0.0});
    const Predictor model{ModelKind::quasi_static, {}};
    const RefineResult r = refine_action(obs, {0.6, 0.3}, model, CbfParams{}, AlmParams{});
    if (!r.converged || std::abs(r.action.linear - 0.6) > 1e-3 || std::abs(r.action.angular - 0.3) > 1e-3 || r.r_c != 0.0) {
      return "a* = (" + std::to_string(r.action.linear) + ", " + std::to_string(r.action.angular) + ")";
    }
    return std::string();
  });

  check("refine_slows_for_wall", []() -> std::string {
    Costmap map;
    for (double y = -0.6; y <= 0.6; y += 0.1) {
      if (auto i = map.cell_of({0.5, y})) map.cells()[*i] = 1;
    }
    const Observation obs = detail::static_observation(map, {0.0, 0.0});
    const Predictor model{ModelKind::quasi_static, {}};
    const RefineResult r = refine_action(obs, {1.0, 0.0}, model, CbfParams{}, AlmParams{});
    if (!(r.action.linear < 1.0) || r.max_violation > AlmParams{}.tol) return "linear = " + std::to_string(r.action.linear);
    return std::string();
  });

  check("episode_determinism_and_partition", []() -> std::string {
    const WorldState w = load_scenario(builtin_scenario("sparse_4", 7));
    EpisodeConfig cfg;
    const auto policy = nominal_policy_fn(w.params.action_bounds);
    EpisodeRecord a = run_episode(w, policy, cfg, "sparse_4");
    EpisodeRecord b = run_episode(w, policy, cfg, "sparse_4");
    a.wall_time_s = b.wall_time_s = 0.0;
    if (!(a.steps.size() == b.steps.size() && a.final_poses == b.final_poses && a.outcomes == b.outcomes)) {
      return std::string("repeat run differs");
    }
    const std::vector<EpisodeRecord> recs{a};
    const Metrics m = aggregate(recs);
    if (std::abs(m.success_rate + m.collision_rate + m.timeout_rate - 1.0) > 1e-12) return std::string("rates do not sum to 1");
    return std::string();
  });

  return out;
}

}  // namespace safenav
