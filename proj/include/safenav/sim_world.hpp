#pragma once

// Deterministic 2D multi-robot world: unicycle kinematics, static obstacles,
// raycast lidar, collision/arrival bookkeeping and scenario loading.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "safenav/common.hpp"

namespace safenav {

enum class RobotStatus { active, reached, collided, timeout };

inline bool is_terminal(RobotStatus s) { return s != RobotStatus::active; }

inline std::string_view to_string(RobotStatus s) {
  switch (s) {
    case RobotStatus::active: return "active";
    case RobotStatus::reached: return "reached";
    case RobotStatus::collided: return "collided";
    case RobotStatus::timeout: return "timeout";
  }
  return "active";
}

inline RobotStatus status_from_string(std::string_view s) {
  if (s == "active") return RobotStatus::active;
  if (s == "reached") return RobotStatus::reached;
  if (s == "collided") return RobotStatus::collided;
  if (s == "timeout") return RobotStatus::timeout;
  throw ValidationError("unknown robot status '" + std::string(s) + "'");
}

struct Pose2D {
  double x{0.0};
  double y{0.0};
  double theta{0.0};

  bool operator==(const Pose2D&) const = default;
  Vec2 position() const { return {x, y}; }
};

struct RobotState {
  Pose2D pose;
  Action velocity;  // last realized command
  Vec2 goal;
  double radius{0.2};
  RobotStatus status{RobotStatus::active};

  bool operator==(const RobotState&) const = default;
};

struct Circle {
  Vec2 center;
  double radius{0.0};
  bool operator==(const Circle&) const = default;
};

/// Axis-aligned rectangle.
struct Box {
  Vec2 center;
  Vec2 half_size;
  bool operator==(const Box&) const = default;
};

using Obstacle = std::variant<Circle, Box>;

struct Bounds {
  double x_min{-5.0};
  double y_min{-5.0};
  double x_max{5.0};
  double y_max{5.0};

  bool operator==(const Bounds&) const = default;

  /// True when a disc of `margin` around p lies inside.
  bool contains(Vec2 p, double margin = 0.0) const {
    return p.x - margin >= x_min && p.x + margin <= x_max && p.y - margin >= y_min && p.y + margin <= y_max;
  }
};

/// Signed distance from p to the obstacle boundary (negative inside).
inline double signed_distance(const Obstacle& o, Vec2 p) {
  if (const auto* c = std::get_if<Circle>(&o)) return (p - c->center).norm() - c->radius;
  const auto& b = std::get<Box>(o);
  const double qx = std::abs(p.x - b.center.x) - b.half_size.x;
  const double qy = std::abs(p.y - b.center.y) - b.half_size.y;
  const double outside = std::hypot(std::max(qx, 0.0), std::max(qy, 0.0));
  return outside + std::min(std::max(qx, qy), 0.0);
}

struct LidarParams {
  int beams{360};
  double angle_min{-kPi};
  double angle_increment{2.0 * kPi / 360.0};
  double max_range{4.0};

  bool operator==(const LidarParams&) const = default;
  double angle_max() const { return angle_min + angle_increment * (beams - 1); }
};

/// Ranges in the robot frame; beam i points at angle_min + i * increment.
struct LidarScan {
  std::vector<double> ranges;
  double angle_min{-kPi};
  double angle_max{kPi};
  double max_range{4.0};

  bool operator==(const LidarScan&) const = default;

  double angle_increment() const {
    return ranges.size() > 1 ? (angle_max - angle_min) / static_cast<double>(ranges.size() - 1) : 0.0;
  }
  double angle(std::size_t i) const { return angle_min + angle_increment() * static_cast<double>(i); }
};

struct SimParams {
  double dt{0.1};
  ActionBounds action_bounds;
  double goal_tolerance{0.2};
  int time_cap_steps{400};
  LidarParams lidar;

  bool operator==(const SimParams&) const = default;
  double time_cap() const { return time_cap_steps * dt; }
};

struct WorldState {
  std::vector<RobotState> robots;
  std::vector<Obstacle> obstacles;
  Bounds bounds;
  double time{0.0};
  std::uint64_t rng_seed{0};
  int step{0};
  SimParams params;

  bool operator==(const WorldState&) const = default;

  bool all_terminal() const {
    return std::all_of(robots.begin(), robots.end(), [](const RobotState& r) { return is_terminal(r.status); });
  }
};

// ---------------------------------------------------------------- scenarios

enum class Placement { uniform, ring, antipodal };

struct RobotSpec {
  std::optional<Vec2> start;  // nullopt = seeded random
  std::optional<Vec2> goal;
  std::optional<double> heading;  // default: face the goal
  double radius{0.2};

  bool operator==(const RobotSpec&) const = default;
};

struct PlacementParams {
  Placement mode{Placement::uniform};
  double ring_radius{4.0};
  double goal_jitter{0.6};       // rad, ring mode
  double min_separation{1.0};    // between random starts, and between random goals
  double obstacle_clearance{0.3};
  double min_goal_distance{3.0};

  bool operator==(const PlacementParams&) const = default;
};

struct ScenarioConfig {
  std::string scenario_name{"custom"};
  Bounds bounds;
  std::vector<RobotSpec> robots;
  std::vector<Obstacle> obstacles;
  std::uint64_t seed{0};
  int time_cap_steps{400};
  PlacementParams placement;

  bool operator==(const ScenarioConfig&) const = default;
};

namespace detail {

inline bool disc_hits_world(Vec2 p, double radius, const std::vector<Obstacle>& obstacles, const Bounds& bounds,
                            double clearance) {
  if (!bounds.contains(p, radius + clearance)) return true;
  for (const auto& o : obstacles) {
    if (signed_distance(o, p) < radius + clearance) return true;
  }
  return false;
}

inline Obstacle random_obstacle(std::mt19937_64& rng, double region_radius) {
  const double rho = region_radius * std::sqrt(uniform(rng, 0.0, 1.0));
  const double phi = uniform(rng, -kPi, kPi);
  const Vec2 c{rho * std::cos(phi), rho * std::sin(phi)};
  if (uniform(rng, 0.0, 1.0) < 0.5) return Circle{c, uniform(rng, 0.3, 0.55)};
  return Box{c, {uniform(rng, 0.2, 0.5), uniform(rng, 0.2, 0.5)}};
}

inline double obstacle_extent(const Obstacle& o) {
  if (const auto* c = std::get_if<Circle>(&o)) return c->radius;
  const auto& b = std::get<Box>(o);
  return std::hypot(b.half_size.x, b.half_size.y);
}

inline std::vector<Obstacle> scatter_obstacles(std::uint64_t seed, int count, double region_radius, double min_gap) {
  std::mt19937_64 rng(seed ^ 0x5eed0b57ac1e5ULL);
  std::vector<Obstacle> out;
  for (int attempt = 0; attempt < 100000 && static_cast<int>(out.size()) < count; ++attempt) {
    Obstacle cand = random_obstacle(rng, region_radius);
    const Vec2 c = std::visit([](const auto& o) { return o.center; }, cand);
    bool ok = true;
    for (const auto& o : out) {
      const Vec2 oc = std::visit([](const auto& x) { return x.center; }, o);
      if ((c - oc).norm() < obstacle_extent(cand) + obstacle_extent(o) + min_gap) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(cand);
  }
  return out;
}

}  // namespace detail

/// The three evaluation families: sparse_4, dense_4, empty_8. Obstacles are
/// scattered from `seed`; robots are left "random" for load_scenario.
inline ScenarioConfig builtin_scenario(std::string_view name, std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.scenario_name = std::string(name);
  cfg.seed = seed;
  if (name == "sparse_4") {
    cfg.bounds = {-5.0, -5.0, 5.0, 5.0};
    cfg.robots.resize(4);
    cfg.obstacles = detail::scatter_obstacles(seed, 4, 2.5, 1.2);
    cfg.time_cap_steps = 400;
    cfg.placement = {Placement::ring, 4.2, 0.6, 1.0, 0.3, 3.0};
  } else if (name == "dense_4") {
    cfg.bounds = {-5.0, -5.0, 5.0, 5.0};
    cfg.robots.resize(4);
    cfg.obstacles = detail::scatter_obstacles(seed, 10, 3.0, 0.9);
    cfg.time_cap_steps = 400;
    cfg.placement = {Placement::ring, 4.2, 0.6, 1.0, 0.3, 3.0};
  } else if (name == "empty_8") {
    cfg.bounds = {-6.0, -6.0, 6.0, 6.0};
    cfg.robots.resize(8);
    cfg.time_cap_steps = 1200;
    cfg.placement = {Placement::antipodal, 5.0, 0.0, 1.0, 0.3, 3.0};
  } else {
    throw ValidationError("unknown scenario '" + std::string(name) + "' (expected sparse_4, dense_4 or empty_8)");
  }
  return cfg;
}

inline bool is_builtin_scenario(std::string_view name) {
  return name == "sparse_4" || name == "dense_4" || name == "empty_8";
}

inline RobotStatus evaluate_robot_status(const WorldState& world, std::size_t i);

/// Builds the initial world. Random starts/goals are drawn from config.seed;
/// identical config and seed give a bitwise-identical result.
inline WorldState load_scenario(const ScenarioConfig& config, const SimParams& sim = {}) {
  if (config.robots.empty()) throw ValidationError("scenario '" + config.scenario_name + "': needs at least one robot");
  if (!(config.bounds.x_min < config.bounds.x_max) || !(config.bounds.y_min < config.bounds.y_max)) {
    throw ValidationError("scenario '" + config.scenario_name + "': empty bounds");
  }
  if (config.time_cap_steps < 1) throw ValidationError("scenario: time_cap_steps must be >= 1");
  sim.action_bounds.validate();
  if (!(sim.dt > 0.0)) throw ValidationError("sim dt must be > 0");

  const auto& obstacles = config.obstacles;
  const auto& bounds = config.bounds;
  const auto& pl = config.placement;
  const std::size_t n = config.robots.size();

  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = config.robots[i];
    if (!(r.radius > 0.0)) throw ValidationError("robot " + std::to_string(i) + ": radius must be > 0");
    if (r.start && detail::disc_hits_world(*r.start, r.radius, obstacles, bounds, 0.0)) {
      throw ValidationError("robot " + std::to_string(i) + ": start overlaps an obstacle or leaves the bounds");
    }
    if (r.goal) {
      if (!bounds.contains(*r.goal)) throw ValidationError("robot " + std::to_string(i) + ": goal outside bounds");
      for (const auto& o : obstacles) {
        if (signed_distance(o, *r.goal) < r.radius) {
          throw ValidationError("robot " + std::to_string(i) + ": goal inside an obstacle");
        }
      }
    }
    for (std::size_t j = 0; j < i; ++j) {
      const auto& q = config.robots[j];
      if (r.start && q.start && (*r.start - *q.start).norm() <= r.radius + q.radius) {
        throw ValidationError("robots " + std::to_string(j) + " and " + std::to_string(i) + ": overlapping starts");
      }
    }
  }

  std::mt19937_64 rng(config.seed);
  std::vector<Vec2> starts(n), goals(n);
  std::vector<bool> start_fixed(n), goal_fixed(n);
  for (std::size_t i = 0; i < n; ++i) {
    start_fixed[i] = config.robots[i].start.has_value();
    goal_fixed[i] = config.robots[i].goal.has_value();
    if (start_fixed[i]) starts[i] = *config.robots[i].start;
    if (goal_fixed[i]) goals[i] = *config.robots[i].goal;
  }

  const Vec2 mid{0.5 * (bounds.x_min + bounds.x_max), 0.5 * (bounds.y_min + bounds.y_max)};
  const double phase = uniform(rng, -kPi, kPi);
  constexpr int kMaxAttempts = 20000;

  auto separated = [&](const std::vector<Vec2>& pts, const std::vector<bool>& placed, std::size_t i, Vec2 p,
                       double sep) {
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j != i && placed[j] && (pts[j] - p).norm() < sep) return false;
    }
    return true;
  };

  std::vector<bool> start_placed = start_fixed;
  std::vector<bool> goal_placed = goal_fixed;
  for (std::size_t i = 0; i < n; ++i) {
    const double radius = config.robots[i].radius;
    const double sep = std::max(pl.min_separation, 2.0 * radius + 1e-6);
    if (!start_fixed[i]) {
      bool ok = false;
      for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
        Vec2 p;
        if (pl.mode == Placement::antipodal) {
          const double a = phase + 2.0 * kPi * static_cast<double>(i) / static_cast<double>(n);
          p = mid + Vec2{std::cos(a), std::sin(a)} * pl.ring_radius;
        } else if (pl.mode == Placement::ring) {
          const double a = uniform(rng, -kPi, kPi);
          p = mid + Vec2{std::cos(a), std::sin(a)} * pl.ring_radius;
        } else {
          p = {uniform(rng, bounds.x_min, bounds.x_max), uniform(rng, bounds.y_min, bounds.y_max)};
        }
        ok = !detail::disc_hits_world(p, radius, obstacles, bounds, pl.obstacle_clearance) &&
             separated(starts, start_placed, i, p, sep);
        if (ok) starts[i] = p;
        if (pl.mode == Placement::antipodal && !ok) break;
      }
      if (!ok) throw ValidationError("scenario '" + config.scenario_name + "': cannot place start of robot " + std::to_string(i));
      start_placed[i] = true;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double radius = config.robots[i].radius;
    const double sep = std::max(pl.min_separation, 2.0 * radius + 1e-6);
    if (!goal_fixed[i]) {
      bool ok = false;
      for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
        Vec2 g;
        if (pl.mode == Placement::antipodal) {
          g = mid - (starts[i] - mid);
        } else if (pl.mode == Placement::ring) {
          const Vec2 rel = starts[i] - mid;
          const double a = std::atan2(rel.y, rel.x) + kPi + uniform(rng, -pl.goal_jitter, pl.goal_jitter);
          g = mid + Vec2{std::cos(a), std::sin(a)} * pl.ring_radius;
        } else {
          g = {uniform(rng, bounds.x_min, bounds.x_max), uniform(rng, bounds.y_min, bounds.y_max)};
        }
        ok = !detail::disc_hits_world(g, radius, obstacles, bounds, pl.obstacle_clearance) &&
             separated(goals, goal_placed, i, g, sep) &&
             (pl.mode == Placement::antipodal || (g - starts[i]).norm() >= pl.min_goal_distance);
        if (ok) goals[i] = g;
        if (pl.mode == Placement::antipodal && !ok) break;
      }
      if (!ok) throw ValidationError("scenario '" + config.scenario_name + "': cannot place goal of robot " + std::to_string(i));
      goal_placed[i] = true;
    }
  }

  WorldState world;
  world.obstacles = obstacles;
  world.bounds = bounds;
  world.rng_seed = config.seed;
  world.params = sim;
  world.params.time_cap_steps = config.time_cap_steps;
  for (std::size_t i = 0; i < n; ++i) {
    RobotState r;
    r.radius = config.robots[i].radius;
    r.goal = goals[i];
    const Vec2 to_goal = goals[i] - starts[i];
    const double heading = config.robots[i].heading.value_or(std::atan2(to_goal.y, to_goal.x));
    r.pose = {starts[i].x, starts[i].y, wrap_angle(heading)};
    world.robots.push_back(r);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (evaluate_robot_status(world, i) == RobotStatus::collided) {
      throw ValidationError("scenario '" + config.scenario_name + "': robot " + std::to_string(i) + " starts in collision");
    }
  }
  return world;
}

// ---------------------------------------------------------------- status

/// Status the robot would have given the current geometry. Collision dominates arrival.
inline RobotStatus evaluate_robot_status(const WorldState& world, std::size_t i) {
  const RobotState& r = world.robots[i];
  if (is_terminal(r.status)) return r.status;
  const Vec2 p = r.pose.position();
  if (!world.bounds.contains(p, r.radius)) return RobotStatus::collided;
  for (const auto& o : world.obstacles) {
    if (signed_distance(o, p) < r.radius) return RobotStatus::collided;
  }
  for (std::size_t j = 0; j < world.robots.size(); ++j) {
    if (j == i) continue;
    const RobotState& q = world.robots[j];
    if ((q.pose.position() - p).norm() < r.radius + q.radius) return RobotStatus::collided;
  }
  if ((r.goal - p).norm() <= world.params.goal_tolerance) return RobotStatus::reached;
  if (world.time >= world.params.time_cap() - 1e-9 * world.params.dt) return RobotStatus::timeout;
  return RobotStatus::active;
}

inline std::vector<RobotStatus> check_status(const WorldState& world) {
  std::vector<RobotStatus> out(world.robots.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = evaluate_robot_status(world, i);
  return out;
}

// ---------------------------------------------------------------- dynamics

/// One Euler step of unicycle kinematics (position uses the pre-step heading).
inline Pose2D integrate_unicycle(Pose2D p, Action a, double dt) {
  p.x += a.linear * std::cos(p.theta) * dt;
  p.y += a.linear * std::sin(p.theta) * dt;
  p.theta = wrap_angle(p.theta + a.angular * dt);
  return p;
}

/// Advances every active robot by one step with its (clamped) action, then
/// re-evaluates statuses. `actions` holds one entry per robot, indexed like
/// world.robots; entries of terminal robots are ignored.
inline WorldState step_world(const WorldState& world, std::span<const Action> actions, double dt) {
  if (!(dt > 0.0)) throw ValidationError("step_world: dt must be > 0");
  if (actions.size() != world.robots.size()) {
    throw ValidationError("step_world: expected " + std::to_string(world.robots.size()) + " actions, got " +
                          std::to_string(actions.size()));
  }
  WorldState next = world;
  for (std::size_t i = 0; i < next.robots.size(); ++i) {
    RobotState& r = next.robots[i];
    if (is_terminal(r.status)) {
      r.velocity = {};
      continue;
    }
    const Action a = world.params.action_bounds.clamp(actions[i]);
    if (!std::isfinite(a.linear) || !std::isfinite(a.angular)) {
      throw ValidationError("step_world: non-finite action for robot " + std::to_string(i));
    }
    r.pose = integrate_unicycle(r.pose, a, dt);
    r.velocity = a;
  }
  next.time = world.time + dt;
  next.step = world.step + 1;
  const auto statuses = check_status(next);
  for (std::size_t i = 0; i < next.robots.size(); ++i) {
    next.robots[i].status = statuses[i];
    if (is_terminal(statuses[i])) next.robots[i].velocity = {};
  }
  return next;
}

// ---------------------------------------------------------------- lidar

namespace detail {

/// Distance along a unit ray to a circle, or +inf. Origin inside gives 0.
inline double ray_circle(Vec2 o, Vec2 d, Vec2 c, double r) {
  const Vec2 oc = o - c;
  const double b = oc.dot(d);
  const double cc = oc.squared_norm() - r * r;
  if (cc <= 0.0) return 0.0;
  const double disc = b * b - cc;
  if (disc < 0.0) return std::numeric_limits<double>::infinity();
  const double t = -b - std::sqrt(disc);
  return t >= 0.0 ? t : std::numeric_limits<double>::infinity();
}

inline double ray_box(Vec2 o, Vec2 d, const Box& b) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  const double lo[2] = {b.center.x - b.half_size.x, b.center.y - b.half_size.y};
  const double hi[2] = {b.center.x + b.half_size.x, b.center.y + b.half_size.y};
  const double oo[2] = {o.x, o.y};
  const double dd[2] = {d.x, d.y};
  for (int k = 0; k < 2; ++k) {
    if (std::abs(dd[k]) < 1e-15) {
      if (oo[k] < lo[k] || oo[k] > hi[k]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t1 = (lo[k] - oo[k]) / dd[k];
    double t2 = (hi[k] - oo[k]) / dd[k];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
  }
  if (t_far < std::max(t_near, 0.0)) return std::numeric_limits<double>::infinity();
  return std::max(t_near, 0.0);
}

/// Exit distance from inside the arena walls.
inline double ray_bounds(Vec2 o, Vec2 d, const Bounds& b) {
  double t = std::numeric_limits<double>::infinity();
  if (d.x > 1e-15) t = std::min(t, (b.x_max - o.x) / d.x);
  if (d.x < -1e-15) t = std::min(t, (b.x_min - o.x) / d.x);
  if (d.y > 1e-15) t = std::min(t, (b.y_max - o.y) / d.y);
  if (d.y < -1e-15) t = std::min(t, (b.y_min - o.y) / d.y);
  return std::max(t, 0.0);
}

}  // namespace detail

/// Scan from robot `index`: static obstacles, arena walls and every other
/// robot's disc. Ranges are clamped into (0, max_range].
inline LidarScan raycast_lidar(const WorldState& world, std::size_t index) {
  const LidarParams& lp = world.params.lidar;
  const RobotState& self = world.robots.at(index);
  LidarScan scan;
  scan.angle_min = lp.angle_min;
  scan.angle_max = lp.angle_max();
  scan.max_range = lp.max_range;
  scan.ranges.assign(static_cast<std::size_t>(lp.beams), lp.max_range);
  const Vec2 o = self.pose.position();
  constexpr double kMinRange = 1e-6;
  for (int i = 0; i < lp.beams; ++i) {
    const double a = self.pose.theta + lp.angle_min + lp.angle_increment * i;
    const Vec2 d{std::cos(a), std::sin(a)};
    double t = detail::ray_bounds(o, d, world.bounds);
    for (const auto& ob : world.obstacles) {
      if (const auto* c = std::get_if<Circle>(&ob)) {
        t = std::min(t, detail::ray_circle(o, d, c->center, c->radius));
      } else {
        t = std::min(t, detail::ray_box(o, d, std::get<Box>(ob)));
      }
    }
    for (std::size_t j = 0; j < world.robots.size(); ++j) {
      if (j == index) continue;
      const auto& q = world.robots[j];
      t = std::min(t, detail::ray_circle(o, d, q.pose.position(), q.radius));
    }
    scan.ranges[static_cast<std::size_t>(i)] = std::clamp(t, kMinRange, lp.max_range);
  }
  return scan;
}

// ---------------------------------------------------------------- scenario file I/O
//
// {
//   "scenario_name": "corridor",
//   "bounds": [x_min, y_min, x_max, y_max],
//   "robots": [ {"start": [x, y] | "random", "goal": [x, y] | "random",
//                "heading": rad (optional), "radius": m (optional)} ],
//   "obstacles": [ {"shape": "circle", "center": [x, y], "size": [r]},
//                  {"shape": "rect",   "center": [x, y], "size": [w, h]} ],
//   "seed": 7,
//   "time_cap_steps": 400,
//   "placement": {"mode": "uniform" | "ring" | "antipodal", "ring_radius": m,
//                 "goal_jitter": rad, "min_separation": m,
//                 "obstacle_clearance": m, "min_goal_distance": m}   (optional)
// }
// Unknown keys anywhere are rejected.

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                                std::string_view where) {
  if (!j.is_object()) throw ValidationError(std::string(where) + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError(std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

inline double number_at(const nlohmann::json& j, std::string_view where) {
  if (!j.is_number()) throw ValidationError(std::string(where) + ": expected a number");
  return j.get<double>();
}

inline Vec2 vec2_from(const nlohmann::json& j, std::string_view where) {
  if (!j.is_array() || j.size() != 2) throw ValidationError(std::string(where) + ": expected [x, y]");
  return {number_at(j[0], where), number_at(j[1], where)};
}

}  // namespace detail

inline ScenarioConfig parse_scenario(const nlohmann::json& j) {
  using detail::number_at;
  detail::reject_unknown_keys(
      j, {"scenario_name", "bounds", "robots", "obstacles", "seed", "time_cap_steps", "placement"}, "scenario");
  ScenarioConfig cfg;
  if (!j.contains("scenario_name") || !j["scenario_name"].is_string()) {
    throw ValidationError("scenario: 'scenario_name' (string) is required");
  }
  cfg.scenario_name = j["scenario_name"].get<std::string>();
  if (!j.contains("bounds") || !j["bounds"].is_array() || j["bounds"].size() != 4) {
    throw ValidationError("scenario: 'bounds' must be [x_min, y_min, x_max, y_max]");
  }
  cfg.bounds = {number_at(j["bounds"][0], "bounds"), number_at(j["bounds"][1], "bounds"),
                number_at(j["bounds"][2], "bounds"), number_at(j["bounds"][3], "bounds")};
  if (!j.contains("robots") || !j["robots"].is_array()) throw ValidationError("scenario: 'robots' list is required");
  for (const auto& rj : j["robots"]) {
    detail::reject_unknown_keys(rj, {"start", "goal", "heading", "radius"}, "robot");
    RobotSpec spec;
    auto point_or_random = [](const nlohmann::json& v, std::string_view key) -> std::optional<Vec2> {
      if (v.is_string()) {
        if (v.get<std::string>() != "random") throw ValidationError(std::string(key) + ": expected [x, y] or \"random\"");
        return std::nullopt;
      }
      return detail::vec2_from(v, key);
    };
    if (rj.contains("start")) spec.start = point_or_random(rj["start"], "start");
    if (rj.contains("goal")) spec.goal = point_or_random(rj["goal"], "goal");
    if (rj.contains("heading")) spec.heading = number_at(rj["heading"], "heading");
    if (rj.contains("radius")) spec.radius = number_at(rj["radius"], "radius");
    cfg.robots.push_back(spec);
  }
  if (j.contains("obstacles")) {
    if (!j["obstacles"].is_array()) throw ValidationError("scenario: 'obstacles' must be a list");
    for (const auto& oj : j["obstacles"]) {
      detail::reject_unknown_keys(oj, {"shape", "center", "size"}, "obstacle");
      if (!oj.contains("shape") || !oj.contains("center") || !oj.contains("size")) {
        throw ValidationError("obstacle: 'shape', 'center' and 'size' are required");
      }
      const std::string shape = oj["shape"].get<std::string>();
      const Vec2 c = detail::vec2_from(oj["center"], "obstacle center");
      const auto& size = oj["size"];
      if (shape == "circle") {
        if (!size.is_array() || size.size() != 1) throw ValidationError("circle size must be [radius]");
        const double r = number_at(size[0], "circle radius");
        if (!(r > 0.0)) throw ValidationError("circle radius must be > 0");
        cfg.obstacles.emplace_back(Circle{c, r});
      } else if (shape == "rect") {
        const Vec2 wh = detail::vec2_from(size, "rect size");
        if (!(wh.x > 0.0 && wh.y > 0.0)) throw ValidationError("rect size must be positive");
        cfg.obstacles.emplace_back(Box{c, wh * 0.5});
      } else {
        throw ValidationError("obstacle: unknown shape '" + shape + "'");
      }
    }
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer() || j["seed"].get<std::int64_t>() < 0) {
      throw ValidationError("scenario: 'seed' must be a non-negative integer");
    }
    cfg.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("time_cap_steps")) {
    if (!j["time_cap_steps"].is_number_integer()) throw ValidationError("scenario: 'time_cap_steps' must be an integer");
    cfg.time_cap_steps = j["time_cap_steps"].get<int>();
  }
  if (j.contains("placement")) {
    const auto& pj = j["placement"];
    detail::reject_unknown_keys(pj,
                                {"mode", "ring_radius", "goal_jitter", "min_separation", "obstacle_clearance",
                                 "min_goal_distance"},
                                "placement");
    auto& p = cfg.placement;
    if (pj.contains("mode")) {
      const std::string m = pj["mode"].get<std::string>();
      if (m == "uniform") p.mode = Placement::uniform;
      else if (m == "ring") p.mode = Placement::ring;
      else if (m == "antipodal") p.mode = Placement::antipodal;
      else throw ValidationError("placement: unknown mode '" + m + "'");
    }
    if (pj.contains("ring_radius")) p.ring_radius = number_at(pj["ring_radius"], "ring_radius");
    if (pj.contains("goal_jitter")) p.goal_jitter = number_at(pj["goal_jitter"], "goal_jitter");
    if (pj.contains("min_separation")) p.min_separation = number_at(pj["min_separation"], "min_separation");
    if (pj.contains("obstacle_clearance")) p.obstacle_clearance = number_at(pj["obstacle_clearance"], "obstacle_clearance");
    if (pj.contains("min_goal_distance")) p.min_goal_distance = number_at(pj["min_goal_distance"], "min_goal_distance");
  }
  return cfg;
}

inline nlohmann::json to_json(const ScenarioConfig& cfg) {
  nlohmann::json j;
  j["scenario_name"] = cfg.scenario_name;
  j["bounds"] = {cfg.bounds.x_min, cfg.bounds.y_min, cfg.bounds.x_max, cfg.bounds.y_max};
  j["robots"] = nlohmann::json::array();
  for (const auto& r : cfg.robots) {
    nlohmann::json rj;
    rj["start"] = r.start ? nlohmann::json{r.start->x, r.start->y} : nlohmann::json("random");
    rj["goal"] = r.goal ? nlohmann::json{r.goal->x, r.goal->y} : nlohmann::json("random");
    if (r.heading) rj["heading"] = *r.heading;
    rj["radius"] = r.radius;
    j["robots"].push_back(rj);
  }
  j["obstacles"] = nlohmann::json::array();
  for (const auto& o : cfg.obstacles) {
    if (const auto* c = std::get_if<Circle>(&o)) {
      j["obstacles"].push_back({{"shape", "circle"}, {"center", {c->center.x, c->center.y}}, {"size", {c->radius}}});
    } else {
      const auto& b = std::get<Box>(o);
      j["obstacles"].push_back({{"shape", "rect"},
                                {"center", {b.center.x, b.center.y}},
                                {"size", {2.0 * b.half_size.x, 2.0 * b.half_size.y}}});
    }
  }
  j["seed"] = cfg.seed;
  j["time_cap_steps"] = cfg.time_cap_steps;
  const auto& p = cfg.placement;
  const char* mode = p.mode == Placement::ring ? "ring" : p.mode == Placement::antipodal ? "antipodal" : "uniform";
  j["placement"] = {{"mode", mode},
                    {"ring_radius", p.ring_radius},
                    {"goal_jitter", p.goal_jitter},
                    {"min_separation", p.min_separation},
                    {"obstacle_clearance", p.obstacle_clearance},
                    {"min_goal_distance", p.min_goal_distance}};
  return j;
}

}  // namespace safenav
