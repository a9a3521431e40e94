#pragma once

// Episode runner, outcome metrics and result emission (metrics CSV,
// JSON-lines trajectory logs, SVG trajectory plots).

#include <chrono>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "safenav/parallel.hpp"
#include "safenav/policy.hpp"
#include "safenav/refiner.hpp"

namespace safenav {

struct EpisodeConfig {
  bool refine{true};
  bool contact_guard{true};  // only with refine
  Predictor model{ModelKind::flow, {}};
  CbfParams cbf;
  AlmParams alm;
  CostmapParams costmap;
  int stack{3};
  RewardParams reward;
  bool collision_penalty{true};
  bool record_steps{true};

  bool operator==(const EpisodeConfig&) const = default;
};

struct RobotStepLog {
  Pose2D pose;  // at the start of the step
  Action a_nom;
  Action a_star;
  double r_g{0.0};
  double r_c{0.0};
  double min_h{0.0};
  RobotStatus status{RobotStatus::active};  // after the step
  bool active{false};                       // acted during this step

  bool operator==(const RobotStepLog&) const = default;
};

struct EpisodeRecord {
  std::string scenario;
  std::uint64_t seed{0};
  std::string method;
  Bounds bounds;
  std::vector<Obstacle> obstacles;
  std::vector<Vec2> goals;
  std::vector<double> radii;
  std::vector<std::vector<RobotStepLog>> steps;  // [step][robot]
  std::vector<Pose2D> final_poses;
  std::vector<RobotStatus> outcomes;
  int step_count{0};
  double done_time{0.0};    // simulated seconds
  double wall_time_s{0.0};  // not part of any byte-stable output
  int refine_calls{0};
  int refine_failures{0};   // refinements that ended above tolerance
};

/// Everything a training loop needs from one robot step.
struct StepSample {
  std::size_t robot{0};
  const Observation* obs{nullptr};
  Action a_nom;
  Action a_star;
  const Observation* next_obs{nullptr};
  double r_g{0.0};
  double r_c{0.0};
  bool done{false};
};

using PolicyFn = std::function<Action(std::size_t robot, const Observation& obs)>;
using StepHook = std::function<void(const StepSample&)>;

/// Per-robot sensing history: raw costmaps and the poses they were taken at.
class SensorHistory {
 public:
  explicit SensorHistory(int stack) : stack_(static_cast<std::size_t>(std::max(1, stack))) {}

  void push(Costmap map, const Pose2D& pose) {
    frames_.push_back(std::move(map));
    poses_.push_back(pose);
    while (frames_.size() > stack_) {
      frames_.pop_front();
      poses_.pop_front();
    }
  }

  Observation observe(const RobotState& robot) const {
    std::vector<Costmap> frames(frames_.begin(), frames_.end());
    std::vector<EgoMotion> motions;
    for (std::size_t k = 0; k + 1 < poses_.size(); ++k) motions.push_back(ego_motion_between(poses_[k], poses_[k + 1]));
    return build_observation(frames, motions, robot, static_cast<int>(stack_));
  }

 private:
  std::size_t stack_;
  std::deque<Costmap> frames_;
  std::deque<Pose2D> poses_;
};

inline double min_barrier(const Observation& obs, const CbfParams& cbf) {
  double m = cbf.r_max;
  const Costmap& map = obs.newest();
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (!map[i]) continue;
    const Vec2 d = map.cell_center(i);
    if (d.norm() <= cbf.r_max) m = std::min(m, barrier_value(d, obs.velocity.linear, cbf));
  }
  return m;
}

/// Runs until every robot is terminal or the step cap is reached. Each step,
/// every active robot observes, queries the policy, optionally refines, and
/// all actions are applied simultaneously.
inline EpisodeRecord run_episode(WorldState world, const PolicyFn& policy, const EpisodeConfig& cfg,
                                 const std::string& scenario = "custom", const StepHook& hook = {}) {
  cfg.cbf.validate();
  cfg.alm.validate();
  const auto wall_start = std::chrono::steady_clock::now();
  const std::size_t n = world.robots.size();
  Predictor model = cfg.model;
  model.params.bounds = world.params.action_bounds;
  model.params.sim_dt = world.params.dt;
  model.params.frame_interval = world.params.dt;

  EpisodeRecord rec;
  rec.scenario = scenario;
  rec.seed = world.rng_seed;
  rec.bounds = world.bounds;
  rec.obstacles = world.obstacles;
  for (const auto& r : world.robots) {
    rec.goals.push_back(r.goal);
    rec.radii.push_back(r.radius);
  }

  std::vector<SensorHistory> history(n, SensorHistory(cfg.stack));
  std::vector<Observation> obs(n);
  auto sense = [&](const WorldState& w, std::size_t i) {
    history[i].push(scan_to_costmap(raycast_lidar(w, i), cfg.costmap), w.robots[i].pose);
    return history[i].observe(w.robots[i]);
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_terminal(world.robots[i].status)) obs[i] = sense(world, i);
  }

  const int cap = world.params.time_cap_steps;
  std::vector<Action> actions(n);
  std::vector<RobotStepLog> logs(n);
  while (!world.all_terminal() && world.step < cap) {
    for (std::size_t i = 0; i < n; ++i) {
      logs[i] = RobotStepLog{};
      logs[i].pose = world.robots[i].pose;
      actions[i] = {};
      if (is_terminal(world.robots[i].status)) continue;
      const Action a_nom = policy(i, obs[i]);
      Action a_star = a_nom;
      double r_c = 0.0;
      if (cfg.refine) {
        const RefineResult res = refine_action(obs[i], a_nom, model, cfg.cbf, cfg.alm);
        a_star = res.action;
        if (cfg.contact_guard) a_star = contact_guard(obs[i].newest(), a_star, model.params, cfg.cbf);
        r_c = res.r_c;
        ++rec.refine_calls;
        if (!res.converged) ++rec.refine_failures;
      } else {
        r_c = cbf_reward(obs[i], a_nom, model, cfg.cbf, cfg.alm);
      }
      actions[i] = a_star;
      logs[i].a_nom = a_nom;
      logs[i].a_star = a_star;
      logs[i].r_c = r_c;
      logs[i].min_h = min_barrier(obs[i], cfg.cbf);
      logs[i].active = true;
    }
    WorldState next = step_world(world, actions, world.params.dt);
    for (std::size_t i = 0; i < n; ++i) {
      logs[i].status = next.robots[i].status;
      if (!logs[i].active) continue;
      logs[i].r_g = goal_reward(world.robots[i], next.robots[i], cfg.reward, cfg.collision_penalty);
      const bool done = is_terminal(next.robots[i].status);
      if (!done || hook) {
        Observation next_obs = sense(next, i);
        if (hook) {
          hook(StepSample{i, &obs[i], logs[i].a_nom, logs[i].a_star, &next_obs, logs[i].r_g, logs[i].r_c, done});
        }
        obs[i] = std::move(next_obs);
      }
    }
    if (cfg.record_steps) rec.steps.push_back(logs);
    world = std::move(next);
  }
  // A cap reached with robots still active: mark them timed out.
  for (auto& r : world.robots) {
    if (!is_terminal(r.status)) r.status = RobotStatus::timeout;
  }
  rec.step_count = world.step;
  rec.done_time = world.time;
  for (const auto& r : world.robots) {
    rec.final_poses.push_back(r.pose);
    rec.outcomes.push_back(r.status);
  }
  rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return rec;
}

// ---------------------------------------------------------------- metrics

struct Metrics {
  double success_rate{0.0};
  double collision_rate{0.0};
  double timeout_rate{0.0};
  double done_time{0.0};
  int episodes{0};

  bool operator==(const Metrics&) const = default;
};

/// Rates over all robots of all episodes; done time averaged over episodes.
inline Metrics aggregate(std::span<const EpisodeRecord> records) {
  Metrics m;
  m.episodes = static_cast<int>(records.size());
  std::size_t robots = 0, reached = 0, collided = 0, timed_out = 0;
  double time = 0.0;
  for (const auto& r : records) {
    time += r.done_time;
    for (auto s : r.outcomes) {
      ++robots;
      reached += s == RobotStatus::reached;
      collided += s == RobotStatus::collided;
      timed_out += s == RobotStatus::timeout || s == RobotStatus::active;
    }
  }
  if (robots > 0) {
    const double total = static_cast<double>(robots);
    m.success_rate = static_cast<double>(reached) / total;
    m.collision_rate = static_cast<double>(collided) / total;
    m.timeout_rate = static_cast<double>(timed_out) / total;
  }
  if (!records.empty()) m.done_time = time / static_cast<double>(records.size());
  return m;
}

/// Seed of round `k` under base seed `base`.
inline std::uint64_t round_seed(std::uint64_t base, int k) { return base * 1000 + static_cast<std::uint64_t>(k); }

struct SuiteSpec {
  std::string scenario;
  std::vector<std::uint64_t> base_seeds{1};
  int repeats{20};
  std::optional<ScenarioConfig> custom;  // used instead of the built-in; its seed is replaced per round
};

/// Runs `repeats` rounds per base seed; records come back in (seed, round)
/// order regardless of scheduling.
inline std::vector<EpisodeRecord> run_suite(const SuiteSpec& spec, const PolicyFn& policy, const EpisodeConfig& cfg,
                                            const SimParams& sim = {}, const std::string& method = "") {
  if (spec.repeats < 1) throw ValidationError("evaluate: repeats must be >= 1");
  std::vector<std::uint64_t> seeds;
  for (auto base : spec.base_seeds) {
    for (int k = 0; k < spec.repeats; ++k) seeds.push_back(round_seed(base, k));
  }
  std::vector<EpisodeRecord> out(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t i) {
    ScenarioConfig sc = spec.custom ? *spec.custom : builtin_scenario(spec.scenario, seeds[i]);
    sc.seed = seeds[i];
    out[i] = run_episode(load_scenario(sc, sim), policy, cfg, sc.scenario_name);
    out[i].method = method;
  });
  return out;
}

inline Metrics evaluate(const SuiteSpec& spec, const PolicyFn& policy, const EpisodeConfig& cfg, const SimParams& sim = {}) {
  const auto records = run_suite(spec, policy, cfg, sim);
  return aggregate(records);
}

// ---------------------------------------------------------------- outputs

struct MetricsRow {
  std::string scenario;
  std::string method;
  Metrics metrics;

  bool operator==(const MetricsRow&) const = default;
};

inline constexpr int kTrajectorySchemaVersion = 1;
inline constexpr const char* kMetricsHeader = "scenario,method,success_rate,collision_rate,done_time_s,episodes";

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    out << r.scenario << ',' << r.method << ',' << format_double(r.metrics.success_rate) << ','
        << format_double(r.metrics.collision_rate) << ',' << format_double(r.metrics.done_time) << ','
        << r.metrics.episodes << '\n';
  }
}

/// Reads a metrics CSV back. timeout_rate is recovered as the remainder.
inline std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw ValidationError("metrics csv: bad header in " + path.string());
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 6) throw ValidationError("metrics csv: expected 6 columns");
    MetricsRow r;
    r.scenario = f[0];
    r.method = f[1];
    r.metrics.success_rate = std::stod(f[2]);
    r.metrics.collision_rate = std::stod(f[3]);
    r.metrics.done_time = std::stod(f[4]);
    r.metrics.episodes = std::stoi(f[5]);
    r.metrics.timeout_rate = r.metrics.episodes > 0 ? 1.0 - r.metrics.success_rate - r.metrics.collision_rate : 0.0;
    rows.push_back(r);
  }
  return rows;
}

namespace detail {

inline nlohmann::json obstacle_json(const Obstacle& o) {
  if (const auto* c = std::get_if<Circle>(&o)) {
    return {{"shape", "circle"}, {"center", {c->center.x, c->center.y}}, {"size", {c->radius}}};
  }
  const auto& b = std::get<Box>(o);
  return {{"shape", "rect"}, {"center", {b.center.x, b.center.y}}, {"size", {2.0 * b.half_size.x, 2.0 * b.half_size.y}}};
}

}  // namespace detail

/// JSON lines: one "episode" header, one "step" line per step, one "outcome"
/// line. Wall-clock time is deliberately absent so logs are byte-stable.
inline void write_trajectory_jsonl(const std::filesystem::path& path, const EpisodeRecord& rec) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  nlohmann::json header;
  header["schema_version"] = kTrajectorySchemaVersion;
  header["type"] = "episode";
  header["scenario"] = rec.scenario;
  header["method"] = rec.method;
  header["seed"] = rec.seed;
  header["bounds"] = {rec.bounds.x_min, rec.bounds.y_min, rec.bounds.x_max, rec.bounds.y_max};
  header["obstacles"] = nlohmann::json::array();
  for (const auto& o : rec.obstacles) header["obstacles"].push_back(detail::obstacle_json(o));
  header["robots"] = nlohmann::json::array();
  for (std::size_t i = 0; i < rec.goals.size(); ++i) {
    header["robots"].push_back({{"goal", {rec.goals[i].x, rec.goals[i].y}}, {"radius", rec.radii[i]}});
  }
  out << header.dump() << '\n';
  for (std::size_t t = 0; t < rec.steps.size(); ++t) {
    nlohmann::json line;
    line["type"] = "step";
    line["step"] = t;
    line["robots"] = nlohmann::json::array();
    for (const auto& s : rec.steps[t]) {
      nlohmann::json r = {{"pose", {s.pose.x, s.pose.y, s.pose.theta}}, {"status", to_string(s.status)}, {"active", s.active}};
      if (s.active) {
        r["a_nom"] = {s.a_nom.linear, s.a_nom.angular};
        r["a_star"] = {s.a_star.linear, s.a_star.angular};
        r["r_g"] = s.r_g;
        r["r_c"] = s.r_c;
        r["min_h"] = s.min_h;
      }
      line["robots"].push_back(r);
    }
    out << line.dump() << '\n';
  }
  nlohmann::json tail;
  tail["type"] = "outcome";
  tail["steps"] = rec.step_count;
  tail["done_time"] = rec.done_time;
  tail["outcomes"] = nlohmann::json::array();
  for (auto s : rec.outcomes) tail["outcomes"].push_back(to_string(s));
  tail["final_poses"] = nlohmann::json::array();
  for (const auto& p : rec.final_poses) tail["final_poses"].push_back({p.x, p.y, p.theta});
  out << tail.dump() << '\n';
}

inline EpisodeRecord read_trajectory_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  EpisodeRecord rec;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const std::string type = j.at("type").get<std::string>();
    if (type == "episode") {
      if (j.at("schema_version").get<int>() != kTrajectorySchemaVersion) {
        throw ValidationError("trajectory: unsupported schema_version in " + path.string());
      }
      have_header = true;
      rec.scenario = j.at("scenario").get<std::string>();
      rec.method = j.value("method", "");
      rec.seed = j.at("seed").get<std::uint64_t>();
      const auto& b = j.at("bounds");
      rec.bounds = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
      for (const auto& o : j.at("obstacles")) {
        const Vec2 c{o["center"][0].get<double>(), o["center"][1].get<double>()};
        if (o["shape"] == "circle") {
          rec.obstacles.emplace_back(Circle{c, o["size"][0].get<double>()});
        } else {
          rec.obstacles.emplace_back(Box{c, {0.5 * o["size"][0].get<double>(), 0.5 * o["size"][1].get<double>()}});
        }
      }
      for (const auto& r : j.at("robots")) {
        rec.goals.push_back({r["goal"][0].get<double>(), r["goal"][1].get<double>()});
        rec.radii.push_back(r["radius"].get<double>());
      }
    } else if (type == "step") {
      std::vector<RobotStepLog> logs;
      for (const auto& r : j.at("robots")) {
        RobotStepLog s;
        s.pose = {r["pose"][0].get<double>(), r["pose"][1].get<double>(), r["pose"][2].get<double>()};
        s.status = status_from_string(r["status"].get<std::string>());
        s.active = r["active"].get<bool>();
        if (s.active) {
          s.a_nom = {r["a_nom"][0].get<double>(), r["a_nom"][1].get<double>()};
          s.a_star = {r["a_star"][0].get<double>(), r["a_star"][1].get<double>()};
          s.r_g = r["r_g"].get<double>();
          s.r_c = r["r_c"].get<double>();
          s.min_h = r["min_h"].get<double>();
        }
        logs.push_back(s);
      }
      rec.steps.push_back(std::move(logs));
    } else if (type == "outcome") {
      rec.step_count = j.at("steps").get<int>();
      rec.done_time = j.at("done_time").get<double>();
      for (const auto& s : j.at("outcomes")) rec.outcomes.push_back(status_from_string(s.get<std::string>()));
      for (const auto& p : j.at("final_poses")) {
        rec.final_poses.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
      }
    } else {
      throw ValidationError("trajectory: unknown line type '" + type + "'");
    }
  }
  if (!have_header) throw ValidationError("trajectory: missing episode header in " + path.string());
  return rec;
}

inline constexpr double kSvgPixelsPerMetre = 50.0;

/// Trajectory plot in world coordinates (y up), kSvgPixelsPerMetre px per
/// metre. One coloured path per robot; circles mark the goals.
inline void write_trajectory_svg(const std::filesystem::path& path, const EpisodeRecord& rec) {
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                            "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  const double s = kSvgPixelsPerMetre;
  const Bounds& b = rec.bounds;
  auto px = [&](double x) { return (x - b.x_min) * s; };
  auto py = [&](double y) { return (b.y_max - y) * s; };
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[256];
  std::snprintf(buf, sizeof buf, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.1f\" height=\"%.1f\">\n",
                (b.x_max - b.x_min) * s, (b.y_max - b.y_min) * s);
  out << buf;
  out << "<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\" stroke=\"black\"/>\n";
  for (const auto& o : rec.obstacles) {
    if (const auto* c = std::get_if<Circle>(&o)) {
      std::snprintf(buf, sizeof buf, "<circle class=\"obstacle\" cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill=\"#888888\"/>\n",
                    px(c->center.x), py(c->center.y), c->radius * s);
    } else {
      const auto& bx = std::get<Box>(o);
      std::snprintf(buf, sizeof buf,
                    "<rect class=\"obstacle\" x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"#888888\"/>\n",
                    px(bx.center.x - bx.half_size.x), py(bx.center.y + bx.half_size.y), 2.0 * bx.half_size.x * s,
                    2.0 * bx.half_size.y * s);
    }
    out << buf;
  }
  for (std::size_t i = 0; i < rec.goals.size(); ++i) {
    const char* color = kColors[i % std::size(kColors)];
    std::string points;
    for (const auto& step : rec.steps) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(step[i].pose.x), py(step[i].pose.y));
      points += buf;
    }
    if (i < rec.final_poses.size()) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f", px(rec.final_poses[i].x), py(rec.final_poses[i].y));
      points += buf;
    }
    out << "<polyline class=\"path\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << points
        << "\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<circle class=\"goal\" cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill=\"none\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                  px(rec.goals[i].x), py(rec.goals[i].y), std::max(rec.radii[i], 0.1) * s, color);
    out << buf;
  }
  out << "</svg>\n";
}

/// Checks the destination can be written before anything is emitted.
inline void ensure_writable_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw ValidationError("output directory not writable: " + dir.string());
  const auto probe = dir / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw ValidationError("output directory not writable: " + dir.string());
  }
  std::filesystem::remove(probe, ec);
}

/// metrics.csv, trajectories/ep{N}.jsonl and plots/ep{N}.svg under out_dir.
inline void emit_outputs(std::span<const EpisodeRecord> records, std::span<const MetricsRow> metrics,
                         const std::filesystem::path& out_dir) {
  ensure_writable_dir(out_dir);
  write_metrics_csv(out_dir / "metrics.csv", metrics);
  if (records.empty()) return;
  std::filesystem::create_directories(out_dir / "trajectories");
  std::filesystem::create_directories(out_dir / "plots");
  for (std::size_t k = 0; k < records.size(); ++k) {
    const std::string stem = "ep" + std::to_string(k);
    write_trajectory_jsonl(out_dir / "trajectories" / (stem + ".jsonl"), records[k]);
    write_trajectory_svg(out_dir / "plots" / (stem + ".svg"), records[k]);
  }
}

}  // namespace safenav
