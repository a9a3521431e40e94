#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "safenav/training.hpp"

using namespace safenav;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("safenav_harness_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ScenarioConfig head_on() {
  ScenarioConfig c;
  c.scenario_name = "head_on";
  c.bounds = {-4, -2, 4, 2};
  RobotSpec a, b;
  a.start = Vec2{-2.0, 0.0};
  a.goal = Vec2{2.0, 0.0};
  b.start = Vec2{2.0, 0.0};
  b.goal = Vec2{-2.0, 0.0};
  c.robots = {a, b};
  c.time_cap_steps = 80;
  return c;
}

}  // namespace

TEST(Episode, UnrefinedHeadOnCollides) {
  const WorldState w = load_scenario(head_on());
  EpisodeConfig cfg;
  cfg.refine = false;
  const EpisodeRecord r = run_episode(w, nominal_policy_fn(w.params.action_bounds), cfg);
  EXPECT_EQ(r.outcomes[0], RobotStatus::collided);
  EXPECT_EQ(r.outcomes[1], RobotStatus::collided);
  EXPECT_EQ(r.refine_calls, 0);
}

TEST(Episode, RefinedHeadOnDoesNotCollide) {
  const WorldState w = load_scenario(head_on());
  const EpisodeRecord r = run_episode(w, nominal_policy_fn(w.params.action_bounds), EpisodeConfig{});
  for (auto s : r.outcomes) EXPECT_NE(s, RobotStatus::collided);
  EXPECT_GT(r.refine_calls, 0);
  EXPECT_LE(r.step_count, 80);
  EXPECT_NEAR(r.done_time, 0.1 * r.step_count, 1e-9);
}

TEST(Episode, LoneRobotReachesGoal) {
  ScenarioConfig c = head_on();
  c.robots.pop_back();
  c.time_cap_steps = 200;
  const WorldState w = load_scenario(c);
  const EpisodeRecord r = run_episode(w, nominal_policy_fn(w.params.action_bounds), EpisodeConfig{});
  EXPECT_EQ(r.outcomes[0], RobotStatus::reached);
  EXPECT_LT(r.step_count, 200);
  // steps are logged per robot, with the refined action applied
  ASSERT_EQ(r.steps.size(), static_cast<std::size_t>(r.step_count));
  EXPECT_TRUE(r.steps.front()[0].active);
}

TEST(Episode, HookSeesEveryActiveStep) {
  const WorldState w = load_scenario(head_on());
  int calls = 0, done = 0;
  EpisodeConfig cfg;
  cfg.refine = false;
  const EpisodeRecord r = run_episode(w, nominal_policy_fn(w.params.action_bounds), cfg, "x", [&](const StepSample& s) {
    ++calls;
    done += s.done ? 1 : 0;
    EXPECT_NE(s.next_obs, nullptr);
  });
  EXPECT_EQ(calls, 2 * r.step_count);
  EXPECT_EQ(done, 2);
}

TEST(Metrics, RatesPartitionAndDoneTime) {
  EpisodeRecord a, b;
  a.outcomes = {RobotStatus::reached, RobotStatus::collided, RobotStatus::timeout, RobotStatus::reached};
  a.done_time = 10.0;
  b.outcomes = {RobotStatus::reached, RobotStatus::reached, RobotStatus::reached, RobotStatus::reached};
  b.done_time = 20.0;
  const std::vector<EpisodeRecord> recs{a, b};
  const Metrics m = aggregate(recs);
  EXPECT_DOUBLE_EQ(m.success_rate, 6.0 / 8.0);
  EXPECT_DOUBLE_EQ(m.collision_rate, 1.0 / 8.0);
  EXPECT_DOUBLE_EQ(m.timeout_rate, 1.0 / 8.0);
  EXPECT_DOUBLE_EQ(m.done_time, 15.0);
  EXPECT_EQ(m.episodes, 2);
  EXPECT_EQ(aggregate(std::span<const EpisodeRecord>{}), Metrics{});
}

TEST(Suite, SeedsAndOrder) {
  EXPECT_EQ(round_seed(3, 7), 3007u);
  EpisodeConfig cfg;
  cfg.refine = false;
  SuiteSpec spec{"sparse_4", {1, 2}, 2, std::nullopt};
  const auto recs = run_suite(spec, nominal_policy_fn(ActionBounds{}), cfg, {}, "nominal");
  ASSERT_EQ(recs.size(), 4u);
  EXPECT_EQ(recs[0].seed, 1000u);
  EXPECT_EQ(recs[3].seed, 2001u);
  EXPECT_EQ(recs[0].method, "nominal");
  spec.repeats = 0;
  EXPECT_THROW(run_suite(spec, nominal_policy_fn(ActionBounds{}), cfg), ValidationError);
}

TEST(Outputs, CsvRoundTrip) {
  const fs::path d = temp_dir("csv");
  std::vector<MetricsRow> rows{{"sparse_4", "nominal", {0.75, 0.125, 0.125, 12.5, 20}},
                               {"dense_4", "nominal+refine_flow", {0.1, 0.0, 0.9, 40.0, 20}}};
  write_metrics_csv(d / "m.csv", rows);
  const auto back = read_metrics_csv(d / "m.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].metrics.success_rate, 0.75);
  EXPECT_EQ(back[1].method, "nominal+refine_flow");
  EXPECT_NEAR(back[1].metrics.timeout_rate, 0.9, 1e-12);
  EXPECT_EQ(slurp(d / "m.csv").substr(0, std::string(kMetricsHeader).size()), kMetricsHeader);
}

TEST(Outputs, TrajectoryRoundTripAndDeterminism) {
  const WorldState w = load_scenario(builtin_scenario("sparse_4", 4));
  EpisodeConfig cfg;
  cfg.refine = false;
  EpisodeRecord r = run_episode(w, nominal_policy_fn(w.params.action_bounds), cfg, "sparse_4");
  r.method = "nominal";
  const fs::path d = temp_dir("traj");
  write_trajectory_jsonl(d / "a.jsonl", r);
  const EpisodeRecord back = read_trajectory_jsonl(d / "a.jsonl");
  EXPECT_EQ(back.outcomes, r.outcomes);
  EXPECT_EQ(back.final_poses, r.final_poses);
  EXPECT_EQ(back.steps, r.steps);
  EXPECT_EQ(back.obstacles, r.obstacles);
  write_trajectory_jsonl(d / "b.jsonl", back);
  EXPECT_EQ(slurp(d / "a.jsonl"), slurp(d / "b.jsonl"));

  EpisodeRecord again = run_episode(w, nominal_policy_fn(w.params.action_bounds), cfg, "sparse_4");
  again.method = "nominal";
  write_trajectory_jsonl(d / "c.jsonl", again);
  EXPECT_EQ(slurp(d / "a.jsonl"), slurp(d / "c.jsonl"));

  write_trajectory_svg(d / "a.svg", r);
  const std::string svg = slurp(d / "a.svg");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_EQ(std::count(svg.begin(), svg.end(), '\n') > 4, true);
}

TEST(Outputs, BadTrajectoryFile) {
  const fs::path d = temp_dir("badtraj");
  std::ofstream(d / "x.jsonl") << R"({"type": "step", "step": 0, "robots": []})" << '\n';
  EXPECT_THROW(read_trajectory_jsonl(d / "x.jsonl"), ValidationError);
  std::ofstream(d / "y.jsonl") << R"({"type": "episode", "schema_version": 99})" << '\n';
  EXPECT_THROW(read_trajectory_jsonl(d / "y.jsonl"), ValidationError);
}

TEST(Outputs, UnwritableDirectory) {
  const fs::path d = temp_dir("blocked");
  std::ofstream(d / "file") << "x";
  EXPECT_THROW(ensure_writable_dir(d / "file" / "sub"), ValidationError);
}
