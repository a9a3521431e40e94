// safenav: simulate, train, evaluate, plot and self-check from the command line.
// Exit codes: 0 ok, 1 bad input, 2 failure while running.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "safenav/config.hpp"
#include "safenav/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace safenav;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> scenario;
  std::optional<int> episodes;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> refine;
  std::optional<std::string> model;
  std::optional<std::string> out;
  std::optional<std::string> policy;
};

void add_common_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option("--scenario", o.scenario, "sparse_4, dense_4, empty_8 or all");
  cmd->add_option("--episodes", o.episodes, "rounds per scenario");
  cmd->add_option("--seed", o.seed, "base seed");
  cmd->add_option("--refine", o.refine, "safety refinement")->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--model", o.model, "world model")->check(CLI::IsMember({"static", "flow"}));
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--policy", o.policy, "trained policy JSON (default: nominal controller)");
}

RunConfig resolve(const Overrides& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.scenario) {
    cfg.scenario = *o.scenario;
    cfg.scenario_config.reset();
  }
  if (o.episodes) cfg.episodes = *o.episodes;
  if (o.seed) cfg.seed = *o.seed;
  if (o.refine) cfg.refine = *o.refine == "on";
  if (o.model) cfg.model = model_kind_from_string(*o.model);
  if (o.out) cfg.out_dir = *o.out;
  if (o.policy) cfg.policy = *o.policy;
  cfg.validate();
  return cfg;
}

PolicyFn make_policy(const RunConfig& cfg, const ActionBounds& bounds) {
  if (cfg.policy.empty()) return nominal_policy_fn(bounds);
  return perceptron_policy(load_policy(cfg.policy), bounds);
}

SuiteSpec suite_for(const RunConfig& cfg, const std::string& scenario) {
  SuiteSpec s{scenario, {cfg.seed}, cfg.episodes, cfg.scenario_config};
  return s;
}

void print_metrics(const MetricsRow& r) {
  std::printf("%-10s %-22s success %.3f collision %.3f timeout %.3f done_time %.2f s episodes %d\n", r.scenario.c_str(),
              r.method.c_str(), r.metrics.success_rate, r.metrics.collision_rate, r.metrics.timeout_rate,
              r.metrics.done_time, r.metrics.episodes);
}

// simulate and evaluate share the run; evaluate always covers the suite and
// reports per scenario, simulate is the single-scenario short form.
int run_episodes(const RunConfig& cfg) {
  const fs::path out = cfg.out_dir;
  ensure_writable_dir(out);
  const SimParams sim;
  const PolicyFn policy = make_policy(cfg, sim.action_bounds);
  const EpisodeConfig ep = cfg.episode_config();
  std::vector<EpisodeRecord> all;
  std::vector<MetricsRow> rows;
  for (const auto& scenario : cfg.scenarios()) {
    auto recs = run_suite(suite_for(cfg, scenario), policy, ep, sim, cfg.method());
    rows.push_back({scenario, cfg.method(), aggregate(recs)});
    print_metrics(rows.back());
    for (auto& r : recs) all.push_back(std::move(r));
  }
  emit_outputs(all, rows, out);
  write_effective_config(out, cfg);
  return 0;
}

int run_train(const RunConfig& cfg) {
  if (cfg.scenario_config || cfg.scenario == "all") throw ValidationError("train: needs a single built-in scenario");
  const fs::path out = cfg.out_dir;
  ensure_writable_dir(out);
  write_effective_config(out, cfg);
  JointTrainer trainer(cfg.train_config(), cfg.cbf, cfg.alm);
  const TrainResult res = trainer.run([](const EpochLog& e) {
    std::printf("epoch %3d success %.3f collision %.3f return %.3f pred_error %.4f %s %.1f s\n", e.epoch, e.success_rate,
                e.collision_rate, e.mean_return, e.pred_error, to_string(e.model).data(), e.wall_time_s);
    std::fflush(stdout);
  });
  save_policy(out / "policy.json", res.policy);
  write_train_log_csv(out / "train_log.csv", res.log);

  // Final policy under the configured inference settings.
  const SimParams sim;
  RunConfig eval_cfg = cfg;
  eval_cfg.policy = (out / "policy.json").string();
  const auto recs = run_suite(suite_for(eval_cfg, cfg.scenario), perceptron_policy(res.policy, sim.action_bounds),
                              eval_cfg.episode_config(), sim, eval_cfg.method());
  const std::vector<MetricsRow> rows{{cfg.scenario, eval_cfg.method(), aggregate(recs)}};
  print_metrics(rows.front());
  emit_outputs(recs, rows, out);
  return 0;
}

int run_plot(const RunConfig& cfg) {
  const fs::path dir = fs::path(cfg.out_dir) / "trajectories";
  if (!fs::is_directory(dir)) throw ValidationError("plot: no trajectory logs under " + dir.string());
  std::vector<fs::path> logs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".jsonl") logs.push_back(e.path());
  }
  std::sort(logs.begin(), logs.end());
  ensure_writable_dir(fs::path(cfg.out_dir) / "plots");
  for (const auto& p : logs) {
    write_trajectory_svg(fs::path(cfg.out_dir) / "plots" / (p.stem().string() + ".svg"), read_trajectory_jsonl(p));
  }
  std::printf("%zu plots written to %s\n", logs.size(), (fs::path(cfg.out_dir) / "plots").string().c_str());
  write_effective_config(cfg.out_dir, cfg);
  return 0;
}

int run_check(const RunConfig& cfg) {
  ensure_writable_dir(cfg.out_dir);
  write_effective_config(cfg.out_dir, cfg);
  int failed = 0;
  for (const auto& r : run_self_checks()) {
    std::printf("%s %s%s%s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.pass ? "" : ": ", r.detail.c_str());
    failed += r.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-robot navigation with barrier-based action refinement"};
  app.require_subcommand(1);
  Overrides o;
  CLI::App* simulate = app.add_subcommand("simulate", "run episodes with a policy/refiner combination");
  CLI::App* train = app.add_subcommand("train", "joint policy and world-model training");
  CLI::App* evaluate = app.add_subcommand("evaluate", "metrics over a scenario suite");
  CLI::App* plot = app.add_subcommand("plot", "re-draw SVGs from trajectory logs under --out");
  CLI::App* check = app.add_subcommand("check", "invariant self-test battery");
  for (CLI::App* cmd : {simulate, train, evaluate, plot, check}) add_common_flags(cmd, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help("", CLI::AppFormatMode::All);
    return 1;
  }

  try {
    const RunConfig cfg = resolve(o);
    if (simulate->parsed() || evaluate->parsed()) return run_episodes(cfg);
    if (train->parsed()) return run_train(cfg);
    if (plot->parsed()) return run_plot(cfg);
    return run_check(cfg);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return 2;
  }
}
