#pragma once

// Run configuration: one JSON document merged with command-line overrides.
//
// {
//   "scenario": "sparse_4" | "dense_4" | "empty_8" | "all",
//   "scenario_config": {...},          optional, a full scenario (overrides "scenario")
//   "seed": 1, "episodes": 1,
//   "refine": true, "contact_guard": true, "model": "flow" | "static",
//   "policy": "" (nominal) | "path/to/policy.json",
//   "cbf":   {"r_min", "r_max", "delta_t", "alpha", "epsilon"},
//   "alm":   {"sigma0", "rho", "sigma_max", "lambda0", "gamma", "outer_iters",
//             "inner_iters", "inner_step", "tol", "fd_step", "max_evaluations"},
//   "train": {"epochs", "steps_per_epoch", "warmup_steps", "static_epochs",
//             "population", "elites", "hidden", "init_std", "min_std",
//             "eval_episodes", "reward", "replay_capacity", "model_fit_samples",
//             "flow_gain_grid", "finalists"},
//   "output": {"dir": "out"}
// }
// Every key is optional; unknown keys are rejected. The training seed and
// scenario follow the top-level ones.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "safenav/training.hpp"

namespace safenav {

struct RunConfig {
  std::string scenario{"sparse_4"};
  std::optional<ScenarioConfig> scenario_config;
  std::uint64_t seed{1};
  int episodes{1};
  bool refine{true};
  bool contact_guard{true};
  ModelKind model{ModelKind::flow};
  std::string policy;  // empty = nominal controller
  CbfParams cbf;
  AlmParams alm;
  TrainConfig train;
  std::string out_dir{"out"};

  std::vector<std::string> scenarios() const {
    if (scenario_config) return {scenario_config->scenario_name};
    if (scenario == "all") return {"sparse_4", "dense_4", "empty_8"};
    return {scenario};
  }

  void validate() const {
    if (!scenario_config && scenario != "all" && !is_builtin_scenario(scenario)) {
      throw ValidationError("config: unknown scenario '" + scenario + "'");
    }
    if (episodes < 1) throw ValidationError("config: episodes must be >= 1");
    if (out_dir.empty()) throw ValidationError("config: output dir must not be empty");
    cbf.validate();
    alm.validate();
    TrainConfig t = train;
    t.scenario = scenario_config || scenario == "all" ? std::string("sparse_4") : scenario;
    t.validate();
  }

  EpisodeConfig episode_config() const {
    EpisodeConfig e;
    e.refine = refine;
    e.contact_guard = contact_guard;
    e.model = Predictor{model, {}};
    e.cbf = cbf;
    e.alm = alm;
    return e;
  }

  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    t.scenario = scenario;
    return t;
  }

  std::string method() const {
    std::string m = policy.empty() ? "nominal" : "policy";
    if (refine) {
      m += "+refine_";
      m += to_string(model);
    }
    return m;
  }
};

namespace detail {

inline int int_at(const nlohmann::json& j, std::string_view where) {
  if (!j.is_number_integer()) throw ValidationError(std::string(where) + ": expected an integer");
  return j.get<int>();
}

inline bool bool_at(const nlohmann::json& j, std::string_view where) {
  if (!j.is_boolean()) throw ValidationError(std::string(where) + ": expected true or false");
  return j.get<bool>();
}

inline std::string string_at(const nlohmann::json& j, std::string_view where) {
  if (!j.is_string()) throw ValidationError(std::string(where) + ": expected a string");
  return j.get<std::string>();
}

inline std::uint64_t seed_at(const nlohmann::json& j, std::string_view where) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
    throw ValidationError(std::string(where) + ": expected a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

inline void read_cbf(const nlohmann::json& j, CbfParams& p) {
  reject_unknown_keys(j, {"r_min", "r_max", "delta_t", "alpha", "epsilon"}, "cbf");
  if (j.contains("r_min")) p.r_min = number_at(j["r_min"], "cbf.r_min");
  if (j.contains("r_max")) p.r_max = number_at(j["r_max"], "cbf.r_max");
  if (j.contains("delta_t")) p.delta_t = number_at(j["delta_t"], "cbf.delta_t");
  if (j.contains("alpha")) p.alpha = number_at(j["alpha"], "cbf.alpha");
  if (j.contains("epsilon")) p.epsilon = number_at(j["epsilon"], "cbf.epsilon");
}

inline void read_alm(const nlohmann::json& j, AlmParams& p) {
  reject_unknown_keys(j,
                      {"sigma0", "rho", "sigma_max", "lambda0", "gamma", "outer_iters", "inner_iters", "inner_step",
                       "tol", "fd_step", "max_evaluations"},
                      "alm");
  if (j.contains("sigma0")) p.sigma0 = number_at(j["sigma0"], "alm.sigma0");
  if (j.contains("rho")) p.rho = number_at(j["rho"], "alm.rho");
  if (j.contains("sigma_max")) p.sigma_max = number_at(j["sigma_max"], "alm.sigma_max");
  if (j.contains("lambda0")) p.lambda0 = number_at(j["lambda0"], "alm.lambda0");
  if (j.contains("gamma")) p.gamma = number_at(j["gamma"], "alm.gamma");
  if (j.contains("outer_iters")) p.outer_iters = int_at(j["outer_iters"], "alm.outer_iters");
  if (j.contains("inner_iters")) p.inner_iters = int_at(j["inner_iters"], "alm.inner_iters");
  if (j.contains("inner_step")) p.inner_step = number_at(j["inner_step"], "alm.inner_step");
  if (j.contains("tol")) p.tol = number_at(j["tol"], "alm.tol");
  if (j.contains("fd_step")) p.fd_step = number_at(j["fd_step"], "alm.fd_step");
  if (j.contains("max_evaluations")) p.max_evaluations = int_at(j["max_evaluations"], "alm.max_evaluations");
}

inline void read_train(const nlohmann::json& j, TrainConfig& t) {
  reject_unknown_keys(j,
                      {"epochs", "steps_per_epoch", "warmup_steps", "static_epochs", "population", "elites", "hidden",
                       "init_std", "min_std", "eval_episodes", "reward", "replay_capacity", "model_fit_samples",
                       "flow_gain_grid", "finalists"},
                      "train");
  if (j.contains("epochs")) t.epochs = int_at(j["epochs"], "train.epochs");
  if (j.contains("steps_per_epoch")) t.steps_per_epoch = int_at(j["steps_per_epoch"], "train.steps_per_epoch");
  if (j.contains("warmup_steps")) t.warmup_steps = int_at(j["warmup_steps"], "train.warmup_steps");
  if (j.contains("static_epochs")) t.static_epochs = int_at(j["static_epochs"], "train.static_epochs");
  if (j.contains("population")) t.population = int_at(j["population"], "train.population");
  if (j.contains("elites")) t.elites = int_at(j["elites"], "train.elites");
  if (j.contains("hidden")) t.hidden = int_at(j["hidden"], "train.hidden");
  if (j.contains("init_std")) t.init_std = number_at(j["init_std"], "train.init_std");
  if (j.contains("min_std")) t.min_std = number_at(j["min_std"], "train.min_std");
  if (j.contains("eval_episodes")) t.eval_episodes = int_at(j["eval_episodes"], "train.eval_episodes");
  if (j.contains("reward")) t.reward = reward_mode_from_string(string_at(j["reward"], "train.reward"));
  if (j.contains("replay_capacity")) {
    const int c = int_at(j["replay_capacity"], "train.replay_capacity");
    if (c < 1) throw ValidationError("train.replay_capacity: must be >= 1");
    t.replay_capacity = static_cast<std::size_t>(c);
  }
  if (j.contains("model_fit_samples")) t.model_fit_samples = int_at(j["model_fit_samples"], "train.model_fit_samples");
  if (j.contains("flow_gain_grid")) {
    const auto& g = j["flow_gain_grid"];
    if (!g.is_array()) throw ValidationError("train.flow_gain_grid: expected an array");
    t.flow_gain_grid.clear();
    for (const auto& v : g) t.flow_gain_grid.push_back(number_at(v, "train.flow_gain_grid"));
  }
  if (j.contains("finalists")) t.finalists = int_at(j["finalists"], "train.finalists");
}

}  // namespace detail

/// Overlay a JSON document onto `cfg`.
inline void merge_config(RunConfig& cfg, const nlohmann::json& j) {
  using namespace detail;
  reject_unknown_keys(j,
                      {"scenario", "scenario_config", "seed", "episodes", "refine", "contact_guard", "model", "policy",
                       "cbf", "alm", "train", "output"},
                      "config");
  if (j.contains("scenario")) cfg.scenario = string_at(j["scenario"], "scenario");
  if (j.contains("scenario_config")) cfg.scenario_config = parse_scenario(j["scenario_config"]);
  if (j.contains("seed")) cfg.seed = seed_at(j["seed"], "seed");
  if (j.contains("episodes")) cfg.episodes = int_at(j["episodes"], "episodes");
  if (j.contains("refine")) cfg.refine = bool_at(j["refine"], "refine");
  if (j.contains("contact_guard")) cfg.contact_guard = bool_at(j["contact_guard"], "contact_guard");
  if (j.contains("model")) cfg.model = model_kind_from_string(string_at(j["model"], "model"));
  if (j.contains("policy")) cfg.policy = string_at(j["policy"], "policy");
  if (j.contains("cbf")) read_cbf(j["cbf"], cfg.cbf);
  if (j.contains("alm")) read_alm(j["alm"], cfg.alm);
  if (j.contains("train")) read_train(j["train"], cfg.train);
  if (j.contains("output")) {
    reject_unknown_keys(j["output"], {"dir"}, "output");
    if (j["output"].contains("dir")) cfg.out_dir = string_at(j["output"]["dir"], "output.dir");
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot read '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config: " + path.string() + ": " + e.what());
  }
  RunConfig cfg;
  merge_config(cfg, j);
  return cfg;
}

/// Every field with its effective value; feeding it back reproduces the run.
inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["scenario"] = c.scenario;
  if (c.scenario_config) j["scenario_config"] = to_json(*c.scenario_config);
  j["seed"] = c.seed;
  j["episodes"] = c.episodes;
  j["refine"] = c.refine;
  j["contact_guard"] = c.contact_guard;
  j["model"] = std::string(to_string(c.model));
  j["policy"] = c.policy;
  j["cbf"] = {{"r_min", c.cbf.r_min}, {"r_max", c.cbf.r_max}, {"delta_t", c.cbf.delta_t},
              {"alpha", c.cbf.alpha}, {"epsilon", c.cbf.epsilon}};
  j["alm"] = {{"sigma0", c.alm.sigma0},         {"rho", c.alm.rho},
              {"sigma_max", c.alm.sigma_max},   {"lambda0", c.alm.lambda0},
              {"gamma", c.alm.gamma},           {"outer_iters", c.alm.outer_iters},
              {"inner_iters", c.alm.inner_iters}, {"inner_step", c.alm.inner_step},
              {"tol", c.alm.tol},               {"fd_step", c.alm.fd_step},
              {"max_evaluations", c.alm.max_evaluations}};
  const TrainConfig& t = c.train;
  j["train"] = {{"epochs", t.epochs},
                {"steps_per_epoch", t.steps_per_epoch},
                {"warmup_steps", t.warmup_steps},
                {"static_epochs", t.static_epochs},
                {"population", t.population},
                {"elites", t.elites},
                {"hidden", t.hidden},
                {"init_std", t.init_std},
                {"min_std", t.min_std},
                {"eval_episodes", t.eval_episodes},
                {"reward", std::string(to_string(t.reward))},
                {"replay_capacity", t.replay_capacity},
                {"model_fit_samples", t.model_fit_samples},
                {"flow_gain_grid", t.flow_gain_grid},
                {"finalists", t.finalists}};
  j["output"] = {{"dir", c.out_dir}};
  return j;
}

inline void write_effective_config(const std::filesystem::path& dir, const RunConfig& c) {
  std::ofstream out(dir / "effective_config.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "effective_config.json").string());
  out << to_json(c).dump(2) << "\n";
}

}  // namespace safenav
