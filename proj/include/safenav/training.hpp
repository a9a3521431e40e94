#pragma once

// Joint policy/model training: the step/epoch skeleton of model-based
// RL with barrier refinement, with the policy update realised as one
// cross-entropy-method generation per epoch.
//
// Per epoch, P candidate parameter vectors are sampled around the current
// mean. Each candidate drives every robot of the training scenario for K/P
// ticks (episodes restart when they finish); the environment ticks of all
// candidates add up to K. While the global tick counter is below E, actions
// are drawn uniformly from the action box instead of querying the policy.
// Every robot step lands in the replay dataset D. Candidates are scored by
// mean return per robot-episode and the sampling distribution is refit on the
// elites. The flow model's gain is refit on D after every epoch; epochs
// before M refine with the quasi-static model, later ones with the flow model.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "safenav/harness.hpp"
#include "safenav/replay.hpp"

namespace safenav {

/// cbf: refinement on during training, r = r_g + w_c r_c, no collision penalty.
/// collision: refinement off during training, collision penalty in r_g, r_c unused.
enum class RewardMode { cbf, collision };

inline std::string_view to_string(RewardMode m) { return m == RewardMode::cbf ? "cbf" : "collision"; }

inline RewardMode reward_mode_from_string(std::string_view s) {
  if (s == "cbf") return RewardMode::cbf;
  if (s == "collision") return RewardMode::collision;
  throw ValidationError("unknown reward mode '" + std::string(s) + "' (expected cbf or collision)");
}

struct TrainConfig {
  int epochs{60};               // N
  int steps_per_epoch{800};     // K, environment ticks summed over candidates
  int warmup_steps{100};        // E
  int static_epochs{10};        // M
  int population{8};            // P
  int elites{2};
  int hidden{32};
  double init_std{0.3};
  double min_std{0.05};
  int eval_episodes{10};
  std::uint64_t seed{1};
  std::string scenario{"sparse_4"};
  RewardMode reward{RewardMode::cbf};
  std::size_t replay_capacity{20000};
  int model_fit_samples{128};
  std::vector<double> flow_gain_grid{0.5, 0.75, 1.0, 1.25, 1.5};
  int finalists{3};             // candidates re-scored on the validation seeds

  bool operator==(const TrainConfig&) const = default;

  int ticks_per_candidate() const { return steps_per_epoch / population; }

  void validate() const {
    if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
    if (population < 1 || elites < 1) throw ValidationError("train: population and elites must be >= 1");
    if (population < 2 * elites) throw ValidationError("train: population must be >= 2 * elites");
    if (steps_per_epoch < population) throw ValidationError("train: steps_per_epoch must be >= population");
    if (warmup_steps < 0) throw ValidationError("train: warmup_steps must be >= 0");
    if (static_cast<long long>(warmup_steps) > static_cast<long long>(epochs) * steps_per_epoch) {
      throw ValidationError("train: warmup_steps must be <= epochs * steps_per_epoch");
    }
    if (static_epochs < 0 || static_epochs > epochs) throw ValidationError("train: static_epochs must be in [0, epochs]");
    if (hidden < 1) throw ValidationError("train: hidden must be >= 1");
    if (!(init_std > 0.0) || !(min_std >= 0.0)) throw ValidationError("train: need init_std > 0 and min_std >= 0");
    if (eval_episodes < 0) throw ValidationError("train: eval_episodes must be >= 0");
    if (!is_builtin_scenario(scenario)) throw ValidationError("train: unknown scenario '" + scenario + "'");
    if (model_fit_samples < 1) throw ValidationError("train: model_fit_samples must be >= 1");
    if (flow_gain_grid.empty()) throw ValidationError("train: flow_gain_grid must not be empty");
    for (double g : flow_gain_grid) {
      if (!(g >= 0.0) || !std::isfinite(g)) throw ValidationError("train: flow gains must be finite and >= 0");
    }
    if (finalists < 1) throw ValidationError("train: finalists must be >= 1");
  }
};

struct EpochLog {
  int epoch{0};
  double success_rate{0.0};
  double collision_rate{0.0};
  double mean_return{0.0};   // population mean score
  double elite_return{0.0};  // mean score of the elites (equal to mean_return when no update ran)
  double pred_error{0.0};    // error of the epoch's refinement model on D
  ModelKind model{ModelKind::quasi_static};
  double flow_gain{1.0};
  bool updated{false};       // false when every candidate used warmup ticks
  long long total_steps{0};
  long long policy_queries{0};
  double wall_time_s{0.0};

  bool operator==(const EpochLog&) const = default;
};

struct TrainResult {
  PolicyParams policy;
  std::vector<EpochLog> log;
  double flow_gain{1.0};
  long long first_policy_query_step{-1};  // global tick of the first policy call
};

inline constexpr const char* kTrainLogHeader = "epoch,success_rate,collision_rate,mean_return,pred_error,wall_time_s";

inline void write_train_log_csv(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kTrainLogHeader << '\n';
  for (const auto& e : log) {
    out << e.epoch << ',' << format_double(e.success_rate) << ',' << format_double(e.collision_rate) << ','
        << format_double(e.mean_return) << ',' << format_double(e.pred_error) << ',' << format_double(e.wall_time_s)
        << '\n';
  }
}

inline void save_policy(const std::filesystem::path& path, const PolicyParams& p) {
  p.validate();
  nlohmann::json j;
  j["input_dim"] = p.input_dim;
  j["hidden"] = p.hidden;
  j["weights"] = p.weights;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump() << '\n';
}

inline PolicyParams load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open policy file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("policy file " + path.string() + ": " + e.what());
  }
  for (const auto& [k, v] : j.items()) {
    if (k != "input_dim" && k != "hidden" && k != "weights") throw ValidationError("policy file: unknown key '" + k + "'");
  }
  PolicyParams p;
  try {
    p.input_dim = j.at("input_dim").get<int>();
    p.hidden = j.at("hidden").get<int>();
    p.weights = j.at("weights").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("policy file " + path.string() + ": " + e.what());
  }
  p.validate();
  return p;
}

inline PolicyFn perceptron_policy(const PolicyParams& params, const ActionBounds& bounds) {
  return [params, bounds](std::size_t, const Observation& obs) {
    return policy_forward(params, featurize(obs, bounds), bounds);
  };
}

inline PolicyFn nominal_policy_fn(const ActionBounds& bounds, const NominalParams& p = {}) {
  return [bounds, p](std::size_t, const Observation& obs) { return nominal_policy(obs, bounds, p); };
}

/// Gain from `grid` with the lowest flow prediction error on `dataset`;
/// ties go to the earlier grid entry.
inline double fit_flow_gain_on(std::span<const Transition> dataset, const WorldModelParams& base,
                               std::span<const double> grid) {
  double best_gain = grid.front();
  double best_err = std::numeric_limits<double>::infinity();
  for (double g : grid) {
    Predictor p{ModelKind::flow, base};
    p.params.flow_gain = g;
    const double err = prediction_error(p, dataset);
    if (err < best_err) {
      best_err = err;
      best_gain = g;
    }
  }
  return best_gain;
}

namespace detail {

struct RolloutStats {
  double total_return{0.0};
  int robot_episodes{0};
  int reached{0};
  int collided{0};
  int finished{0};  // robot-episodes that reached a terminal status other than a truncation
  int ticks{0};
  bool used_warmup{false};

  double score() const { return robot_episodes > 0 ? total_return / robot_episodes : 0.0; }
};

/// Scenario seed of episode `k` of epoch `epoch` (shared by all candidates).
inline std::uint64_t training_episode_seed(std::uint64_t seed, int epoch, int k) {
  return seed * 1000003ULL + static_cast<std::uint64_t>(epoch) * 101ULL + static_cast<std::uint64_t>(k);
}

}  // namespace detail

class JointTrainer {
 public:
  JointTrainer(TrainConfig cfg, CbfParams cbf, AlmParams alm, SimParams sim = {}, RewardParams reward = {})
      : cfg_(std::move(cfg)), cbf_(cbf), alm_(alm), sim_(sim), reward_(reward), dataset_(cfg_.replay_capacity) {
    cfg_.validate();
    cbf_.validate();
    alm_.validate();
    sim_.action_bounds.validate();
    if (cfg_.reward == RewardMode::collision) reward_.cbf_weight = 0.0;
  }

  const ReplayDataset& dataset() const { return dataset_; }

  /// `on_epoch` runs after every epoch (progress reporting).
  TrainResult run(const std::function<void(const EpochLog&)>& on_epoch = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t dim = PolicyParams::parameter_count(kFeatureDim, cfg_.hidden);
    std::vector<double> mean(dim, 0.0);
    std::vector<double> stdev(dim, cfg_.init_std);
    std::mt19937_64 rng(cfg_.seed);
    std::mt19937_64 warmup_rng(cfg_.seed ^ 0x9e3779b97f4a7c15ULL);

    TrainResult result;
    std::vector<std::pair<double, PolicyParams>> last_elites;
    const int ticks = cfg_.ticks_per_candidate();
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      const ModelKind kind = use_flow_ ? ModelKind::flow : ModelKind::quasi_static;
      std::vector<PolicyParams> candidates(static_cast<std::size_t>(cfg_.population));
      for (auto& c : candidates) {
        c = PolicyParams::zeros(kFeatureDim, cfg_.hidden);
        for (std::size_t i = 0; i < dim; ++i) c.weights[i] = mean[i] + stdev[i] * standard_normal(rng);
      }
      EpochLog log;
      log.epoch = epoch;
      log.model = kind;
      log.flow_gain = flow_gain_;
      std::vector<detail::RolloutStats> stats;
      int robot_episodes = 0, reached = 0, collided = 0;
      for (std::size_t j = 0; j < candidates.size(); ++j) {
        stats.push_back(rollout(candidates[j], kind, epoch, ticks, &warmup_rng, &result));
        robot_episodes += stats.back().finished;
        reached += stats.back().reached;
        collided += stats.back().collided;
        log.mean_return += stats.back().score();
      }
      log.mean_return /= static_cast<double>(candidates.size());
      log.success_rate = robot_episodes > 0 ? static_cast<double>(reached) / robot_episodes : 0.0;
      log.collision_rate = robot_episodes > 0 ? static_cast<double>(collided) / robot_episodes : 0.0;

      // Elite refit over candidates that never acted randomly.
      std::vector<std::size_t> eligible;
      for (std::size_t j = 0; j < stats.size(); ++j) {
        if (!stats[j].used_warmup) eligible.push_back(j);
      }
      log.elite_return = log.mean_return;
      if (static_cast<int>(eligible.size()) >= cfg_.elites) {
        std::stable_sort(eligible.begin(), eligible.end(),
                         [&](std::size_t a, std::size_t b) { return stats[a].score() > stats[b].score(); });
        eligible.resize(static_cast<std::size_t>(cfg_.elites));
        double elite_sum = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
          double m = 0.0;
          for (auto j : eligible) m += candidates[j].weights[i];
          m /= static_cast<double>(eligible.size());
          double v = 0.0;
          for (auto j : eligible) v += (candidates[j].weights[i] - m) * (candidates[j].weights[i] - m);
          v /= static_cast<double>(eligible.size());
          mean[i] = m;
          stdev[i] = std::max(std::sqrt(v), cfg_.min_std);
        }
        last_elites.clear();
        for (auto j : eligible) {
          elite_sum += stats[j].score();
          last_elites.emplace_back(stats[j].score(), candidates[j]);
        }
        log.elite_return = elite_sum / static_cast<double>(eligible.size());
        log.updated = true;
      }

      refit_model();
      log.pred_error = model_error(kind, model_sample(0));
      // Flow takes over from epoch M on, once it also beats the static
      // model on held-out transitions.
      if (!use_flow_ && epoch + 1 >= cfg_.static_epochs && epoch + 1 < cfg_.epochs) {
        const auto held_out = model_sample(0x5bd1e995ULL);
        if (!held_out.empty() &&
            model_error(ModelKind::flow, held_out) < model_error(ModelKind::quasi_static, held_out)) {
          use_flow_ = true;
        }
      }
      log.total_steps = total_steps_;
      log.policy_queries = policy_queries_;
      log.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      result.log.push_back(log);
      if (on_epoch) on_epoch(log);
    }

    // Best-scoring parameters: the final mean and the last elites, re-scored
    // on a shared set of validation episodes.
    std::vector<PolicyParams> finalists;
    PolicyParams m = PolicyParams::zeros(kFeatureDim, cfg_.hidden);
    m.weights = mean;
    finalists.push_back(m);
    for (const auto& [score, p] : last_elites) {
      if (static_cast<int>(finalists.size()) >= cfg_.finalists) break;
      finalists.push_back(p);
    }
    const ModelKind final_kind = use_flow_ ? ModelKind::flow : ModelKind::quasi_static;
    double best_score = -std::numeric_limits<double>::infinity();
    for (const auto& f : finalists) {
      const double s = rollout(f, final_kind, cfg_.epochs, ticks, nullptr, nullptr).score();
      if (s > best_score) {
        best_score = s;
        result.policy = f;
      }
    }
    result.flow_gain = flow_gain_;
    return result;
  }

  /// Episode configuration used for training rollouts and, with refinement
  /// forced on, for evaluating the trained policy.
  EpisodeConfig episode_config(ModelKind kind, bool refine) const {
    EpisodeConfig ec;
    ec.refine = refine;
    ec.model.kind = kind;
    ec.model.params.flow_gain = flow_gain_;
    ec.cbf = cbf_;
    ec.alm = alm_;
    ec.reward = reward_;
    ec.collision_penalty = cfg_.reward == RewardMode::collision;
    ec.record_steps = false;
    return ec;
  }

 private:
  /// One candidate's K/P ticks. With `warmup_rng` set, ticks below E act
  /// randomly and every step is appended to D; validation passes (null) do
  /// neither.
  detail::RolloutStats rollout(const PolicyParams& params, ModelKind kind, int epoch, int ticks,
                               std::mt19937_64* warmup_rng, TrainResult* result) {
    detail::RolloutStats st;
    const bool training = warmup_rng != nullptr;
    const EpisodeConfig ec = episode_config(kind, cfg_.reward == RewardMode::cbf);
    const ActionBounds bounds = sim_.action_bounds;
    int remaining = ticks;
    for (int k = 0; remaining > 0; ++k) {
      WorldState world =
          load_scenario(builtin_scenario(cfg_.scenario, detail::training_episode_seed(cfg_.seed, epoch, k)), sim_);
      const int full_cap = world.params.time_cap_steps;
      world.params.time_cap_steps = std::min(full_cap, remaining);
      std::size_t last_robot = world.robots.size();
      long long tick = total_steps_;
      auto policy = [&](std::size_t robot, const Observation& obs) -> Action {
        if (robot <= last_robot && last_robot != world.robots.size()) ++tick;
        last_robot = robot;
        if (training && tick < cfg_.warmup_steps) {
          st.used_warmup = true;
          return {uniform(*warmup_rng, bounds.min.linear, bounds.max.linear),
                  uniform(*warmup_rng, bounds.min.angular, bounds.max.angular)};
        }
        if (training) {
          ++policy_queries_;
          if (result && result->first_policy_query_step < 0) result->first_policy_query_step = tick;
        }
        return policy_forward(params, featurize(obs, bounds), bounds);
      };
      auto hook = [&](const StepSample& s) {
        const double r_c = ec.reward.cbf_weight * s.r_c;
        st.total_return += s.r_g + r_c;
        if (!training) return;
        ReplayRecord rec;
        rec.obs = digest(*s.obs);
        rec.a_nom = s.a_nom;
        rec.a_star = s.a_star;
        rec.next_obs = digest(*s.next_obs);
        rec.r_g = s.r_g;
        rec.r_c = r_c;
        rec.r = rec.r_g + rec.r_c;
        rec.done = s.done;
        dataset_.append(std::move(rec));
      };
      const EpisodeRecord er = run_episode(world, policy, ec, cfg_.scenario, hook);
      remaining -= er.step_count;
      st.ticks += er.step_count;
      if (training) total_steps_ += er.step_count;
      for (auto o : er.outcomes) {
        ++st.robot_episodes;
        if (o == RobotStatus::reached) ++st.reached;
        if (o == RobotStatus::collided) ++st.collided;
        // A timeout only counts as an outcome when the scenario's own cap was hit.
        if (o != RobotStatus::timeout || er.step_count >= full_cap) ++st.finished;
      }
      if (er.step_count == 0) break;
    }
    return st;
  }

  std::vector<Transition> model_sample(std::uint64_t salt) const {
    std::vector<Transition> out;
    if (dataset_.empty()) return out;
    const auto batch =
        dataset_.sample(static_cast<std::size_t>(cfg_.model_fit_samples), (cfg_.seed + dataset_.size()) ^ salt);
    for (const auto& r : batch) out.push_back(to_transition(r, sim_.dt));
    return out;
  }

  void refit_model() {
    const auto sample = model_sample(0);
    if (sample.empty()) return;
    WorldModelParams base;
    base.sim_dt = sim_.dt;
    base.frame_interval = sim_.dt;
    base.bounds = sim_.action_bounds;
    flow_gain_ = fit_flow_gain_on(sample, base, cfg_.flow_gain_grid);
  }

  double model_error(ModelKind kind, const std::vector<Transition>& sample) const {
    if (sample.empty()) return 0.0;
    Predictor p{kind, {}};
    p.params.sim_dt = sim_.dt;
    p.params.frame_interval = sim_.dt;
    p.params.bounds = sim_.action_bounds;
    p.params.flow_gain = flow_gain_;
    return prediction_error(p, sample);
  }

  TrainConfig cfg_;
  CbfParams cbf_;
  AlmParams alm_;
  SimParams sim_;
  RewardParams reward_;
  ReplayDataset dataset_;
  double flow_gain_{1.0};
  bool use_flow_{false};
  long long total_steps_{0};
  long long policy_queries_{0};
};

inline TrainResult train_joint(const TrainConfig& cfg, const CbfParams& cbf, const AlmParams& alm, const SimParams& sim = {},
                               const RewardParams& reward = {}, const std::function<void(const EpochLog&)>& on_epoch = {}) {
  JointTrainer trainer(cfg, cbf, alm, sim, reward);
  return trainer.run(on_epoch);
}

}  // namespace safenav
