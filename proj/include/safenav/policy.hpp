#pragma once

// Decentralized policies (proportional goal seeker and a small perceptron),
// observation features and the goal-reaching reward.

#include <span>
#include <vector>

#include "safenav/observation.hpp"
#include "safenav/sim_world.hpp"

namespace safenav {

inline constexpr int kPoolGrid = 6;
inline constexpr int kFeatureDim = 2 * kPoolGrid * kPoolGrid + 4;  // 76

struct NominalParams {
  double k_linear{1.0};   // 1/s
  double k_angular{2.0};  // 1/s
  double goal_tolerance{0.2};

  bool operator==(const NominalParams&) const = default;
};

/// Proportional goal seeking: turn toward the goal, drive at a speed that
/// shrinks with the bearing error and vanishes when the goal is behind.
inline Action nominal_policy(const Observation& obs, const ActionBounds& bounds, const NominalParams& p = {}) {
  const double dist = obs.goal_rel.norm();
  if (dist < p.goal_tolerance) return {0.0, 0.0};
  const double bearing = std::atan2(obs.goal_rel.y, obs.goal_rel.x);
  const double alignment = std::max(0.0, 1.0 - std::abs(bearing) / (0.5 * kPi));
  return bounds.clamp({p.k_linear * dist * alignment, p.k_angular * bearing});
}

/// 76 values in [-1, 1]: 6x6 max-pooled newest frame, 6x6 mean-pooled
/// (newest - oldest) difference, goal bearing / pi, tanh(goal distance / 4 m),
/// and the velocity scaled by the action box.
inline std::vector<double> featurize(const Observation& obs, const ActionBounds& bounds) {
  std::vector<double> f(kFeatureDim, 0.0);
  const Costmap& newest = obs.newest();
  const Costmap& oldest = obs.frames.front();
  const int h = newest.height();
  const int w = newest.width();
  std::vector<int> counts(kPoolGrid * kPoolGrid, 0);
  for (int r = 0; r < h; ++r) {
    const int pr = r * kPoolGrid / h;
    for (int c = 0; c < w; ++c) {
      const int pc = c * kPoolGrid / w;
      const int k = pr * kPoolGrid + pc;
      const double v = newest.at(r, c);
      f[static_cast<std::size_t>(k)] = std::max(f[static_cast<std::size_t>(k)], v);
      f[static_cast<std::size_t>(kPoolGrid * kPoolGrid + k)] += v - static_cast<double>(oldest.at(r, c));
      ++counts[static_cast<std::size_t>(k)];
    }
  }
  for (int k = 0; k < kPoolGrid * kPoolGrid; ++k) {
    auto& d = f[static_cast<std::size_t>(kPoolGrid * kPoolGrid + k)];
    d = counts[static_cast<std::size_t>(k)] ? d / counts[static_cast<std::size_t>(k)] : 0.0;
  }
  const std::size_t tail = 2 * kPoolGrid * kPoolGrid;
  const double dist = obs.goal_rel.norm();
  f[tail] = dist > 0.0 ? std::atan2(obs.goal_rel.y, obs.goal_rel.x) / kPi : 0.0;
  f[tail + 1] = std::tanh(dist / 4.0);
  const double lin_scale = std::max(std::abs(bounds.min.linear), std::abs(bounds.max.linear));
  const double ang_scale = std::max(std::abs(bounds.min.angular), std::abs(bounds.max.angular));
  f[tail + 2] = std::clamp(obs.velocity.linear / lin_scale, -1.0, 1.0);
  f[tail + 3] = std::clamp(obs.velocity.angular / ang_scale, -1.0, 1.0);
  return f;
}

/// Two-layer perceptron: input -> hidden (tanh) -> 2 (tanh, mapped onto the
/// action box). Flat weight layout: W1 (hidden x input), b1, W2 (2 x hidden), b2.
struct PolicyParams {
  int input_dim{kFeatureDim};
  int hidden{32};
  std::vector<double> weights;

  bool operator==(const PolicyParams&) const = default;

  static std::size_t parameter_count(int input_dim, int hidden) {
    return static_cast<std::size_t>(hidden) * static_cast<std::size_t>(input_dim + 1) +
           2 * static_cast<std::size_t>(hidden + 1);
  }
  static PolicyParams zeros(int input_dim = kFeatureDim, int hidden = 32) {
    return {input_dim, hidden, std::vector<double>(parameter_count(input_dim, hidden), 0.0)};
  }
  void validate() const {
    if (input_dim < 1 || hidden < 1) throw ValidationError("policy: dimensions must be positive");
    if (weights.size() != parameter_count(input_dim, hidden)) {
      throw ValidationError("policy: expected " + std::to_string(parameter_count(input_dim, hidden)) + " weights, got " +
                            std::to_string(weights.size()));
    }
    for (double v : weights) {
      if (!std::isfinite(v)) throw ValidationError("policy: non-finite weight");
    }
  }
};

inline Action policy_forward(const PolicyParams& params, std::span<const double> features, const ActionBounds& bounds) {
  if (static_cast<int>(features.size()) != params.input_dim) {
    throw ValidationError("policy_forward: expected " + std::to_string(params.input_dim) + " features, got " +
                          std::to_string(features.size()));
  }
  if (params.weights.size() != PolicyParams::parameter_count(params.input_dim, params.hidden)) {
    throw ValidationError("policy_forward: weight count does not match dimensions");
  }
  const std::size_t in = static_cast<std::size_t>(params.input_dim);
  const std::size_t hid = static_cast<std::size_t>(params.hidden);
  const double* w1 = params.weights.data();
  const double* b1 = w1 + hid * in;
  const double* w2 = b1 + hid;
  const double* b2 = w2 + 2 * hid;
  std::vector<double> hidden(hid);
  for (std::size_t j = 0; j < hid; ++j) {
    double s = b1[j];
    const double* row = w1 + j * in;
    for (std::size_t i = 0; i < in; ++i) s += row[i] * features[i];
    hidden[j] = std::tanh(s);
  }
  double out[2];
  for (std::size_t k = 0; k < 2; ++k) {
    double s = b2[k];
    for (std::size_t j = 0; j < hid; ++j) s += w2[k * hid + j] * hidden[j];
    out[k] = std::tanh(s);
  }
  const Action mid = bounds.midpoint();
  return {mid.linear + 0.5 * (bounds.max.linear - bounds.min.linear) * out[0],
          mid.angular + 0.5 * (bounds.max.angular - bounds.min.angular) * out[1]};
}

struct RewardParams {
  double k_distance{10.0};  // per metre of progress
  double arrive{20.0};
  double collide{20.0};
  double step_cost{0.05};
  double cbf_weight{1.0};   // w_c on the barrier reward

  bool operator==(const RewardParams&) const = default;
};

/// Dense progress reward with arrival bonus, optional collision penalty and a
/// per-step cost.
inline double goal_reward(const RobotState& prev, const RobotState& next, const RewardParams& p,
                          bool collision_penalty) {
  const double before = (prev.goal - prev.pose.position()).norm();
  const double after = (next.goal - next.pose.position()).norm();
  double r = p.k_distance * (before - after) - p.step_cost;
  const bool fresh = prev.status == RobotStatus::active;
  if (fresh && next.status == RobotStatus::reached) r += p.arrive;
  if (fresh && next.status == RobotStatus::collided && collision_penalty) r -= p.collide;
  return r;
}

}  // namespace safenav
