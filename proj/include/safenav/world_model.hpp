#pragma once

// One-step look-ahead predictors M(s, a): a quasi-static ego-warp predictor and
// a blob-flow extrapolation predictor built on the same content/motion split
// (content = newest frame, motion = differences between adjacent frames).

#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "safenav/cbf_field.hpp"
#include "safenav/observation.hpp"

namespace safenav {

struct WorldModelParams {
  double sim_dt{0.1};          // ego-motion integration sub-step, s
  double frame_interval{0.1};  // time between stacked frames, s
  double flow_cap{3.0};        // cells per frame
  double flow_gain{1.0};       // scale on extrapolated flow, refit on the replay data
  double min_flow{0.35};       // cells per frame; slower blobs are treated as static
  ActionBounds bounds;

  bool operator==(const WorldModelParams&) const = default;
};

/// Ego-motion of a robot applying `a` (clamped) for `horizon` seconds, Euler
/// sub-stepped exactly like the simulator.
inline EgoMotion integrate_ego_motion(Action a, double horizon, double sub_dt) {
  if (!(horizon > 0.0)) return {};
  const int n = std::max(1, static_cast<int>(std::lround(horizon / sub_dt)));
  const double h = horizon / n;
  Pose2D p{};
  for (int k = 0; k < n; ++k) {
    p.x += a.linear * std::cos(p.theta) * h;
    p.y += a.linear * std::sin(p.theta) * h;
    p.theta += a.angular * h;
  }
  return {p.x, p.y, wrap_angle(p.theta)};
}

/// Rigid transform from the start frame into the robot frame reached after
/// one sub-step, with the rotation precomputed.
struct StageFrame {
  double dx{0.0};
  double dy{0.0};
  double c{1.0};  // cos(-dtheta)
  double s{0.0};  // sin(-dtheta)

  Vec2 to_later(Vec2 p) const {
    const double x = p.x - dx;
    const double y = p.y - dy;
    return {c * x - s * y, s * x + c * y};
  }

  bool operator==(const StageFrame&) const = default;
};

/// Robot pose after each sub-step of the horizon, relative to the start pose.
inline std::vector<StageFrame> ego_motion_stages(Action a, double horizon, double sub_dt) {
  std::vector<StageFrame> stages;
  if (!(horizon > 0.0)) return stages;
  const int n = std::max(1, static_cast<int>(std::lround(horizon / sub_dt)));
  const double h = horizon / n;
  stages.reserve(static_cast<std::size_t>(n));
  Pose2D p{};
  for (int k = 0; k < n; ++k) {
    p.x += a.linear * std::cos(p.theta) * h;
    p.y += a.linear * std::sin(p.theta) * h;
    p.theta += a.angular * h;
    const double th = wrap_angle(p.theta);
    stages.push_back({p.x, p.y, std::cos(-th), std::sin(-th)});
  }
  return stages;
}

/// Lowest barrier value an obstacle point reaches over the horizon. The point
/// moves linearly from `start` to `end` (current frame) while the robot passes
/// through `stages`; each sub-step is evaluated in the robot frame of that
/// moment. Empty when the point never comes within r_max.
inline std::optional<double> swept_barrier(std::span<const StageFrame> stages, Vec2 start, Vec2 end, double linear,
                                           const CbfParams& cbf) {
  std::optional<double> best;
  const double n = static_cast<double>(stages.size());
  for (std::size_t k = 0; k < stages.size(); ++k) {
    const Vec2 p = start + (end - start) * (static_cast<double>(k + 1) / n);
    const Vec2 q = stages[k].to_later(p);
    if (q.squared_norm() > cbf.r_max * cbf.r_max) continue;
    const double h = barrier_value(q, linear, cbf);
    if (!best || h < *best) best = h;
  }
  return best;
}

// ---------------------------------------------------------------- flow

/// 8-connected component of occupied cells. Centroid in grid units,
/// x to the right (columns) and y up (rows).
struct Blob {
  std::vector<std::size_t> cells;
  Vec2 centroid;
};

inline std::vector<Blob> find_blobs(const Costmap& map) {
  std::vector<Blob> blobs;
  std::vector<std::uint8_t> seen(map.size(), 0);
  std::vector<std::size_t> stack;
  const int w = map.width();
  for (std::size_t start = 0; start < map.size(); ++start) {
    if (!map[start] || seen[start]) continue;
    Blob b;
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      b.cells.push_back(i);
      const int row = static_cast<int>(i) / w;
      const int col = static_cast<int>(i) % w;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if ((dr == 0 && dc == 0) || !map.in_grid(row + dr, col + dc)) continue;
          const std::size_t j = map.index(row + dr, col + dc);
          if (map[j] && !seen[j]) {
            seen[j] = 1;
            stack.push_back(j);
          }
        }
      }
    }
    std::sort(b.cells.begin(), b.cells.end());
    double sr = 0.0, sc = 0.0;
    for (std::size_t i : b.cells) {
      sr += static_cast<double>(static_cast<int>(i) / w);
      sc += static_cast<double>(static_cast<int>(i) % w);
    }
    const double n = static_cast<double>(b.cells.size());
    b.centroid = {sc / n, sr / n};
    blobs.push_back(std::move(b));
  }
  return blobs;
}

/// Greedy one-to-one association of `next` blobs to `prev` blobs by centroid
/// distance (at most `cap` cells); nearer pairs first, larger blobs first on
/// ties. Returns, per next blob, the index of its predecessor or -1.
inline std::vector<int> match_blobs(const std::vector<Blob>& prev, const std::vector<Blob>& next, double cap) {
  struct Pair {
    double dist;
    std::size_t size;
    int n, p;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < next.size(); ++i) {
    for (std::size_t j = 0; j < prev.size(); ++j) {
      const double d = (next[i].centroid - prev[j].centroid).norm();
      if (d <= cap) pairs.push_back({d, next[i].cells.size(), static_cast<int>(i), static_cast<int>(j)});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.size != b.size) return a.size > b.size;
    if (a.n != b.n) return a.n < b.n;
    return a.p < b.p;
  });
  std::vector<int> match(next.size(), -1);
  std::vector<bool> taken(prev.size(), false);
  for (const auto& pr : pairs) {
    if (match[static_cast<std::size_t>(pr.n)] >= 0 || taken[static_cast<std::size_t>(pr.p)]) continue;
    match[static_cast<std::size_t>(pr.n)] = pr.p;
    taken[static_cast<std::size_t>(pr.p)] = true;
  }
  return match;
}

/// Per-cell displacement (cells per frame, x right / y up) of the newest
/// frame's blobs, plus the fraction of newest blobs that found a predecessor.
struct FlowModel {
  int height{0};
  int width{0};
  std::vector<Vec2> flow;
  double confidence{1.0};

  bool operator==(const FlowModel&) const = default;
  bool is_zero() const {
    return std::all_of(flow.begin(), flow.end(), [](Vec2 v) { return v.x == 0.0 && v.y == 0.0; });
  }
};

/// Centroid matching between consecutive aligned frames. A newest-frame blob
/// takes the mean displacement along its chain of matches; unmatched blobs
/// (and blobs slower than min_flow) get zero flow.
inline FlowModel estimate_flow(std::span<const Costmap> frames, const WorldModelParams& params) {
  if (frames.size() < 2) throw ValidationError("estimate_flow: need at least 2 frames");
  const Costmap& newest = frames.back();
  FlowModel model;
  model.height = newest.height();
  model.width = newest.width();
  model.flow.assign(newest.size(), Vec2{});

  std::vector<std::vector<Blob>> blobs;
  blobs.reserve(frames.size());
  for (const auto& f : frames) blobs.push_back(find_blobs(f));
  std::vector<std::vector<int>> matches;  // matches[k]: blobs of frame k+1 -> frame k
  for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
    matches.push_back(match_blobs(blobs[k], blobs[k + 1], params.flow_cap));
  }

  const auto& last = blobs.back();
  std::size_t matched = 0;
  for (std::size_t b = 0; b < last.size(); ++b) {
    Vec2 total{};
    int links = 0;
    int cur = static_cast<int>(b);
    for (std::size_t k = frames.size() - 1; k >= 1; --k) {
      const int pred = matches[k - 1][static_cast<std::size_t>(cur)];
      if (pred < 0) break;
      total = total + (blobs[k][static_cast<std::size_t>(cur)].centroid - blobs[k - 1][static_cast<std::size_t>(pred)].centroid);
      ++links;
      cur = pred;
    }
    if (links == 0) continue;
    ++matched;
    Vec2 v = total * (1.0 / links);
    if (v.norm() < params.min_flow) v = {};
    for (std::size_t i : last[b].cells) model.flow[i] = v;
  }
  model.confidence = last.empty() ? 1.0 : static_cast<double>(matched) / static_cast<double>(last.size());
  return model;
}

// ---------------------------------------------------------------- prediction

/// An obstacle cell of the newest frame followed through the prediction:
/// `source` is its index in the current map, `position` its robot-frame
/// location (current frame while prepared, predicted frame once predicted).
struct TrackedPoint {
  std::size_t source{0};
  Vec2 position;

  bool operator==(const TrackedPoint&) const = default;
};

struct TransitionPrediction {
  Costmap costmap;  // predicted map, in the predicted robot frame
  Action velocity;
  EgoMotion ego_motion;
  std::vector<TrackedPoint> points;    // predicted frame
  std::vector<TrackedPoint> advected;  // same points, current frame
  std::vector<StageFrame> stages;      // robot pose per sub-step

  bool operator==(const TransitionPrediction&) const = default;
};

/// Action-independent half of a prediction: obstacle content after
/// extrapolating its own motion over the horizon, still in the current frame.
struct PreparedPrediction {
  Costmap content;
  std::vector<TrackedPoint> points;
  double delta_t{0.0};
};

enum class ModelKind { quasi_static, flow };

inline std::string_view to_string(ModelKind k) { return k == ModelKind::flow ? "flow" : "static"; }

inline ModelKind model_kind_from_string(std::string_view s) {
  if (s == "static") return ModelKind::quasi_static;
  if (s == "flow") return ModelKind::flow;
  throw ValidationError("unknown model '" + std::string(s) + "' (expected static or flow)");
}

namespace detail {

inline PreparedPrediction prepare_static(const Observation& obs, double delta_t) {
  PreparedPrediction prep;
  prep.content = obs.newest();
  prep.delta_t = delta_t;
  for (std::size_t i = 0; i < prep.content.size(); ++i) {
    if (prep.content[i]) prep.points.push_back({i, prep.content.cell_center(i)});
  }
  return prep;
}

inline PreparedPrediction prepare_flow(const Observation& obs, double delta_t, const WorldModelParams& params) {
  const FlowModel flow = estimate_flow(obs.frames, params);
  if (flow.is_zero()) return prepare_static(obs, delta_t);
  const Costmap& newest = obs.newest();
  const double frames_ahead = delta_t / params.frame_interval * params.flow_gain;
  const double cs = newest.cell_size();
  PreparedPrediction prep;
  prep.delta_t = delta_t;
  prep.content = Costmap(newest.params());
  for (std::size_t i = 0; i < newest.size(); ++i) {
    if (!newest[i]) continue;
    const Vec2 v = flow.flow[i];
    // grid x-right is robot -y, grid y-up is robot +x
    const Vec2 p = newest.cell_center(i) + Vec2{v.y * cs * frames_ahead, -v.x * cs * frames_ahead};
    prep.points.push_back({i, p});
    if (auto cell = newest.cell_of(p)) prep.content.cells()[*cell] = 1;
  }
  return prep;
}

}  // namespace detail

/// Completes a prepared prediction for one candidate action.
inline TransitionPrediction finish_prediction(const PreparedPrediction& prep, Action action, const WorldModelParams& params) {
  TransitionPrediction out;
  out.velocity = params.bounds.clamp(action);
  out.ego_motion = integrate_ego_motion(out.velocity, prep.delta_t, params.sim_dt);
  out.stages = ego_motion_stages(out.velocity, prep.delta_t, params.sim_dt);
  out.advected = prep.points;
  out.costmap = affine_transform(prep.content, out.ego_motion, WarpMode::forward);
  out.points.reserve(prep.points.size());
  for (const auto& p : prep.points) out.points.push_back({p.source, out.ego_motion.to_later(p.position)});
  return out;
}

/// Quasi-static prediction: the world holds still, only the robot moves.
inline TransitionPrediction predict_static(const Observation& obs, Action action, double delta_t,
                                           const WorldModelParams& params = {}) {
  if (obs.frames.empty()) throw ValidationError("predict_static: observation has no frames");
  return finish_prediction(detail::prepare_static(obs, delta_t), action, params);
}

/// Flow prediction: obstacle blobs are advected by their estimated flow over
/// the horizon, then the result is ego-warped as in predict_static.
inline TransitionPrediction predict_flow(const Observation& obs, Action action, double delta_t,
                                         const WorldModelParams& params = {}) {
  if (obs.frames.size() < 2) throw ValidationError("predict_flow: need at least 2 frames");
  return finish_prediction(detail::prepare_flow(obs, delta_t, params), action, params);
}

/// A transition model choice plus its parameters.
struct Predictor {
  ModelKind kind{ModelKind::quasi_static};
  WorldModelParams params;

  PreparedPrediction prepare(const Observation& obs, double delta_t) const {
    if (obs.frames.empty()) throw ValidationError("predictor: observation has no frames");
    if (kind == ModelKind::flow && obs.frames.size() >= 2) return detail::prepare_flow(obs, delta_t, params);
    return detail::prepare_static(obs, delta_t);
  }
  TransitionPrediction predict(const Observation& obs, Action action, double delta_t) const {
    return finish_prediction(prepare(obs, delta_t), action, params);
  }
};

/// T^-1[h(M(s, a))]: barrier values of the predicted obstacle points,
/// evaluated in the predicted robot frame with the predicted velocity and
/// written back to the current-frame cell each point came from. Each point
/// contributes its lowest value over the horizon sub-steps, so a point the
/// robot would pass through between frames cannot read as safe.
inline CbfField aligned_prediction_field(const TransitionPrediction& pred, const CbfParams& cbf) {
  CbfField f = CbfField::empty(pred.costmap.height(), pred.costmap.width(), cbf.r_max);
  for (const auto& p : pred.advected) {
    const auto h = swept_barrier(pred.stages, pred.costmap.cell_center(p.source), p.position, pred.velocity.linear, cbf);
    if (!h) continue;
    if (f.occupied[p.source]) {
      f.h[p.source] = std::min(f.h[p.source], *h);
    } else {
      f.h[p.source] = *h;
      f.occupied[p.source] = 1;
    }
  }
  return f;
}

// ---------------------------------------------------------------- evaluation

struct Transition {
  Observation obs;
  Action action;
  Costmap next;  // realized newest frame after applying `action` for delta_t
  double delta_t{0.1};
};

/// Mean over transitions of |predicted XOR actual| / max(1, |actual|).
inline double prediction_error(const Predictor& model, std::span<const Transition> dataset) {
  if (dataset.empty()) throw ValidationError("prediction_error: dataset is empty");
  double total = 0.0;
  for (const auto& t : dataset) {
    const Costmap pred = model.predict(t.obs, t.action, t.delta_t).costmap;
    if (pred.params() != t.next.params()) throw ValidationError("prediction_error: geometry mismatch");
    std::size_t diff = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) diff += (pred[i] != t.next[i]) ? 1 : 0;
    total += static_cast<double>(diff) / static_cast<double>(std::max<std::size_t>(1, t.next.occupied_count()));
  }
  return total / static_cast<double>(dataset.size());
}

/// Picks the flow gain with the lowest prediction error (first wins on ties).
inline double fit_flow_gain(const Predictor& flow_model, std::span<const Transition> dataset,
                            std::span<const double> candidates) {
  if (candidates.empty()) throw ValidationError("fit_flow_gain: no candidate gains");
  double best_gain = candidates.front();
  double best_err = std::numeric_limits<double>::infinity();
  for (double g : candidates) {
    Predictor m = flow_model;
    m.kind = ModelKind::flow;
    m.params.flow_gain = g;
    const double e = prediction_error(m, dataset);
    if (e < best_err) {
      best_err = e;
      best_gain = g;
    }
  }
  return best_gain;
}

}  // namespace safenav
