#pragma once

// Augmented Lagrangian refinement of a nominal action against the costmap
// barrier constraints and the action box, plus the violation-based reward.
//
// Sign convention: every constraint value is <= 0 when violated and 0 when
// satisfied. The two action-box terms enter as the signed magnitudes
// -gamma * |C_dyn_up| and -gamma * |C_dyn_low|, so all multipliers start at
// lambda0 >= 0 and only ever grow.

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "safenav/cbf_field.hpp"
#include "safenav/world_model.hpp"

namespace safenav {

struct AlmParams {
  double sigma0{1.0};
  double rho{2.0};
  double sigma_max{64.0};
  double lambda0{0.0};
  double gamma{1.0};
  int outer_iters{6};
  int inner_iters{25};
  double inner_step{0.5};
  double tol{1e-3};
  double fd_step{1e-3};
  int max_evaluations{0};  // > 0 caps objective evaluations ("fixed steps of refinement")

  bool operator==(const AlmParams&) const = default;

  void validate() const {
    if (!(rho > 1.0)) throw ValidationError("alm: rho must be > 1");
    if (!(sigma0 > 0.0) || !(sigma_max >= sigma0)) throw ValidationError("alm: need 0 < sigma0 <= sigma_max");
    if (!(lambda0 >= 0.0)) throw ValidationError("alm: lambda0 must be >= 0");
    if (!(gamma > 0.0)) throw ValidationError("alm: gamma must be > 0");
    if (!(tol > 0.0) || !(fd_step > 0.0) || !(inner_step > 0.0)) throw ValidationError("alm: tol, fd_step, inner_step must be > 0");
    if (outer_iters < 1 || inner_iters < 1) throw ValidationError("alm: iteration counts must be >= 1");
    if (max_evaluations < 0) throw ValidationError("alm: max_evaluations must be >= 0");
  }
};

/// lambda_ij over cells (sparse: absent cells hold `initial`), lambda_1, lambda_2.
struct Multipliers {
  std::vector<std::pair<std::size_t, double>> cells;  // sorted by cell index
  double initial{0.0};
  double dyn_up{0.0};
  double dyn_low{0.0};

  bool operator==(const Multipliers&) const = default;

  static Multipliers uniform(double lambda0) { return {{}, lambda0, lambda0, lambda0}; }

  double cell(std::size_t index) const {
    auto it = std::lower_bound(cells.begin(), cells.end(), index,
                               [](const auto& e, std::size_t i) { return e.first < i; });
    return (it != cells.end() && it->first == index) ? it->second : initial;
  }
  void set_cell(std::size_t index, double value) {
    auto it = std::lower_bound(cells.begin(), cells.end(), index,
                               [](const auto& e, std::size_t i) { return e.first < i; });
    if (it != cells.end() && it->first == index) {
      it->second = value;
    } else {
      cells.insert(it, {index, value});
    }
  }
  double max_value() const {
    double m = std::max({initial, dyn_up, dyn_low});
    for (const auto& [i, v] : cells) m = std::max(m, v);
    return m;
  }
};

inline double next_multiplier(double lambda, double sigma, double constraint) { return lambda - sigma * constraint; }

inline double next_penalty(double sigma, const AlmParams& p) { return std::min(p.rho * sigma, p.sigma_max); }

/// L_sigma = |a - a_nom|^2 - (sum lambda_ij C_ij + lambda_1 g_up + lambda_2 g_low)
///           + sigma/2 (sum C_ij^2 + g_up^2 + g_low^2),   g = -gamma |C_dyn|_2
inline double lagrangian_value(Action a, Action a_nom, const Multipliers& m, double sigma, const ConstraintEval& c) {
  const double dl = a.linear - a_nom.linear;
  const double da = a.angular - a_nom.angular;
  double linear_terms = 0.0;
  double quadratic_terms = 0.0;
  for (std::size_t i = 0; i < c.c_cbf.size(); ++i) {
    const double ci = c.c_cbf[i];
    if (ci == 0.0) continue;
    linear_terms += m.cell(i) * ci;
    quadratic_terms += ci * ci;
  }
  const double g_up = -c.gamma * c.dyn_up_norm();
  const double g_low = -c.gamma * c.dyn_low_norm();
  linear_terms += m.dyn_up * g_up + m.dyn_low * g_low;
  quadratic_terms += g_up * g_up + g_low * g_low;
  return dl * dl + da * da - linear_terms + 0.5 * sigma * quadratic_terms;
}

/// One multiplier/penalty update: lambda <- lambda - sigma C, sigma <- min(rho sigma, sigma_max).
inline std::pair<Multipliers, double> update_multipliers(const Multipliers& m, double sigma, const ConstraintEval& c,
                                                         const AlmParams& p) {
  if (!(sigma > 0.0)) throw ValidationError("update_multipliers: sigma must be > 0");
  Multipliers out = m;
  for (std::size_t i = 0; i < c.c_cbf.size(); ++i) {
    if (c.c_cbf[i] == 0.0) continue;
    out.set_cell(i, next_multiplier(m.cell(i), sigma, c.c_cbf[i]));
  }
  out.dyn_up = next_multiplier(m.dyn_up, sigma, -c.gamma * c.dyn_up_norm());
  out.dyn_low = next_multiplier(m.dyn_low, sigma, -c.gamma * c.dyn_low_norm());
  return {std::move(out), next_penalty(sigma, p)};
}

/// Full-grid constraint evaluation at `a`: barrier field of the newest frame,
/// predicted field aligned back to it, derivative condition and action box.
inline ConstraintEval evaluate_constraints(const Observation& obs, Action a, const Predictor& model,
                                           const CbfParams& cbf, double gamma) {
  const CbfField current = evaluate_h(obs.newest(), obs.velocity, cbf);
  const TransitionPrediction pred = model.predict(obs, a, cbf.delta_t);
  ConstraintEval eval = derivative_condition(current, aligned_prediction_field(pred, cbf), cbf);
  set_dynamic_constraints(eval, a, model.params.bounds, gamma);
  return eval;
}

inline double segment_distance_to_origin(Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squared_norm();
  const double t = len2 > 0.0 ? std::clamp(-a.dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (a + ab * t).norm();
}

/// The barrier constraints of one decision compiled down to the obstacle cells
/// that can matter, so each candidate action costs one pass over a short list.
/// Agrees with evaluate_constraints cell for cell.
class CompiledConstraints {
 public:
  CompiledConstraints(const Observation& obs, const Predictor& model, const CbfParams& cbf)
      : cbf_(cbf), model_params_(model.params) {
    const Costmap& map = obs.newest();
    const PreparedPrediction prep = model.prepare(obs, cbf.delta_t);
    horizon_ = prep.delta_t;
    const double reach = std::max(std::abs(model.params.bounds.max.linear), std::abs(model.params.bounds.min.linear)) *
                         cbf.delta_t;
    for (const auto& p : prep.points) {
      const Vec2 d = map.cell_center(p.source);
      const bool considered = d.norm() <= cbf.r_max;
      const double closest = segment_distance_to_origin(d, p.position);
      if (!considered && closest > cbf.r_max + reach + 1e-9) continue;
      const double h = considered ? barrier_value(d, obs.velocity.linear, cbf) : cbf.r_max;
      sources_.push_back(p.source);
      starts_.push_back(d);
      positions_.push_back(p.position);
      current_h_.push_back(h);
      current_considered_.push_back(considered ? 1 : 0);
      // Over the horizon the robot travels at most |v| horizon and v_proj is
      // at most |v|, so h_next >= closest - |v| (horizon + delta_t) - r_min.
      slack_.push_back(closest - cbf.r_min - (1.0 - cbf.alpha) * h + cbf.epsilon);
    }
  }

  std::size_t size() const { return sources_.size(); }
  std::span<const std::size_t> sources() const { return sources_; }

  /// Barrier constraint per compiled cell for action `a` (clamped to the box).
  void evaluate(Action a, std::span<double> out) const {
    const Action v = model_params_.bounds.clamp(a);
    const auto stages = ego_motion_stages(v, horizon_, model_params_.sim_dt);
    const double travel = std::abs(v.linear) * (horizon_ + cbf_.delta_t);
    for (std::size_t k = 0; k < sources_.size(); ++k) {
      if (slack_[k] - travel > 1e-9) {  // cannot bind for this action
        out[k] = 0.0;
        continue;
      }
      const auto h_pred = swept_barrier(stages, starts_[k], positions_[k], v.linear, cbf_);
      if (!h_pred && !current_considered_[k]) {
        out[k] = 0.0;
        continue;
      }
      const double h = current_h_[k];
      out[k] = std::min(h_pred.value_or(cbf_.r_max) - h + cbf_.alpha * h + cbf_.epsilon, 0.0);
    }
  }

  /// Scatter compiled values back onto a full grid.
  ConstraintEval to_grid(std::span<const double> values, const Costmap& map) const {
    ConstraintEval e;
    e.height = map.height();
    e.width = map.width();
    e.c_cbf.assign(map.size(), 0.0);
    for (std::size_t k = 0; k < sources_.size(); ++k) e.c_cbf[sources_[k]] = values[k];
    return e;
  }

 private:
  CbfParams cbf_;
  WorldModelParams model_params_;
  std::vector<std::size_t> sources_;
  double horizon_{0.0};
  std::vector<Vec2> starts_;     // obstacle points now, current frame
  std::vector<Vec2> positions_;  // advected obstacle points, current frame
  std::vector<double> current_h_;
  std::vector<std::uint8_t> current_considered_;
  std::vector<double> slack_;  // lower bound of the constraint at zero speed
};

struct RefineTraceEntry {
  int outer{0};
  double sigma{0.0};
  double max_lambda{0.0};
  double objective{0.0};
  double max_violation{0.0};
  Action action;
};

struct RefineResult {
  Action action;
  double r_c{0.0};
  bool converged{false};
  bool restored{false};     // converged through the braking restoration
  double max_violation{0.0};
  int iterations{0};        // outer iterations run
  int inner_iterations{0};
  int evaluations{0};       // objective evaluations
  std::vector<RefineTraceEntry> trace;
};

/// One line per outer iteration, `key=value` separated by spaces.
inline std::string format_trace(const RefineResult& r) {
  std::string out;
  char buf[256];
  for (const auto& t : r.trace) {
    std::snprintf(buf, sizeof buf, "outer=%d sigma=%.17g max_lambda=%.17g objective=%.17g max_violation=%.17g a=%.17g,%.17g\n",
                  t.outer, t.sigma, t.max_lambda, t.objective, t.max_violation, t.action.linear, t.action.angular);
    out += buf;
  }
  return out;
}

namespace detail {

/// ALM state over a compiled constraint set.
class AlmObjective {
 public:
  AlmObjective(const CompiledConstraints& cons, Action a_nom, const ActionBounds& bounds, const AlmParams& alm)
      : cons_(cons), a_nom_(a_nom), bounds_(bounds), alm_(alm), values_(cons.size(), 0.0),
        lambda_(cons.size(), alm.lambda0), lambda_up_(alm.lambda0), lambda_low_(alm.lambda0), sigma_(alm.sigma0) {}

  struct Eval {
    double value;
    double max_violation;
  };

  Eval operator()(Action a) {
    ++evaluations_;
    cons_.evaluate(a, values_);
    const auto dyn = dynamic_constraints(a, bounds_);
    const double g_up = -alm_.gamma * std::hypot(dyn.up.linear, dyn.up.angular);
    const double g_low = -alm_.gamma * std::hypot(dyn.low.linear, dyn.low.angular);
    double lin = lambda_up_ * g_up + lambda_low_ * g_low;
    double quad = g_up * g_up + g_low * g_low;
    double worst = std::max({0.0, -dyn.up.linear, -dyn.up.angular, -dyn.low.linear, -dyn.low.angular});
    for (std::size_t k = 0; k < values_.size(); ++k) {
      const double c = values_[k];
      if (c == 0.0) continue;
      lin += lambda_[k] * c;
      quad += c * c;
      worst = std::max(worst, -c);
    }
    const double dl = a.linear - a_nom_.linear;
    const double da = a.angular - a_nom_.angular;
    return {dl * dl + da * da - lin + 0.5 * sigma_ * quad, worst};
  }

  /// Multiplier update from the constraint values at `a`.
  void update(Action a) {
    cons_.evaluate(a, values_);
    const auto dyn = dynamic_constraints(a, bounds_);
    for (std::size_t k = 0; k < values_.size(); ++k) lambda_[k] = next_multiplier(lambda_[k], sigma_, values_[k]);
    lambda_up_ = next_multiplier(lambda_up_, sigma_, -alm_.gamma * std::hypot(dyn.up.linear, dyn.up.angular));
    lambda_low_ = next_multiplier(lambda_low_, sigma_, -alm_.gamma * std::hypot(dyn.low.linear, dyn.low.angular));
    sigma_ = next_penalty(sigma_, alm_);
  }

  double sigma() const { return sigma_; }
  double max_lambda() const {
    double m = std::max(lambda_up_, lambda_low_);
    for (double l : lambda_) m = std::max(m, l);
    return m;
  }
  int evaluations() const { return evaluations_; }
  bool budget_exhausted() const { return alm_.max_evaluations > 0 && evaluations_ >= alm_.max_evaluations; }

 private:
  const CompiledConstraints& cons_;
  Action a_nom_;
  ActionBounds bounds_;
  AlmParams alm_;
  std::vector<double> values_;
  std::vector<double> lambda_;
  double lambda_up_;
  double lambda_low_;
  double sigma_;
  int evaluations_{0};
};

}  // namespace detail

/// Violation-based reward of the nominal action: -L_sigma0(a_nom, a_nom, lambda0).
/// Zero exactly when a_nom violates nothing, negative otherwise.
inline double cbf_reward(const CompiledConstraints& cons, Action a_nom, const ActionBounds& bounds, const AlmParams& alm) {
  detail::AlmObjective objective(cons, a_nom, bounds, alm);
  return -objective(a_nom).value;
}

inline double cbf_reward(const Observation& obs, Action a_nom, const Predictor& model, const CbfParams& cbf,
                         const AlmParams& alm) {
  return cbf_reward(CompiledConstraints(obs, model, cbf), a_nom, model.params.bounds, alm);
}

/// Minimally deviating action satisfying the barrier and box constraints.
/// Outer loop: inner minimisation of L_sigma, then multiplier/penalty update,
/// until the worst violation is within tol. Inner loop: projected descent on
/// the action box with central finite-difference gradients and backtracking;
/// the step direction is Newton's wherever the finite-difference curvature is
/// positive definite on the free coordinates, steepest descent otherwise. Each
/// inner solve starts from the lowest-L point among the current iterate, the
/// clamped nominal action and the braking action.
/// When the outer budget runs out first and braking at the best iterate's turn
/// rate is within tol, the result is the point nearest the iterate on the
/// segment toward braking that is within tol (bisection). Otherwise the
/// iterate with the smallest violation (then the smallest L) is returned.
inline RefineResult refine_action(const Observation& obs, Action a_nom, const Predictor& model, const CbfParams& cbf,
                                  const AlmParams& alm) {
  if (!std::isfinite(a_nom.linear) || !std::isfinite(a_nom.angular)) {
    throw ValidationError("refine_action: nominal action is not finite");
  }
  const ActionBounds& bounds = model.params.bounds;
  const CompiledConstraints cons(obs, model, cbf);
  detail::AlmObjective objective(cons, a_nom, bounds, alm);

  RefineResult result;
  result.r_c = -objective(a_nom).value;

  Action a = bounds.clamp(a_nom);
  auto current = objective(a);
  Action best = a;
  double best_violation = current.max_violation;
  double best_value = current.value;
  auto consider = [&](Action cand, const detail::AlmObjective::Eval& e) {
    if (e.max_violation < best_violation || (e.max_violation == best_violation && e.value < best_value)) {
      best = cand;
      best_violation = e.max_violation;
      best_value = e.value;
    }
  };

  if (current.max_violation <= alm.tol) {
    result.action = a;
    result.converged = true;
    result.max_violation = current.max_violation;
    result.evaluations = objective.evaluations();
    return result;
  }

  const double h = alm.fd_step;
  const Action a_start = a;
  for (int outer = 0; outer < alm.outer_iters && !objective.budget_exhausted(); ++outer) {
    current = objective(a);
    // L is not convex in the action, so each inner solve starts from the
    // lowest of the current iterate, the nominal action and braking.
    for (const Action anchor : {a_start, Action{bounds.min.linear, a.angular}}) {
      if (objective.budget_exhausted()) break;
      const auto e = objective(anchor);
      if (e.value < current.value) {
        a = anchor;
        current = e;
      }
    }
    double step = alm.inner_step;
    for (int inner = 0; inner < alm.inner_iters && !objective.budget_exhausted(); ++inner) {
      ++result.inner_iterations;
      const double f0 = current.value;
      const double flp = objective({a.linear + h, a.angular}).value;
      const double flm = objective({a.linear - h, a.angular}).value;
      const double fap = objective({a.linear, a.angular + h}).value;
      const double fam = objective({a.linear, a.angular - h}).value;
      const double fpp = objective({a.linear + h, a.angular + h}).value;
      const double gl = (flp - flm) / (2.0 * h);
      const double ga = (fap - fam) / (2.0 * h);
      if (gl == 0.0 && ga == 0.0) break;
      const double hll = (flp - 2.0 * f0 + flm) / (h * h);
      const double haa = (fap - 2.0 * f0 + fam) / (h * h);
      const double hla = (fpp - flp - fap + f0) / (h * h);

      // Coordinates pinned at a bound with the gradient pointing outward stay put.
      const bool free_l = !((a.linear <= bounds.min.linear && gl > 0.0) || (a.linear >= bounds.max.linear && gl < 0.0));
      const bool free_a =
          !((a.angular <= bounds.min.angular && ga > 0.0) || (a.angular >= bounds.max.angular && ga < 0.0));
      // Newton direction on the free coordinates when the curvature allows,
      // otherwise steepest descent.
      double dl = 0.0;
      double da = 0.0;
      bool newton = false;
      if (free_l && free_a) {
        const double det = hll * haa - hla * hla;
        if (hll > 0.0 && det > 1e-12 * std::max(1.0, hll * haa)) {
          dl = -(haa * gl - hla * ga) / det;
          da = -(hll * ga - hla * gl) / det;
          newton = true;
        }
      } else if (free_l && hll > 0.0) {
        dl = -gl / hll;
        newton = true;
      } else if (free_a && haa > 0.0) {
        da = -ga / haa;
        newton = true;
      }
      if (newton && dl * gl + da * ga >= 0.0) newton = false;
      double t = 1.0;
      if (!newton) {
        dl = free_l ? -gl : 0.0;
        da = free_a ? -ga : 0.0;
        t = std::min(2.0 * step, alm.inner_step);
      }
      if (dl == 0.0 && da == 0.0) break;

      bool accepted = false;
      Action next = a;
      detail::AlmObjective::Eval next_eval{};
      for (int halving = 0; halving < 40 && !objective.budget_exhausted(); ++halving, t *= 0.5) {
        next = bounds.clamp({a.linear + t * dl, a.angular + t * da});
        const double moved = (a.linear - next.linear) * gl + (a.angular - next.angular) * ga;
        if (moved <= 0.0) break;
        next_eval = objective(next);
        if (next_eval.value <= current.value - 1e-4 * moved) {
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
      if (!newton) step = t;
      const double shift = std::hypot(next.linear - a.linear, next.angular - a.angular);
      const double gain = current.value - next_eval.value;
      a = next;
      current = next_eval;
      if (shift < 1e-9 || gain <= 1e-12 * std::max(1.0, std::abs(current.value))) break;
    }
    current = objective(a);
    consider(a, current);
    ++result.iterations;
    result.trace.push_back({outer, objective.sigma(), objective.max_lambda(), current.value, current.max_violation, a});
    if (current.max_violation <= alm.tol) {
      result.action = a;
      result.converged = true;
      result.max_violation = current.max_violation;
      result.evaluations = objective.evaluations();
      return result;
    }
    objective.update(a);
  }

  // Restoration: when braking at the same turn rate meets the tolerance, walk
  // from the best iterate toward it and stop at the first point that does.
  const Action brake{bounds.min.linear, best.angular};
  const double brake_violation = objective(brake).max_violation;
  if (!(brake == best) && brake_violation <= alm.tol) {
    // aim for no violation at all when braking has none
    const double target = brake_violation == 0.0 ? 0.0 : alm.tol;
    double lo = 0.0;  // violating end
    double hi = 1.0;  // satisfying end
    auto at = [&](double t) {
      return Action{best.linear + t * (brake.linear - best.linear), best.angular + t * (brake.angular - best.angular)};
    };
    for (int k = 0; k < 40 && hi - lo > 1e-9; ++k) {
      const double mid = 0.5 * (lo + hi);
      (objective(at(mid)).max_violation <= target ? hi : lo) = mid;
    }
    result.action = at(hi);
    result.converged = true;
    result.restored = true;
    result.max_violation = objective(result.action).max_violation;
    result.evaluations = objective.evaluations();
    return result;
  }

  result.action = best;
  result.converged = false;
  result.max_violation = best_violation;
  result.evaluations = objective.evaluations();
  return result;
}

/// Contact guard applied after refinement. Occupied cells only locate the
/// surface to within half a cell diagonal, so once a cell centre is inside
/// r_min the robot may only translate if every stage of the horizon moves it
/// away from that whole neighbourhood. Otherwise it brakes and keeps the
/// turn rate; turning in place never moves a disc robot toward anything.
inline bool contact_guard_blocks(const Costmap& map, Action a, const WorldModelParams& model, const CbfParams& cbf) {
  const Action v = model.bounds.clamp(a);
  if (v.linear <= 0.0) return false;
  const double rho = map.cell_size() * std::sqrt(0.5);
  std::vector<Vec2> close;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (!map[i]) continue;
    const Vec2 c = map.cell_center(i);
    if (c.norm() < cbf.r_min) close.push_back(c);
  }
  if (close.empty()) return false;
  for (const auto& st : ego_motion_stages(v, cbf.delta_t, model.sim_dt)) {
    const Vec2 m{st.dx, st.dy};
    const double len = m.norm();
    if (len == 0.0) continue;
    for (const Vec2& c : close) {
      if (m.dot(c) > -rho * len) return true;
    }
  }
  return false;
}

inline Action contact_guard(const Costmap& map, Action a, const WorldModelParams& model, const CbfParams& cbf) {
  if (!contact_guard_blocks(map, a, model, cbf)) return a;
  return {model.bounds.min.linear, model.bounds.clamp(a).angular};
}

}  // namespace safenav
