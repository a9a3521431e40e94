#pragma once

// Pixel-wise costmap barrier function, its look-ahead derivative condition and
// the action-box constraints.

#include <filesystem>
#include <span>
#include <vector>

#include "safenav/common.hpp"
#include "safenav/observation.hpp"

namespace safenav {

struct CbfParams {
  double r_min{0.35};    // minimum safe distance, m
  double r_max{2.0};     // maximum considered distance, m
  double delta_t{0.5};   // look-ahead horizon, s
  double alpha{0.5};     // linear class-K gain per horizon
  double epsilon{0.01};  // relaxation

  bool operator==(const CbfParams&) const = default;

  void validate() const {
    if (!(r_min > 0.0 && r_min < r_max)) throw ValidationError("cbf: need 0 < r_min < r_max");
    if (!(delta_t > 0.0)) throw ValidationError("cbf: delta_t must be > 0");
    if (!(alpha > 0.0)) throw ValidationError("cbf: alpha must be > 0");
    if (!(epsilon >= 0.0)) throw ValidationError("cbf: epsilon must be >= 0");
  }
};

/// Barrier value of an obstacle cell at robot-frame displacement `d` for a
/// robot moving forward at `linear` m/s:
///   h = r - v_proj * delta_t - r_min,   r = |d|,   v_proj = (linear, 0) . d / r
/// capped at r_max. Cells farther than r_max are out of consideration and read r_max.
inline double barrier_value(Vec2 d, double linear, const CbfParams& p) {
  const double r = d.norm();
  if (r > p.r_max) return p.r_max;
  const double v_proj = r > 0.0 ? linear * d.x / r : 0.0;
  return std::min(r - v_proj * p.delta_t - p.r_min, p.r_max);
}

/// Per-cell barrier values plus the mask of cells under consideration
/// (occupied and within r_max). Unconsidered cells hold exactly r_max.
struct CbfField {
  int height{0};
  int width{0};
  std::vector<double> h;
  std::vector<std::uint8_t> occupied;

  bool operator==(const CbfField&) const = default;

  static CbfField empty(int height, int width, double r_max) {
    CbfField f;
    f.height = height;
    f.width = width;
    f.h.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), r_max);
    f.occupied.assign(f.h.size(), 0);
    return f;
  }

  /// Smallest h over considered cells, or `fallback` when none.
  double min_h(double fallback) const {
    double m = fallback;
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (occupied[i]) m = std::min(m, h[i]);
    }
    return m;
  }
};

inline CbfField evaluate_h(const Costmap& map, Action velocity, const CbfParams& params) {
  CbfField f = CbfField::empty(map.height(), map.width(), params.r_max);
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (!map[i]) continue;
    const Vec2 d = map.cell_center(i);
    if (d.norm() > params.r_max) continue;
    f.h[i] = barrier_value(d, velocity.linear, params);
    f.occupied[i] = 1;
  }
  return f;
}

struct ConstraintEval {
  int height{0};
  int width{0};
  std::vector<double> c_cbf;  // min{dh + alpha h + eps, 0} per cell
  Action c_dyn_up;            // min{a_max - a, 0} per component
  Action c_dyn_low;           // min{a - a_min, 0} per component
  double gamma{1.0};

  double dyn_up_norm() const { return std::hypot(c_dyn_up.linear, c_dyn_up.angular); }
  double dyn_low_norm() const { return std::hypot(c_dyn_low.linear, c_dyn_low.angular); }

  /// Largest constraint violation magnitude (0 when everything is satisfied).
  double max_violation() const {
    double m = 0.0;
    for (double c : c_cbf) m = std::max(m, -c);
    for (double c : {c_dyn_up.linear, c_dyn_up.angular, c_dyn_low.linear, c_dyn_low.angular}) m = std::max(m, -c);
    return m;
  }
};

/// Per-cell derivative condition against a prediction already aligned back to
/// the current frame. Cells considered in neither field contribute 0.
inline ConstraintEval derivative_condition(const CbfField& current, const CbfField& predicted_aligned,
                                           const CbfParams& params) {
  if (current.height != predicted_aligned.height || current.width != predicted_aligned.width ||
      current.h.size() != predicted_aligned.h.size()) {
    throw ValidationError("derivative_condition: field shapes differ");
  }
  ConstraintEval eval;
  eval.height = current.height;
  eval.width = current.width;
  eval.c_cbf.assign(current.h.size(), 0.0);
  for (std::size_t i = 0; i < current.h.size(); ++i) {
    if (!current.occupied[i] && !predicted_aligned.occupied[i]) continue;
    const double dh = predicted_aligned.h[i] - current.h[i];
    eval.c_cbf[i] = std::min(dh + params.alpha * current.h[i] + params.epsilon, 0.0);
  }
  return eval;
}

struct DynamicConstraints {
  Action up;
  Action low;
};

inline DynamicConstraints dynamic_constraints(Action a, const ActionBounds& bounds) {
  return {{std::min(bounds.max.linear - a.linear, 0.0), std::min(bounds.max.angular - a.angular, 0.0)},
          {std::min(a.linear - bounds.min.linear, 0.0), std::min(a.angular - bounds.min.angular, 0.0)}};
}

inline void set_dynamic_constraints(ConstraintEval& eval, Action a, const ActionBounds& bounds, double gamma) {
  const auto d = dynamic_constraints(a, bounds);
  eval.c_dyn_up = d.up;
  eval.c_dyn_low = d.low;
  eval.gamma = gamma;
}

/// Debug image of a barrier field: brighter means more dangerous (lower h),
/// normalised over [min h, r_max].
inline void write_cbf_pgm(const std::filesystem::path& path, const CbfField& field, double r_max) {
  const double lo = std::min(field.min_h(r_max), r_max);
  const double span = r_max - lo;
  std::vector<std::uint8_t> gray(field.h.size(), 0);
  if (span > 0.0) {
    for (std::size_t i = 0; i < gray.size(); ++i) {
      const double t = std::clamp((r_max - field.h[i]) / span, 0.0, 1.0);
      gray[i] = static_cast<std::uint8_t>(std::lround(255.0 * t));
    }
  }
  write_pgm(path, field.height, field.width, gray);
}

}  // namespace safenav
