#pragma once

// Egocentric costmaps, ego-motion alignment and the stacked observation.
//
// Frame convention used everywhere: the robot frame has x forward and y to the
// left. Costmaps are heading-up: row index grows forward ("up"), column index
// grows to the robot's right, and the robot sits at the centre of cell
// (height/2, width/2).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <vector>

#include "safenav/common.hpp"
#include "safenav/sim_world.hpp"

namespace safenav {

struct CostmapParams {
  int height{48};
  int width{48};
  double cell_size{0.1};

  bool operator==(const CostmapParams&) const = default;
  void validate() const {
    if (height < 2 || width < 2 || !(cell_size > 0.0)) throw ValidationError("costmap: need height, width >= 2 and cell_size > 0");
  }
};

/// Binary H x W occupancy grid (1 = obstacle).
class Costmap {
 public:
  Costmap() : Costmap(CostmapParams{}) {}
  explicit Costmap(CostmapParams p)
      : params_(p), cells_(static_cast<std::size_t>(p.height) * static_cast<std::size_t>(p.width), 0) {}

  bool operator==(const Costmap&) const = default;

  const CostmapParams& params() const { return params_; }
  int height() const { return params_.height; }
  int width() const { return params_.width; }
  double cell_size() const { return params_.cell_size; }
  int center_row() const { return params_.height / 2; }
  int center_col() const { return params_.width / 2; }
  std::size_t size() const { return cells_.size(); }

  std::uint8_t at(int row, int col) const { return cells_[index(row, col)]; }
  void set(int row, int col, std::uint8_t v) { cells_[index(row, col)] = v ? 1 : 0; }
  std::uint8_t operator[](std::size_t i) const { return cells_[i]; }
  std::span<const std::uint8_t> cells() const { return cells_; }
  std::span<std::uint8_t> cells() { return cells_; }

  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(params_.width) + static_cast<std::size_t>(col);
  }
  bool in_grid(int row, int col) const { return row >= 0 && row < params_.height && col >= 0 && col < params_.width; }

  /// Robot-frame position (forward, left) of a cell centre.
  Vec2 cell_center(int row, int col) const {
    return {(row - center_row()) * params_.cell_size, -(col - center_col()) * params_.cell_size};
  }
  Vec2 cell_center(std::size_t i) const {
    return cell_center(static_cast<int>(i / static_cast<std::size_t>(params_.width)),
                       static_cast<int>(i % static_cast<std::size_t>(params_.width)));
  }

  /// Continuous grid coordinates (row, col) of a robot-frame point.
  Vec2 grid_coords(Vec2 p) const {
    return {center_row() + p.x / params_.cell_size, center_col() - p.y / params_.cell_size};
  }

  /// Cell containing a robot-frame point, if it lies on the grid.
  std::optional<std::size_t> cell_of(Vec2 p) const {
    const Vec2 g = grid_coords(p);
    const int row = static_cast<int>(std::floor(g.x + 0.5));
    const int col = static_cast<int>(std::floor(g.y + 0.5));
    if (!in_grid(row, col)) return std::nullopt;
    return index(row, col);
  }

  /// Bilinear sample at continuous grid coordinates; off-grid reads as 0.
  double sample(double row, double col) const {
    const int r0 = static_cast<int>(std::floor(row));
    const int c0 = static_cast<int>(std::floor(col));
    const double fr = row - r0;
    const double fc = col - c0;
    auto v = [&](int r, int c) -> double { return in_grid(r, c) ? cells_[index(r, c)] : 0.0; };
    return (1.0 - fr) * ((1.0 - fc) * v(r0, c0) + fc * v(r0, c0 + 1)) + fr * ((1.0 - fc) * v(r0 + 1, c0) + fc * v(r0 + 1, c0 + 1));
  }

  std::size_t occupied_count() const {
    return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
  }

 private:
  CostmapParams params_;
  std::vector<std::uint8_t> cells_;
};

/// Displacement of the robot frame between two instants, expressed in the
/// earlier frame.
struct EgoMotion {
  double dx{0.0};
  double dy{0.0};
  double dtheta{0.0};

  bool operator==(const EgoMotion&) const = default;

  /// Point expressed in the earlier frame -> same point in the later frame.
  Vec2 to_later(Vec2 p) const { return rotate(Vec2{p.x - dx, p.y - dy}, -dtheta); }
  /// Point expressed in the later frame -> same point in the earlier frame.
  Vec2 to_earlier(Vec2 q) const {
    const Vec2 r = rotate(q, dtheta);
    return {r.x + dx, r.y + dy};
  }
};

/// `first` followed by `second` (the latter expressed in the frame reached by `first`).
inline EgoMotion compose(const EgoMotion& first, const EgoMotion& second) {
  const Vec2 d = rotate(Vec2{second.dx, second.dy}, first.dtheta);
  return {first.dx + d.x, first.dy + d.y, wrap_angle(first.dtheta + second.dtheta)};
}

inline EgoMotion ego_motion_between(const Pose2D& from, const Pose2D& to) {
  const Vec2 d = rotate(to.position() - from.position(), -from.theta);
  return {d.x, d.y, wrap_angle(to.theta - from.theta)};
}

enum class WarpMode { forward, inverse };

/// Re-expresses `map` in the frame displaced by `motion` (forward, T) or
/// undoes that displacement (inverse, T^-1). Bilinear sampling, then
/// re-binarisation at 0.5; samples falling off the source grid read as empty.
inline Costmap affine_transform(const Costmap& map, const EgoMotion& motion, WarpMode mode) {
  if (motion == EgoMotion{}) return map;
  Costmap out(map.params());
  const double c = std::cos(motion.dtheta);
  const double s = std::sin(motion.dtheta);
  for (int row = 0; row < map.height(); ++row) {
    for (int col = 0; col < map.width(); ++col) {
      const Vec2 q = map.cell_center(row, col);
      Vec2 p;
      if (mode == WarpMode::forward) {
        p = {c * q.x - s * q.y + motion.dx, s * q.x + c * q.y + motion.dy};
      } else {
        const double x = q.x - motion.dx;
        const double y = q.y - motion.dy;
        p = {c * x + s * y, -s * x + c * y};
      }
      const Vec2 g = map.grid_coords(p);
      if (map.sample(g.x, g.y) >= 0.5) out.set(row, col, 1);
    }
  }
  return out;
}

/// Endpoint occupancy: each return short of max_range marks the cell holding
/// the hit point. No free-space carving.
inline Costmap scan_to_costmap(const LidarScan& scan, const CostmapParams& params, int expected_beams = -1) {
  if (expected_beams >= 0 && static_cast<int>(scan.ranges.size()) != expected_beams) {
    throw ValidationError("scan_to_costmap: expected " + std::to_string(expected_beams) + " beams, got " +
                          std::to_string(scan.ranges.size()));
  }
  Costmap map(params);
  for (std::size_t i = 0; i < scan.ranges.size(); ++i) {
    const double r = scan.ranges[i];
    if (!(r < scan.max_range)) continue;
    const double a = scan.angle(i);
    if (auto cell = map.cell_of({r * std::cos(a), r * std::sin(a)})) map.cells()[*cell] = 1;
  }
  return map;
}

/// K costmaps aligned to the current robot frame (oldest first, newest last),
/// the goal in the robot frame and the robot's own velocity.
struct Observation {
  std::vector<Costmap> frames;
  Vec2 goal_rel;
  Action velocity;

  bool operator==(const Observation&) const = default;
  const Costmap& newest() const { return frames.back(); }
};

inline Vec2 goal_in_robot_frame(const RobotState& robot) {
  return rotate(robot.goal - robot.pose.position(), -robot.pose.theta);
}

/// `frames` are raw (unaligned) costmaps, oldest first; `motions[k]` is the
/// ego-motion from frames[k] to frames[k+1]. Only the last `stack` frames are
/// used; a short history is padded by repeating its oldest frame.
inline Observation build_observation(std::span<const Costmap> frames, std::span<const EgoMotion> motions,
                                     const RobotState& robot, int stack = 3) {
  if (frames.empty()) throw ValidationError("build_observation: history is empty");
  if (motions.size() + 1 != frames.size()) {
    throw ValidationError("build_observation: " + std::to_string(frames.size()) + " frames need " +
                          std::to_string(frames.size() - 1) + " ego-motions, got " + std::to_string(motions.size()));
  }
  if (stack < 1) throw ValidationError("build_observation: stack must be >= 1");
  const CostmapParams& p = frames.back().params();
  for (const auto& f : frames) {
    if (f.params() != p) throw ValidationError("build_observation: frames differ in geometry");
  }

  const std::size_t n = frames.size();
  const std::size_t used = std::min<std::size_t>(n, static_cast<std::size_t>(stack));
  Observation obs;
  obs.frames.reserve(static_cast<std::size_t>(stack));
  // Motion from frame k to the newest frame, accumulated backwards.
  std::vector<Costmap> aligned(used);
  aligned[used - 1] = frames[n - 1];
  EgoMotion to_now{};
  for (std::size_t k = 1; k < used; ++k) {
    const std::size_t src = n - 1 - k;
    to_now = compose(motions[src], to_now);
    aligned[used - 1 - k] = affine_transform(frames[src], to_now, WarpMode::forward);
  }
  for (std::size_t k = used; k < static_cast<std::size_t>(stack); ++k) obs.frames.push_back(aligned.front());
  for (auto& f : aligned) obs.frames.push_back(std::move(f));
  obs.goal_rel = goal_in_robot_frame(robot);
  obs.velocity = robot.velocity;
  return obs;
}

inline Observation build_observation(std::span<const LidarScan> scans, std::span<const EgoMotion> motions,
                                     const RobotState& robot, const CostmapParams& params, int stack = 3) {
  std::vector<Costmap> frames;
  frames.reserve(scans.size());
  for (const auto& s : scans) frames.push_back(scan_to_costmap(s, params));
  return build_observation(frames, motions, robot, stack);
}

/// Occupied-cell intersection over union; two empty maps count as identical.
/// With `border` > 0, cells within that many cells of the edge are ignored.
inline double occupancy_iou(const Costmap& a, const Costmap& b, int border = 0) {
  if (a.params() != b.params()) throw ValidationError("occupancy_iou: geometry mismatch");
  std::size_t inter = 0, uni = 0;
  for (int r = border; r < a.height() - border; ++r) {
    for (int c = border; c < a.width() - border; ++c) {
      const bool x = a.at(r, c) != 0;
      const bool y = b.at(r, c) != 0;
      inter += (x && y) ? 1 : 0;
      uni += (x || y) ? 1 : 0;
    }
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Binary PGM (P5), one byte per cell, forward pointing up the image.
inline void write_pgm(const std::filesystem::path& path, int height, int width, std::span<const std::uint8_t> gray) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (int row = height - 1; row >= 0; --row) {
    out.write(reinterpret_cast<const char*>(gray.data() + static_cast<std::size_t>(row) * static_cast<std::size_t>(width)),
              width);
  }
}

inline void write_pgm(const std::filesystem::path& path, const Costmap& map) {
  std::vector<std::uint8_t> gray(map.size());
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = map[i] ? 255 : 0;
  write_pgm(path, map.height(), map.width(), gray);
}

}  // namespace safenav
