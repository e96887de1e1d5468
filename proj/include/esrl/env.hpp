#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "esrl/common.hpp"
#include "esrl/rng.hpp"

namespace esrl {

struct Segment {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

namespace geom {

inline double cross(double ox, double oy, double ax, double ay, double bx, double by) {
  return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox);
}

inline bool on_segment(double px, double py, double qx, double qy, double rx, double ry) {
  return std::min(px, qx) <= rx && rx <= std::max(px, qx) && std::min(py, qy) <= ry &&
         ry <= std::max(py, qy);
}

// Proper and touching intersections both count: landing exactly on a wall is
// treated as a collision.
inline bool segments_intersect(double ax1, double ay1, double ax2, double ay2, double bx1,
                               double by1, double bx2, double by2) {
  const double d1 = cross(bx1, by1, bx2, by2, ax1, ay1);
  const double d2 = cross(bx1, by1, bx2, by2, ax2, ay2);
  const double d3 = cross(ax1, ay1, ax2, ay2, bx1, by1);
  const double d4 = cross(ax1, ay1, ax2, ay2, bx2, by2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
      ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  if (d1 == 0 && on_segment(bx1, by1, bx2, by2, ax1, ay1)) return true;
  if (d2 == 0 && on_segment(bx1, by1, bx2, by2, ax2, ay2)) return true;
  if (d3 == 0 && on_segment(ax1, ay1, ax2, ay2, bx1, by1)) return true;
  if (d4 == 0 && on_segment(ax1, ay1, ax2, ay2, bx2, by2)) return true;
  return false;
}

}  // namespace geom

enum class EnvKind { DeceptiveMaze, OpenField };

// 2-D arena with axis-aligned walls. Observations are (x, y, goal_x - x,
// goal_y - y) scaled into [-1, 1] by the arena size; the behavior
// characteristic is the raw final position in arena units.
struct EnvSpec {
  EnvKind kind = EnvKind::DeceptiveMaze;
  std::string id = "deceptive-maze";
  double arena_w = 10.0, arena_h = 10.0;
  std::vector<Segment> walls;  // interior walls; the border always blocks
  double start_x = 1.0, start_y = 5.0;
  double goal_x = 9.0, goal_y = 5.0;
  int max_steps = 200;
  double step_scale = 0.5;
  double reward_scale = 1000.0;  // applied to logged returns only
  double goal_radius = 0.5;
  double start_jitter = 0.05;

  static constexpr int kObsDim = 4;
  static constexpr int kActDim = 2;

  void validate() const {
    if (max_steps < 1) throw ValidationError("max_steps must be >= 1");
    if (arena_w <= 0 || arena_h <= 0) throw ValidationError("arena must have positive size");
    if (step_scale <= 0) throw ValidationError("step_scale must be positive");
    if (reward_scale <= 0) throw ValidationError("reward_scale must be positive");
    auto inside = [this](double x, double y) {
      return x > 0 && x < arena_w && y > 0 && y < arena_h;
    };
    if (!inside(start_x, start_y) || !inside(goal_x, goal_y))
      throw ValidationError("start and goal must lie inside the arena");
    for (const auto& w : walls) {
      if (geom::on_segment(w.x1, w.y1, w.x2, w.y2, start_x, start_y))
        throw ValidationError("start lies on a wall");
      if (geom::on_segment(w.x1, w.y1, w.x2, w.y2, goal_x, goal_y))
        throw ValidationError("goal lies on a wall");
    }
  }

  static EnvSpec by_id(std::string_view id) {
    EnvSpec spec;
    if (id == "deceptive-maze") {
      spec.kind = EnvKind::DeceptiveMaze;
      spec.id = "deceptive-maze";
      spec.walls = {{5.0, 2.0, 5.0, 10.0}};  // gap only at y in [0, 2]
    } else if (id == "open-field") {
      spec.kind = EnvKind::OpenField;
      spec.id = "open-field";
    } else {
      throw ValidationError("unknown env id: '" + std::string(id) + "'");
    }
    spec.validate();
    return spec;
  }
};

struct EnvState {
  double x = 0, y = 0;
  double ep_start_x = 0, ep_start_y = 0;
  double dist_to_goal = 0;
  int steps = 0;
  bool done = false;
};

inline void env_observe(const EnvSpec& spec, const EnvState& st, std::span<double> obs) {
  obs[0] = 2.0 * st.x / spec.arena_w - 1.0;
  obs[1] = 2.0 * st.y / spec.arena_h - 1.0;
  obs[2] = (spec.goal_x - st.x) / spec.arena_w;
  obs[3] = (spec.goal_y - st.y) / spec.arena_h;
}

inline EnvState env_reset(const EnvSpec& spec, std::uint64_t seed, std::span<double> obs) {
  CounterRng rng(mix_key({seed, seed_tag::env_reset}));
  EnvState st;
  st.x = spec.start_x + rng.next_uniform(-spec.start_jitter, spec.start_jitter);
  st.y = spec.start_y + rng.next_uniform(-spec.start_jitter, spec.start_jitter);
  st.ep_start_x = st.x;
  st.ep_start_y = st.y;
  st.dist_to_goal = std::hypot(spec.goal_x - st.x, spec.goal_y - st.y);
  env_observe(spec, st, obs);
  return st;
}

inline bool env_move_blocked(const EnvSpec& spec, double x0, double y0, double x1,
                             double y1) {
  // border acts as four walls
  if (x1 <= 0 || x1 >= spec.arena_w || y1 <= 0 || y1 >= spec.arena_h) return true;
  for (const auto& w : spec.walls)
    if (geom::segments_intersect(x0, y0, x1, y1, w.x1, w.y1, w.x2, w.y2)) return true;
  return false;
}

// Progress-shaped reward: previous distance to goal minus new distance,
// in raw arena units (callers divide by reward_scale for logging).
inline double env_step(const EnvSpec& spec, EnvState& st, std::span<const double> action,
                       std::span<double> obs) {
  if (st.done) throw StructuralError("step on finished episode");
  if (action.size() != static_cast<std::size_t>(EnvSpec::kActDim))
    throw StructuralError("action dim mismatch");
  require_finite(action, "action");
  const double ax = std::clamp(action[0], -1.0, 1.0);
  const double ay = std::clamp(action[1], -1.0, 1.0);
  const double nx = st.x + spec.step_scale * ax;
  const double ny = st.y + spec.step_scale * ay;
  const double prev_dist = st.dist_to_goal;
  if (!env_move_blocked(spec, st.x, st.y, nx, ny)) {
    st.x = nx;
    st.y = ny;
    st.dist_to_goal = std::hypot(spec.goal_x - st.x, spec.goal_y - st.y);
  }
  st.steps += 1;
  const double reward = prev_dist - st.dist_to_goal;
  if (st.dist_to_goal <= spec.goal_radius || st.steps >= spec.max_steps) st.done = true;
  env_observe(spec, st, obs);
  return reward;
}

}  // namespace esrl
