#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "travlearn/geometry.hpp"
#include "travlearn/inference.hpp"
#include "travlearn/worldsim.hpp"

namespace travlearn {

/// Robot-centric square grid of fused traversability. Cell (i, j) spans world
/// x in [(origin_i + i) * res, (origin_i + i + 1) * res), likewise for y, so
/// recentring moves cells by whole-cell offsets.
class TravGrid {
 public:
  TravGrid(double size_m, double resolution, Vec2 center = {});

  int cells() const { return n_; }
  double resolution() const { return res_; }
  Vec2 origin() const { return {static_cast<double>(origin_i_) * res_, static_cast<double>(origin_j_) * res_}; }
  std::int64_t origin_i() const { return origin_i_; }
  std::int64_t origin_j() const { return origin_j_; }

  std::optional<std::pair<int, int>> cell_of(Vec2 world) const;
  Vec2 cell_center(int i, int j) const;
  bool in_range(int i, int j) const { return i >= 0 && j >= 0 && i < n_ && j < n_; }

  bool known(int i, int j) const { return known_[idx(i, j)] != 0; }
  float value(int i, int j) const { return value_[idx(i, j)]; }
  std::uint32_t updates(int i, int j) const { return updates_[idx(i, j)]; }
  void set(int i, int j, float v);
  void clear(int i, int j);
  /// Marks still-unknown cells inside the polygon as `value` (the robot's own
  /// footprint is free space even before the camera has seen it).
  int fill_unknown(std::span<const Vec2> ccw_poly, float value);

  /// Shifts the window by whole cells so that `center` falls in the middle cell.
  void recenter(Vec2 center);

 private:
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(j) * n_ + i; }
  int n_;
  double res_;
  std::int64_t origin_i_ = 0;
  std::int64_t origin_j_ = 0;
  std::vector<float> value_;
  std::vector<std::uint8_t> known_;
  std::vector<std::uint32_t> updates_;

  friend void fuse_traversability(TravGrid&, const TraversabilityImage&, std::span<const Vec2>, double);
};

/// Exponential averaging of a traversability image into the grid. Pixels landing
/// in the same cell are averaged first; unknown cells take the new value.
void fuse_traversability(TravGrid& grid, const TraversabilityImage& image, std::span<const Vec2> pixel_to_world,
                         double alpha);

struct SdfParams {
  /// Distance reported when no obstacle is present (and the clamp for all cells), meters.
  double cap = 3.0;
  bool unknown_is_obstacle = true;
};

/// Unsigned distance to the nearest obstacle cell centre: 0 on obstacles,
/// positive in free space, clamped to `cap`.
struct SdfGrid {
  int cells = 0;
  double resolution = 0.1;
  Vec2 origin;
  std::vector<double> distance;
  bool all_obstacle = false;

  double at(int i, int j) const { return distance[static_cast<std::size_t>(j) * cells + i]; }
  /// Bilinear interpolation between cell centres, clamped to the grid edge.
  double sample(Vec2 world) const;
  /// Central-difference gradient of `sample`, world frame.
  Vec2 gradient(Vec2 world) const;
};

/// Exact squared Euclidean distance transform (in cells) of a binary obstacle
/// raster, by the separable lower-envelope method. Rows are y. Cells with no
/// obstacle anywhere get +inf.
std::vector<double> squared_distance_transform(std::span<const std::uint8_t> obstacle, int nx, int ny);

SdfGrid compute_sdf(const TravGrid& grid, double tau_thr, const SdfParams& params = {});

struct PlannerParams {
  double goal_tolerance = 0.3;
  TwistLimits limits{0.8, 1.2};
  double influence_distance = 0.8;
  double robot_radius = 0.25;
  double k_attract = 1.0;
  double k_repulse = 0.35;
  double k_tangent = 0.8;
  double k_heading = 2.0;
  double heading_deadband = 0.02;
  double slowdown_distance = 1.0;
  double escape_speed = 0.2;
};

struct PlanResult {
  TwistCommand twist;
  bool at_goal = false;
  /// Robot centre is inside an obstacle; the twist moves along the SDF gradient.
  bool escaping = false;
};

/// Which way the planner is sliding around an obstacle. Without it the side is
/// re-picked every call and flips when the goal sits straight behind the
/// obstacle, leaving the robot turning on the spot.
struct PlannerMemory {
  std::optional<Vec2> goal;
  int tangent_sign = 0;
};

/// `memory` may be null for a stateless plan.
PlanResult plan_twist(const SdfGrid& sdf, Vec2 goal, const RobotState& state, const PlannerParams& params,
                      PlannerMemory* memory = nullptr);

/// Farthest cell inside the camera window whose fused score and straight-line
/// corridor from the robot are all at least `tau_thr`.
std::optional<Vec2> spawn_carrot(const TravGrid& grid, const RobotState& state, const CameraModel& camera,
                                 double tau_thr);

/// Binary PGM (P5) of values in [lo, hi] plus a JSON geometry sidecar next to it.
void dump_grid_image(const std::filesystem::path& pgm_path, std::span<const double> values, int cells, double resolution,
                     Vec2 origin, double lo, double hi);
void dump_trav_grid(const std::filesystem::path& pgm_path, const TravGrid& grid);
void dump_sdf(const std::filesystem::path& pgm_path, const SdfGrid& sdf);

}  // namespace travlearn
