#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "travlearn/geometry.hpp"

namespace travlearn {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool operator==(const Rgb&) const = default;
};

struct TerrainDef {
  std::string name;
  char symbol = '.';
  double traction = 1.0;
  std::vector<float> feature_prototype;
  double feature_noise_std = 0.0;
  Rgb color;
};

using TerrainId = std::int16_t;
inline constexpr TerrainId kNoTerrain = -1;

class WorldError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat raster world. Cell (i, j) covers x in [i, i+1) * cell_size and
/// y in [j, j+1) * cell_size; the world origin is the lower-left corner.
class TerrainWorld {
 public:
  TerrainWorld(double cell_size, int width, int height, std::vector<TerrainDef> defs,
               std::vector<TerrainId> cells);

  double cell_size() const { return cell_size_; }
  int width() const { return width_; }
  int height() const { return height_; }
  double extent_x() const { return width_ * cell_size_; }
  double extent_y() const { return height_ * cell_size_; }
  const std::vector<TerrainDef>& terrain_defs() const { return defs_; }
  const TerrainDef& def(TerrainId id) const { return defs_.at(static_cast<std::size_t>(id)); }
  std::size_t embedding_dim() const;

  bool in_bounds(Vec2 p) const;
  TerrainId cell(int i, int j) const { return cells_[static_cast<std::size_t>(j) * width_ + i]; }
  void set_cell(int i, int j, TerrainId id);
  /// Terrain under a world point, or kNoTerrain outside the world.
  TerrainId terrain_at(Vec2 p) const;
  double traction_at(Vec2 p) const;

 private:
  double cell_size_;
  int width_;
  int height_;
  std::vector<TerrainDef> defs_;
  std::vector<TerrainId> cells_;
};

/// Parses the world text format: one line of JSON header followed by
/// `height` rows of `width` terrain symbols, first row = northernmost (max y).
/// Terrains without an explicit feature prototype get sqrt(2) * e_index.
TerrainWorld parse_world(const std::string& text, std::size_t embedding_dim);
TerrainWorld load_world(const std::filesystem::path& path, std::size_t embedding_dim);
std::string format_world(const TerrainWorld& world);

/// Returns a copy with every terrain's feature noise replaced.
TerrainWorld with_feature_noise(TerrainWorld world, double noise_std);

struct RobotState {
  Pose2 pose;
  Vec2 measured_velocity;
  Vec2 footprint_half_extents{0.35, 0.2};
};

struct TwistLimits {
  double max_linear = 1.0;
  double max_angular = 1.5;
};

struct TwistCommand {
  double vx = 0.0;
  double vy = 0.0;
  double wz = 0.0;

  bool operator==(const TwistCommand&) const = default;
  bool finite() const { return std::isfinite(vx) && std::isfinite(vy) && std::isfinite(wz); }
  TwistCommand clamped(const TwistLimits& limits) const;
};

struct StepOptions {
  double velocity_noise_std = 0.02;
  /// Average traction over the footprint instead of the centroid cell.
  bool footprint_traction = false;
};

RobotState step_robot(const TerrainWorld& world, const RobotState& state, const TwistCommand& cmd,
                      double dt, const StepOptions& opts, std::mt19937_64* noise_rng);

/// Oriented body rectangle, counter-clockwise, starting rear-right.
Polygon footprint_polygon(const RobotState& state);

struct CameraModel {
  std::string camera_id = "front";
  Pose2 mount;
  double near_width = 1.2;
  double far_width = 5.0;
  double near_range = 0.4;
  double far_range = 4.0;
  int height = 64;
  int width = 64;

  void validate() const;
  /// Ground point of the pixel centre, in the camera frame (x forward, y left).
  Vec2 pixel_to_camera(int row, int col) const;
  /// Continuous pixel coordinates (row, col) of a camera-frame ground point.
  Vec2 camera_to_pixel(Vec2 p) const;
  /// Ground window corners in world frame, counter-clockwise.
  Polygon window_in_world(const Pose2& robot_pose) const;
};

struct Observation {
  std::string camera_id;
  double timestamp = 0.0;
  Pose2 robot_pose;
  int height = 0;
  int width = 0;
  std::vector<Rgb> color;
  std::vector<TerrainId> gt_terrain;
  std::vector<Vec2> pixel_to_world;

  std::size_t index(int row, int col) const { return static_cast<std::size_t>(row) * width + col; }
  bool valid(std::size_t i) const { return gt_terrain[i] != kNoTerrain; }
};

Observation render_camera(const TerrainWorld& world, const RobotState& state, const CameraModel& cam,
                          double timestamp = 0.0);

/// Pixel-to-world mapping alone, without sampling the world.
std::vector<Vec2> camera_pixel_to_world(const CameraModel& cam, const Pose2& robot_pose);

}  // namespace travlearn
