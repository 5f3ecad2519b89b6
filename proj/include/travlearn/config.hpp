#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "travlearn/inference.hpp"
#include "travlearn/learner.hpp"
#include "travlearn/navmap.hpp"
#include "travlearn/perception.hpp"
#include "travlearn/supervision.hpp"
#include "travlearn/worldsim.hpp"

namespace travlearn {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SessionMode { teleop, autonomous, replay };
std::string to_string(SessionMode m);
SessionMode parse_session_mode(const std::string& s);

struct CameraConfig {
  CameraModel model;
  int weight = 1;
  CameraRole role = CameraRole::train_and_infer;
};

struct GraphConfig {
  std::size_t supervision_capacity = 40;
  double supervision_spacing = 0.1;
  double mission_spacing = 0.5;
  double reprojection_range = 10.0;
  bool keep_dense_features = false;
};

struct SimConfig {
  double dt = 0.05;
  double velocity_noise_std = 0.02;
  bool footprint_traction = false;
  TwistLimits limits{1.0, 1.5};
  Pose2 start;
  Vec2 half_extents{0.35, 0.2};
};

struct LearningConfig {
  ModelShape model;
  LossWeights loss;
  AdamParams adam;
  /// Simulation ticks between train steps on the virtual clock.
  int train_every_ticks = 1;
  /// Train steps between snapshot publications.
  int snapshot_every_steps = 50;
};

struct MapConfig {
  double size = 10.0;
  double resolution = 0.1;
  double alpha = 0.3;
  SdfParams sdf;
  /// Mark unseen cells under the robot body as traversable.
  bool footprint_prior = true;
  /// Ticks between map fusion / SDF refreshes.
  int update_every_ticks = 1;
};

struct SessionConfig {
  std::filesystem::path world;
  /// Overrides every terrain's feature noise when >= 0.
  double feature_noise = -1.0;
  std::uint64_t seed = 0;
  SessionMode mode = SessionMode::teleop;
  double duration = 60.0;

  std::vector<CameraConfig> cameras;
  std::string extractor = "synthetic";
  SyntheticExtractorParams synthetic;
  PerceptionParams perception;
  /// Ticks between camera frames.
  int perception_every_ticks = 5;
  InferenceMode inference_mode = InferenceMode::segment;
  std::size_t frame_queue_capacity = 8;

  ScoreParams score;
  GraphConfig graph;
  LearningConfig learning;
  MapConfig map;
  PlannerParams planner;
  SimConfig sim;

  /// Checks value ranges; throws ConfigError.
  void validate() const;
};

/// Strict parse: every object level rejects keys it does not know. Missing keys
/// keep their defaults. Relative world paths resolve against `base_dir`.
SessionConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
SessionConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const SessionConfig& cfg);

/// Loads the world named by the config and applies the noise override.
TerrainWorld load_session_world(const SessionConfig& cfg);

}  // namespace travlearn
