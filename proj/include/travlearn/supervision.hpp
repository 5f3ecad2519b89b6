#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "travlearn/geometry.hpp"
#include "travlearn/perception.hpp"

namespace travlearn {

struct ScoreParams {
  /// Sigmoid steepness, per (m/s)^2.
  double k = 15.0;
  /// Velocity error mapped to a score of 0.5, in (m/s)^2.
  double v_thr = 0.2;
  /// Kalman random-walk process variance.
  double q = 1e-4;
  /// Kalman measurement variance.
  double r = 1e-2;

  void validate() const;
};

/// Half the squared norm of the commanded-minus-measured planar velocity.
double velocity_error(Vec2 commanded, Vec2 measured);

struct KalmanState {
  double estimate = 0.0;
  double variance = 1.0;
};

KalmanState kalman_smooth(KalmanState state, double measurement, double q, double r);

double traversability_score(double smoothed_velocity_error, const ScoreParams& params);

/// Velocity error -> Kalman smoothing -> logistic score, at proprioception rate.
class TraversabilityEstimator {
 public:
  explicit TraversabilityEstimator(ScoreParams params = {});
  double update(Vec2 commanded, Vec2 measured);
  const KalmanState& state() const { return state_; }
  const ScoreParams& params() const { return params_; }
  void set_params(const ScoreParams& p);

 private:
  ScoreParams params_;
  KalmanState state_;
};

struct SupervisionNode {
  double timestamp = 0.0;
  Pose2 pose;
  Polygon footprint;
  double score = 0.0;
};

enum class PushResult { added, rejected_too_close };

/// Fixed-capacity FIFO of footprints spaced at least `spacing` apart.
class SupervisionGraph {
 public:
  SupervisionGraph(std::size_t capacity, double spacing);

  PushResult push(SupervisionNode node);
  const std::deque<SupervisionNode>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t capacity() const { return capacity_; }
  double spacing() const { return spacing_; }
  std::uint64_t evicted() const { return evicted_; }

 private:
  std::size_t capacity_;
  double spacing_;
  std::deque<SupervisionNode> nodes_;
  std::uint64_t evicted_ = 0;
};

/// Supervision raster value for pixels no footprint has touched.
inline constexpr double kUnlabeled = -1.0;

struct SegmentLabel {
  int segment_id = 0;
  double score = 0.0;
  bool traversed = false;
};

struct MissionNode {
  FeatureFramePtr frame;
  std::vector<double> supervision;
  std::vector<SegmentLabel> labels;

  /// At least one segment carries a non-zero score.
  bool valid() const;
};

class MissionGraph {
 public:
  explicit MissionGraph(double spacing, bool keep_dense_features = false);

  /// Appends a node when the frame pose is at least `spacing` from the last node.
  /// Returns the new node, or nullptr when skipped.
  const MissionNode* maybe_add(const FeatureFramePtr& frame);

  const std::vector<MissionNode>& nodes() const { return nodes_; }
  std::vector<MissionNode>& nodes() { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  double spacing() const { return spacing_; }

 private:
  double spacing_;
  bool keep_dense_;
  std::vector<MissionNode> nodes_;
};

/// Paints the swept footprint track into every mission node within `range_m` of
/// any supervision node (later nodes win on overlap), then recomputes per-segment
/// labels as the mean over labelled pixels. Returns the number of nodes visited.
std::size_t reproject_supervision(MissionGraph& mission, const SupervisionGraph& supervision, double range_m);

/// Per-segment labels from a supervision raster.
std::vector<SegmentLabel> segment_labels(const FeatureFrame& frame, const std::vector<double>& supervision);

}  // namespace travlearn
