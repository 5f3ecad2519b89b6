#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "travlearn/config.hpp"
#include "travlearn/session_log.hpp"
#include "travlearn/wire.hpp"

namespace travlearn {

/// Proprioceptive sample handed from the simulation loop to the learning loop.
struct ProprioSample {
  double t = 0.0;
  Pose2 pose;
  Vec2 commanded;
  Vec2 measured;
  Vec2 half_extents{0.35, 0.2};
};

/// Everything the learning loop consumes. Supervision generation and training
/// only ever see these, so a log of them is enough to replay the learner.
class LearningPipeline {
 public:
  explicit LearningPipeline(const SessionConfig& cfg);

  /// Score update and supervision push; reprojects when a node was added.
  /// Returns the traversability score.
  double on_proprio(const ProprioSample& s);
  /// Training-role frames become mission nodes (subject to spacing).
  bool on_frame(const FeatureFramePtr& frame);
  TrainMetrics train();
  ModelSnapshotPtr publish();
  ModelSnapshot current() const { return learner_.current(mission_); }
  void apply(const ParamUpdate& p);

  const Learner& learner() const { return learner_; }
  const MissionGraph& mission() const { return mission_; }
  const SupervisionGraph& supervision() const { return supervision_; }
  const TraversabilityEstimator& estimator() const { return estimator_; }
  ModelSnapshotPtr latest() const { return latest_; }
  double last_score() const { return last_score_; }

 private:
  double range_;
  TraversabilityEstimator estimator_;
  SupervisionGraph supervision_;
  MissionGraph mission_;
  Learner learner_;
  ModelSnapshotPtr latest_;
  double last_score_ = 0.0;
};

/// Bounded perception -> learning hand-off. Proprioception and parameter
/// updates are never dropped and do not count against the capacity. When the
/// frame capacity is exceeded the oldest inference-only frame goes first; a
/// training frame is only evicted when no inference-only frame is queued, and
/// is returned so the caller can log it.
class FrameQueue {
 public:
  using Item = std::variant<ProprioSample, FeatureFramePtr, ParamUpdate>;

  explicit FrameQueue(std::size_t frame_capacity);
  /// Returns the evicted frame, if any.
  std::optional<FeatureFramePtr> push(Item item);
  std::optional<Item> try_pop();
  /// Blocks until an item is available or close() was called.
  std::optional<Item> pop_wait();
  void close();
  std::size_t size() const;
  std::size_t frames() const;
  std::uint64_t dropped_infer_only() const { return dropped_infer_; }
  std::uint64_t dropped_training() const { return dropped_train_; }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Item> items_;
  std::size_t capacity_;
  std::size_t frames_ = 0;
  bool closed_ = false;
  std::uint64_t dropped_infer_ = 0;
  std::uint64_t dropped_train_ = 0;
};

/// Scripted teleoperation: drives through waypoints with a heading controller,
/// as a human operator with a joystick would.
class WaypointScript {
 public:
  WaypointScript(std::vector<Vec2> waypoints, double speed, bool loop = false, double tolerance = 0.4);
  /// Command for the current state; nullopt once the last waypoint is reached.
  std::optional<TwistCommand> next(const RobotState& state);
  bool done() const { return index_ >= waypoints_.size(); }
  std::size_t index() const { return index_; }

 private:
  std::vector<Vec2> waypoints_;
  double speed_;
  bool loop_;
  double tolerance_;
  std::size_t index_ = 0;
};

struct SessionOutputs {
  /// Empty directory path disables all file output (useful in tests).
  std::filesystem::path directory;
  std::filesystem::path log() const { return directory / "session.ndjson"; }
  std::filesystem::path features() const { return directory / "features.bin"; }
  std::filesystem::path checkpoint() const { return directory / "final.ckpt"; }
  std::filesystem::path summary() const { return directory / "summary.json"; }
};

struct SessionSummary {
  std::uint64_t ticks = 0;
  double sim_time = 0.0;
  std::uint64_t teleop_events = 0;
  std::uint64_t frames = 0;
  std::uint64_t train_steps = 0;
  std::uint64_t snapshots = 0;
  std::size_t mission_nodes = 0;
  std::uint64_t dropped_training_frames = 0;
  std::uint64_t dropped_infer_frames = 0;
  std::uint64_t goals_reached = 0;
  /// Ticks on which the robot centre entered a cell of traction below 0.1.
  std::uint64_t hazard_entries = 0;
  double threshold = 0.5;
  nlohmann::json to_json() const;
};

/// One simulated robot with its perception, learning and mapping loops. On the
/// virtual clock, tick() runs the three loops in a fixed order on the calling
/// thread; run_threaded() moves the learning loop to its own thread.
class Session {
 public:
  Session(SessionConfig cfg, SessionOutputs outputs = {});
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const SessionConfig& config() const { return cfg_; }
  const TerrainWorld& world() const { return world_; }
  const RobotState& robot() const { return robot_; }
  double time() const { return t_; }
  std::uint64_t ticks() const { return ticks_; }

  // command sources
  void set_script(std::shared_ptr<WaypointScript> script) { script_ = std::move(script); }
  void set_mode(SessionMode m);
  SessionMode mode() const { return mode_; }
  void set_goals(std::vector<Vec2> goals);
  void set_carrot(bool on) { carrot_ = on; }
  std::optional<Vec2> goal() const;
  std::size_t goals_remaining() const { return goals_.size(); }
  /// Thread-safe: queued and applied at the start of the next simulation tick.
  void post(InboundMessage msg);

  /// Advances the virtual clock by one simulation step.
  void tick();
  /// Ticks until `duration` seconds of simulated time have elapsed, or until
  /// `until` returns true.
  void run_for(double duration, const std::function<bool(const Session&)>& until = {});
  /// Real-time run with the learning loop on a worker thread; returns when
  /// `stop` is set or the configured duration has elapsed.
  void run_threaded(std::atomic<bool>& stop, double time_scale = 1.0);

  /// Flushes the log, writes the final checkpoint and summary. Idempotent.
  ModelSnapshot finish();

  const LearningPipeline& pipeline() const { return *pipeline_; }
  ModelSnapshotPtr snapshot() const;
  const TravGrid& grid() const { return grid_; }
  const SdfGrid& sdf() const { return sdf_; }
  const SessionSummary& summary() const { return summary_; }
  const TwistCommand& last_command() const { return cmd_; }
  std::optional<std::pair<std::string, TraversabilityImage>> last_trav_image() const;
  TrainMetrics last_metrics() const;

  /// Called (on the learning thread) after every publication.
  std::function<void(const ModelSnapshotPtr&)> on_publish;
  /// Called after every tick (simulation thread); used for streaming.
  std::function<void(const Session&)> on_tick;

 private:
  void apply_inbox();
  void sim_step();
  void perception_step();
  void learning_drain();
  void learning_train();
  void learning_item(FrameQueue::Item&& item);
  void map_step();
  void log(const std::string& type, nlohmann::json body, std::optional<double> t = std::nullopt);

  SessionConfig cfg_;
  SessionOutputs out_;
  TerrainWorld world_;
  RobotState robot_;
  double t_ = 0.0;
  std::uint64_t ticks_ = 0;
  std::mt19937_64 sim_rng_;
  TwistCommand cmd_;
  SessionMode mode_;
  std::shared_ptr<WaypointScript> script_;
  std::deque<Vec2> goals_;
  std::optional<Vec2> carrot_goal_;
  bool carrot_ = false;
  PlannerMemory planner_memory_;
  std::optional<TwistCommand> console_cmd_;

  std::mutex inbox_mu_;
  std::vector<InboundMessage> inbox_;

  // perception
  CameraScheduler scheduler_;
  std::unique_ptr<FeatureExtractor> extractor_;
  std::unique_ptr<FeatureLogWriter> features_;
  std::uint64_t sequence_ = 0;
  mutable std::mutex snap_mu_;
  ModelSnapshotPtr snapshot_;
  mutable std::mutex image_mu_;
  std::optional<std::pair<std::string, TraversabilityImage>> last_image_;

  // map
  TravGrid grid_;
  SdfGrid sdf_;
  double alpha_;

  // learning
  FrameQueue queue_;
  std::unique_ptr<LearningPipeline> pipeline_;
  mutable std::mutex metrics_mu_;
  TrainMetrics last_metrics_;

  std::mutex log_mu_;
  std::unique_ptr<SessionLogWriter> log_;
  SessionSummary summary_;
  bool hazard_ = false;
  bool finished_ = false;
  std::optional<ModelSnapshot> final_;
};

/// The synthetic extractor a live session with this config uses.
std::unique_ptr<SyntheticExtractor> make_session_extractor(const SessionConfig& cfg, const TerrainWorld& world);

/// Rebuilds the learner from a session log and its feature sidecar by feeding
/// the logged proprioception, frames, parameter updates, train and publish
/// events through the same pipeline. Throws if the replay diverges from the log.
ModelSnapshot replay_session(const std::filesystem::path& log_path, const std::filesystem::path& features_path,
                             const std::filesystem::path& world_override = {});

}  // namespace travlearn
