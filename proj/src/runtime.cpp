#include "travlearn/runtime.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <thread>

namespace travlearn {

using nlohmann::json;

namespace {

json pose_json(const Pose2& p) { return json::array({p.x, p.y, p.theta}); }
Pose2 pose_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }
json vec_json(Vec2 v) { return json::array({v.x, v.y}); }
Vec2 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

const char* role_name(CameraRole r) { return r == CameraRole::train_and_infer ? "train_and_infer" : "infer_only"; }
CameraRole role_from(const std::string& s) {
  return s == "infer_only" ? CameraRole::infer_only : CameraRole::train_and_infer;
}

json record_json(const FeatureLogRecord& r) {
  return {{"offset", r.offset}, {"bytes", r.byte_length}, {"height", r.height}, {"width", r.width}, {"dim", r.dim}};
}

json param_json(const ParamUpdate& p) {
  json j = json::object();
  if (p.k_sigma) j["k_sigma"] = *p.k_sigma;
  if (p.fpr_max) j["fpr_max"] = *p.fpr_max;
  if (p.alpha) j["alpha"] = *p.alpha;
  if (p.max_linear) j["max_linear"] = *p.max_linear;
  if (p.max_angular) j["max_angular"] = *p.max_angular;
  return j;
}

ParamUpdate param_from(const json& j) {
  ParamUpdate p;
  if (j.contains("k_sigma")) p.k_sigma = j["k_sigma"].get<double>();
  if (j.contains("fpr_max")) p.fpr_max = j["fpr_max"].get<double>();
  if (j.contains("alpha")) p.alpha = j["alpha"].get<double>();
  if (j.contains("max_linear")) p.max_linear = j["max_linear"].get<double>();
  if (j.contains("max_angular")) p.max_angular = j["max_angular"].get<double>();
  return p;
}

// Records every raw extractor output into the feature sidecar so a replay can
// serve byte-identical embeddings.
class RecordingExtractor final : public FeatureExtractor {
 public:
  RecordingExtractor(std::unique_ptr<FeatureExtractor> inner, FeatureLogWriter* writer)
      : inner_(std::move(inner)), writer_(writer) {}
  int embedding_dim() const override { return inner_->embedding_dim(); }
  FeatureImage extract(const Observation& obs) override {
    FeatureImage img = inner_->extract(obs);
    last_ = writer_->append_blob(obs.timestamp, obs.camera_id, obs.robot_pose, img);
    return img;
  }
  const FeatureLogRecord& last() const { return last_; }

 private:
  std::unique_ptr<FeatureExtractor> inner_;
  FeatureLogWriter* writer_;
  FeatureLogRecord last_;
};

SyntheticExtractorParams extractor_params(const SessionConfig& cfg) {
  SyntheticExtractorParams p = cfg.synthetic;
  p.seed = mix_seed(cfg.seed, cfg.synthetic.seed);
  return p;
}

const CameraConfig& camera_by_id(const SessionConfig& cfg, const std::string& id) {
  for (const auto& c : cfg.cameras)
    if (c.model.camera_id == id) return c;
  throw std::invalid_argument("unknown camera '" + id + "'");
}

}  // namespace

std::unique_ptr<SyntheticExtractor> make_session_extractor(const SessionConfig& cfg, const TerrainWorld& world) {
  return std::make_unique<SyntheticExtractor>(world, extractor_params(cfg));
}

// ---------------------------------------------------------------------------

LearningPipeline::LearningPipeline(const SessionConfig& cfg)
    : range_(cfg.graph.reprojection_range),
      estimator_(cfg.score),
      supervision_(cfg.graph.supervision_capacity, cfg.graph.supervision_spacing),
      mission_(cfg.graph.mission_spacing, cfg.graph.keep_dense_features),
      learner_(cfg.learning.model, cfg.learning.loss, cfg.learning.adam, mix_seed(cfg.seed, 20)) {}

double LearningPipeline::on_proprio(const ProprioSample& s) {
  last_score_ = estimator_.update(s.commanded, s.measured);
  RobotState body;
  body.pose = s.pose;
  body.footprint_half_extents = s.half_extents;
  SupervisionNode node{s.t, s.pose, footprint_polygon(body), last_score_};
  if (supervision_.push(std::move(node)) == PushResult::added && mission_.size() > 0)
    reproject_supervision(mission_, supervision_, range_);
  return last_score_;
}

bool LearningPipeline::on_frame(const FeatureFramePtr& frame) {
  if (frame->role != CameraRole::train_and_infer) return false;
  if (!mission_.maybe_add(frame)) return false;
  if (supervision_.size() > 0) reproject_supervision(mission_, supervision_, range_);
  return true;
}

TrainMetrics LearningPipeline::train() { return learner_.train(mission_); }

ModelSnapshotPtr LearningPipeline::publish() {
  latest_ = learner_.publish(mission_);
  return latest_;
}

void LearningPipeline::apply(const ParamUpdate& p) {
  LossWeights w = learner_.weights();
  if (p.k_sigma) w.k_sigma = *p.k_sigma;
  if (p.fpr_max) w.fpr_max = *p.fpr_max;
  learner_.set_weights(w);
}

// ---------------------------------------------------------------------------

FrameQueue::FrameQueue(std::size_t frame_capacity) : capacity_(frame_capacity) {
  if (capacity_ == 0) throw std::invalid_argument("frame queue capacity must be positive");
}

std::optional<FeatureFramePtr> FrameQueue::push(Item item) {
  std::optional<FeatureFramePtr> evicted;
  {
    std::lock_guard lock(mu_);
    if (closed_) throw std::runtime_error("frame queue is closed");
    const bool is_frame = std::holds_alternative<FeatureFramePtr>(item);
    if (is_frame && frames_ == capacity_) {
      auto victim = items_.end();
      for (auto it = items_.begin(); it != items_.end(); ++it) {
        const auto* f = std::get_if<FeatureFramePtr>(&*it);
        if (f && (*f)->role == CameraRole::infer_only) {
          victim = it;
          break;
        }
      }
      if (victim == items_.end()) {
        for (auto it = items_.begin(); it != items_.end(); ++it)
          if (std::holds_alternative<FeatureFramePtr>(*it)) {
            victim = it;
            break;
          }
        ++dropped_train_;
        evicted = std::get<FeatureFramePtr>(*victim);
      } else {
        ++dropped_infer_;
      }
      items_.erase(victim);
      --frames_;
    }
    if (is_frame) ++frames_;
    items_.push_back(std::move(item));
  }
  cv_.notify_one();
  return evicted;
}

std::optional<FrameQueue::Item> FrameQueue::try_pop() {
  std::lock_guard lock(mu_);
  if (items_.empty()) return std::nullopt;
  Item it = std::move(items_.front());
  items_.pop_front();
  if (std::holds_alternative<FeatureFramePtr>(it)) --frames_;
  return it;
}

std::optional<FrameQueue::Item> FrameQueue::pop_wait() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return closed_ || !items_.empty(); });
  if (items_.empty()) return std::nullopt;
  Item it = std::move(items_.front());
  items_.pop_front();
  if (std::holds_alternative<FeatureFramePtr>(it)) --frames_;
  return it;
}

void FrameQueue::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

std::size_t FrameQueue::size() const {
  std::lock_guard lock(mu_);
  return items_.size();
}

std::size_t FrameQueue::frames() const {
  std::lock_guard lock(mu_);
  return frames_;
}

// ---------------------------------------------------------------------------

WaypointScript::WaypointScript(std::vector<Vec2> waypoints, double speed, bool loop, double tolerance)
    : waypoints_(std::move(waypoints)), speed_(speed), loop_(loop), tolerance_(tolerance) {
  if (!(speed > 0.0) || !(tolerance > 0.0)) throw std::invalid_argument("script speed and tolerance must be positive");
}

std::optional<TwistCommand> WaypointScript::next(const RobotState& state) {
  while (index_ < waypoints_.size() && (waypoints_[index_] - state.pose.translation()).norm() < tolerance_) {
    ++index_;
    if (loop_ && index_ == waypoints_.size()) index_ = 0;
  }
  if (index_ >= waypoints_.size()) return std::nullopt;
  const Vec2 d = waypoints_[index_] - state.pose.translation();
  const double err = wrap_angle(std::atan2(d.y, d.x) - state.pose.theta);
  const double c = std::max(0.0, std::cos(err));
  return TwistCommand{speed_ * c * c, 0.0, std::clamp(2.5 * err, -1.5, 1.5)};
}

// ---------------------------------------------------------------------------

json SessionSummary::to_json() const {
  return {{"ticks", ticks},
          {"sim_time", sim_time},
          {"teleop_events", teleop_events},
          {"frames", frames},
          {"train_steps", train_steps},
          {"snapshots", snapshots},
          {"mission_nodes", mission_nodes},
          {"dropped_training_frames", dropped_training_frames},
          {"dropped_infer_frames", dropped_infer_frames},
          {"goals_reached", goals_reached},
          {"hazard_entries", hazard_entries},
          {"threshold", threshold}};
}

Session::Session(SessionConfig cfg, SessionOutputs outputs)
    : cfg_(std::move(cfg)),
      out_(std::move(outputs)),
      world_((cfg_.validate(), load_session_world(cfg_))),
      sim_rng_(mix_seed(cfg_.seed, 10)),
      mode_(cfg_.mode),
      scheduler_([&] {
        std::vector<CameraScheduler::Entry> e;
        for (const auto& c : cfg_.cameras) e.push_back({c.model.camera_id, c.weight});
        return e;
      }()),
      grid_(cfg_.map.size, cfg_.map.resolution, cfg_.sim.start.translation()),
      alpha_(cfg_.map.alpha),
      queue_(cfg_.frame_queue_capacity),
      pipeline_(std::make_unique<LearningPipeline>(cfg_)) {
  if (mode_ == SessionMode::replay) throw ConfigError("replay sessions are run with replay_session()");
  if (cfg_.extractor != "synthetic") throw ConfigError("live sessions need the synthetic extractor");
  robot_.pose = cfg_.sim.start;
  robot_.footprint_half_extents = cfg_.sim.half_extents;
  if (!world_.in_bounds(robot_.pose.translation())) throw ConfigError("start pose is outside the world");

  auto synthetic = make_session_extractor(cfg_, world_);
  if (!out_.directory.empty()) {
    std::filesystem::create_directories(out_.directory);
    features_ = std::make_unique<FeatureLogWriter>(std::filesystem::path{}, out_.features());
    extractor_ = std::make_unique<RecordingExtractor>(std::move(synthetic), features_.get());
    log_ = std::make_unique<SessionLogWriter>(out_.log(), json{{"config", config_to_json(cfg_)}});
  } else {
    extractor_ = std::move(synthetic);
  }
  map_step();
}

Session::~Session() {
  try {
    finish();
  } catch (...) {
  }
}

void Session::log(const std::string& type, json body, std::optional<double> t) {
  if (!log_) return;
  std::lock_guard lock(log_mu_);
  log_->write(t.value_or(t_), type, std::move(body));
}

void Session::set_mode(SessionMode m) {
  if (m == SessionMode::replay) throw std::invalid_argument("cannot switch a live session to replay");
  mode_ = m;
  carrot_goal_.reset();
}

void Session::set_goals(std::vector<Vec2> goals) {
  goals_.assign(goals.begin(), goals.end());
  carrot_goal_.reset();
}

std::optional<Vec2> Session::goal() const {
  if (!goals_.empty()) return goals_.front();
  return carrot_goal_;
}

void Session::post(InboundMessage msg) {
  std::lock_guard lock(inbox_mu_);
  inbox_.push_back(std::move(msg));
}

ModelSnapshotPtr Session::snapshot() const {
  std::lock_guard lock(snap_mu_);
  return snapshot_;
}

std::optional<std::pair<std::string, TraversabilityImage>> Session::last_trav_image() const {
  std::lock_guard lock(image_mu_);
  return last_image_;
}

TrainMetrics Session::last_metrics() const {
  std::lock_guard lock(metrics_mu_);
  return last_metrics_;
}

void Session::apply_inbox() {
  std::vector<InboundMessage> msgs;
  {
    std::lock_guard lock(inbox_mu_);
    msgs.swap(inbox_);
  }
  for (auto& m : msgs) {
    if (auto* cmd = std::get_if<TwistCommand>(&m)) {
      if (!cmd->finite()) continue;
      console_cmd_ = cmd->clamped(cfg_.sim.limits);
      ++summary_.teleop_events;
      log("teleop", {{"vx", console_cmd_->vx}, {"vy", console_cmd_->vy}, {"wz", console_cmd_->wz}, {"source", "console"}});
    } else if (auto* mode = std::get_if<ModeChange>(&m)) {
      set_mode(parse_session_mode(mode->mode));
      if (mode->goal) set_goals({*mode->goal});
      if (mode->carrot) carrot_ = *mode->carrot;
      if (mode_ == SessionMode::teleop) console_cmd_.reset();
      json b{{"mode", mode->mode}};
      if (mode->goal) b["goal"] = vec_json(*mode->goal);
      if (mode->carrot) b["carrot"] = *mode->carrot;
      log("mode", std::move(b));
    } else if (auto* p = std::get_if<ParamUpdate>(&m)) {
      if (p->alpha) alpha_ = *p->alpha;
      if (p->max_linear) cfg_.planner.limits.max_linear = *p->max_linear;
      if (p->max_angular) cfg_.planner.limits.max_angular = *p->max_angular;
      if (p->k_sigma || p->fpr_max) queue_.push(*p);
    }
  }
}

void Session::sim_step() {
  TwistCommand cmd;
  if (mode_ == SessionMode::teleop) {
    if (console_cmd_) {
      cmd = *console_cmd_;
    } else if (script_) {
      cmd = script_->next(robot_).value_or(TwistCommand{});
      ++summary_.teleop_events;
      log("teleop", {{"vx", cmd.vx}, {"vy", cmd.vy}, {"wz", cmd.wz}, {"source", "script"}});
    }
  } else {
    while (true) {
      const auto g = goal();
      if (!g) break;
      const auto plan = plan_twist(sdf_, *g, robot_, cfg_.planner, &planner_memory_);
      if (plan.at_goal) {
        if (!goals_.empty()) {
          goals_.pop_front();
          ++summary_.goals_reached;
          log("goal_reached", {{"goal", vec_json(*g)}});
        } else {
          carrot_goal_.reset();
          break;
        }
        continue;
      }
      cmd = plan.twist;
      break;
    }
  }
  cmd_ = cmd.clamped(cfg_.sim.limits);
  StepOptions opts;
  opts.velocity_noise_std = cfg_.sim.velocity_noise_std;
  opts.footprint_traction = cfg_.sim.footprint_traction;
  robot_ = step_robot(world_, robot_, cmd_, cfg_.sim.dt, opts, &sim_rng_);
  ++ticks_;
  t_ = static_cast<double>(ticks_) * cfg_.sim.dt;

  const bool hazard = world_.traction_at(robot_.pose.translation()) < 0.1;
  if (hazard && !hazard_) ++summary_.hazard_entries;
  hazard_ = hazard;

  queue_.push(ProprioSample{t_, robot_.pose, {cmd_.vx, cmd_.vy}, robot_.measured_velocity,
                            robot_.footprint_half_extents});
}

void Session::perception_step() {
  const std::string id = scheduler_.next();
  const CameraConfig& cam = camera_by_id(cfg_, id);
  const Observation obs = render_camera(world_, robot_, cam.model, t_);
  const std::uint64_t seq = sequence_++;
  auto frame = std::make_shared<FeatureFrame>(build_feature_frame(obs, *extractor_, cfg_.perception, cam.role, seq));
  ++summary_.frames;
  json cap{{"camera", id}, {"seq", seq}, {"ts", obs.timestamp}, {"pose", pose_json(obs.robot_pose)},
           {"role", role_name(cam.role)}};
  if (auto* rec = dynamic_cast<RecordingExtractor*>(extractor_.get())) cap["rec"] = record_json(rec->last());
  log("capture", std::move(cap));

  if (const auto snap = snapshot()) {
    auto img = infer(*frame, *snap, cfg_.inference_mode);
    grid_.recenter(robot_.pose.translation());
    fuse_traversability(grid_, img, frame->pixel_to_world, alpha_);
    std::lock_guard lock(image_mu_);
    last_image_ = std::pair{id, std::move(img)};
  }
  if (auto evicted = queue_.push(FeatureFramePtr(frame))) {
    log("drop", {{"seq", (*evicted)->sequence}, {"camera", (*evicted)->camera_id}});
  }
}

void Session::learning_item(FrameQueue::Item&& item) {
  if (auto* s = std::get_if<ProprioSample>(&item)) {
    log("proprio",
        {{"pose", pose_json(s->pose)}, {"cmd", vec_json(s->commanded)}, {"meas", vec_json(s->measured)},
         {"half", vec_json(s->half_extents)}, {"ts", s->t}},
        s->t);
    pipeline_->on_proprio(*s);
  } else if (auto* f = std::get_if<FeatureFramePtr>(&item)) {
    if ((*f)->role != CameraRole::train_and_infer) return;
    const bool added = pipeline_->on_frame(*f);
    log("frame", {{"seq", (*f)->sequence}, {"added", added}});
  } else if (auto* p = std::get_if<ParamUpdate>(&item)) {
    pipeline_->apply(*p);
    log("param", param_json(*p));
  }
}

void Session::learning_drain() {
  while (auto item = queue_.try_pop()) learning_item(std::move(*item));
}

void Session::learning_train() {
  const TrainMetrics m = pipeline_->train();
  if (!m.trained) return;
  ++summary_.train_steps;
  log("train", {{"step", m.step}, {"total", m.total}, {"trav", m.trav}, {"reco", m.reco}, {"n_trav", m.n_traversed}});
  {
    std::lock_guard lock(metrics_mu_);
    last_metrics_ = m;
  }
  if (m.step % static_cast<std::uint64_t>(cfg_.learning.snapshot_every_steps) == 0) {
    auto snap = pipeline_->publish();
    ++summary_.snapshots;
    log("publish", {{"id", snap->id}, {"step", snap->training_step}, {"threshold", snap->threshold}});
    {
      std::lock_guard lock(snap_mu_);
      snapshot_ = snap;
    }
    if (on_publish) on_publish(snap);
  }
}

void Session::map_step() {
  grid_.recenter(robot_.pose.translation());
  if (cfg_.map.footprint_prior) grid_.fill_unknown(footprint_polygon(robot_), 1.0f);
  const auto snap = snapshot();
  sdf_ = compute_sdf(grid_, snap ? snap->threshold : 0.5, cfg_.map.sdf);
  if (mode_ == SessionMode::autonomous && carrot_ && goals_.empty() && !carrot_goal_ && snap)
    carrot_goal_ = spawn_carrot(grid_, robot_, cfg_.cameras.front().model, snap->threshold);
}

void Session::tick() {
  if (finished_) throw std::logic_error("session already finished");
  apply_inbox();
  sim_step();
  if ((ticks_ - 1) % static_cast<std::uint64_t>(cfg_.perception_every_ticks) == 0) perception_step();
  learning_drain();
  if (ticks_ % static_cast<std::uint64_t>(cfg_.learning.train_every_ticks) == 0) learning_train();
  if (ticks_ % static_cast<std::uint64_t>(cfg_.map.update_every_ticks) == 0) map_step();
  if (on_tick) on_tick(*this);
}

void Session::run_for(double duration, const std::function<bool(const Session&)>& until) {
  const auto n = static_cast<std::uint64_t>(std::llround(duration / cfg_.sim.dt));
  for (std::uint64_t i = 0; i < n; ++i) {
    if (until && until(*this)) return;
    tick();
  }
}

void Session::run_threaded(std::atomic<bool>& stop, double time_scale) {
  if (finished_) throw std::logic_error("session already finished");
  std::atomic<bool> learner_stop{false};
  std::thread learner([&] {
    while (!learner_stop) {
      bool any = false;
      while (auto item = queue_.try_pop()) {
        learning_item(std::move(*item));
        any = true;
      }
      const auto before = summary_.train_steps;
      learning_train();
      if (!any && summary_.train_steps == before) std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  });
  const auto period = std::chrono::duration<double>(cfg_.sim.dt / time_scale);
  auto next = std::chrono::steady_clock::now();
  const auto n_max = cfg_.duration > 0 ? static_cast<std::uint64_t>(std::llround(cfg_.duration / cfg_.sim.dt)) : 0;
  while (!stop && (n_max == 0 || ticks_ < n_max)) {
    apply_inbox();
    sim_step();
    if ((ticks_ - 1) % static_cast<std::uint64_t>(cfg_.perception_every_ticks) == 0) perception_step();
    if (ticks_ % static_cast<std::uint64_t>(cfg_.map.update_every_ticks) == 0) map_step();
    if (on_tick) on_tick(*this);
    next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(period);
    std::this_thread::sleep_until(next);
  }
  learner_stop = true;
  learner.join();
}

ModelSnapshot Session::finish() {
  if (final_) return *final_;
  learning_drain();
  finished_ = true;
  ModelSnapshot snap = pipeline_->current();
  summary_.ticks = ticks_;
  summary_.sim_time = t_;
  summary_.mission_nodes = pipeline_->mission().size();
  summary_.dropped_training_frames = queue_.dropped_training();
  summary_.dropped_infer_frames = queue_.dropped_infer_only();
  summary_.threshold = snap.threshold;
  if (log_) {
    log("shutdown", {{"steps", pipeline_->learner().steps()}});
    std::lock_guard lock(log_mu_);
    log_->flush();
  }
  if (features_) features_->flush();
  if (!out_.directory.empty()) {
    save_checkpoint(out_.checkpoint(), snap, BlobType::float64);
    std::ofstream(out_.summary()) << summary_.to_json().dump(2) << '\n';
  }
  final_ = snap;
  return snap;
}

// ---------------------------------------------------------------------------

ModelSnapshot replay_session(const std::filesystem::path& log_path, const std::filesystem::path& features_path,
                             const std::filesystem::path& world_override) {
  const auto contents = read_session_log(log_path);
  if (!contents.meta.contains("config")) throw SessionLogError("session log has no config", 0);
  SessionConfig cfg = parse_config(contents.meta["config"]);
  if (!world_override.empty()) cfg.world = world_override;
  const TerrainWorld world = load_session_world(cfg);
  auto reader = std::make_shared<FeatureLogReader>(features_path);
  ReplayExtractor extractor(reader, cfg.synthetic.embedding_dim);
  LearningPipeline pipeline(cfg);

  std::map<std::uint64_t, json> captures;
  auto diverged = [](const std::string& what, double t) {
    return std::runtime_error("replay diverged at t=" + std::to_string(t) + ": " + what);
  };
  for (const auto& e : contents.events) {
    const json& b = e.body;
    if (e.type == "capture") {
      const auto seq = b["seq"].get<std::uint64_t>();
      if (b.contains("rec")) {
        const json& r = b["rec"];
        FeatureLogRecord rec;
        rec.timestamp = b["ts"].get<double>();
        rec.camera_id = b["camera"].get<std::string>();
        rec.pose = pose_from(b["pose"]);
        rec.height = r["height"].get<int>();
        rec.width = r["width"].get<int>();
        rec.dim = r["dim"].get<int>();
        rec.offset = r["offset"].get<std::uint64_t>();
        rec.byte_length = r["bytes"].get<std::uint64_t>();
        reader->add_record(rec);
      }
      captures[seq] = b;
    } else if (e.type == "proprio") {
      pipeline.on_proprio(ProprioSample{b["ts"].get<double>(), pose_from(b["pose"]), vec_from(b["cmd"]),
                                        vec_from(b["meas"]), vec_from(b["half"])});
    } else if (e.type == "frame") {
      const auto seq = b["seq"].get<std::uint64_t>();
      const auto cap = captures.find(seq);
      if (cap == captures.end()) throw diverged("frame " + std::to_string(seq) + " was never captured", e.t);
      const json& c = cap->second;
      const CameraConfig& cam = camera_by_id(cfg, c["camera"].get<std::string>());
      RobotState st;
      st.pose = pose_from(c["pose"]);
      const Observation obs = render_camera(world, st, cam.model, c["ts"].get<double>());
      auto frame = std::make_shared<const FeatureFrame>(
          build_feature_frame(obs, extractor, cfg.perception, role_from(c["role"].get<std::string>()), seq));
      const bool added = pipeline.on_frame(frame);
      if (added != b["added"].get<bool>()) throw diverged("mission node admission differs", e.t);
      captures.erase(cap);
    } else if (e.type == "param") {
      pipeline.apply(param_from(b));
    } else if (e.type == "train") {
      const auto m = pipeline.train();
      if (!m.trained || m.step != b["step"].get<std::uint64_t>() || m.total != b["total"].get<double>())
        throw diverged("train step " + b["step"].dump() + " differs", e.t);
    } else if (e.type == "publish") {
      const auto snap = pipeline.publish();
      if (snap->id != b["id"].get<std::uint64_t>() || snap->threshold != b["threshold"].get<double>())
        throw diverged("snapshot " + b["id"].dump() + " differs", e.t);
    }
  }
  return pipeline.current();
}

}  // namespace travlearn
