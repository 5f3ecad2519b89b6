#include "travlearn/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace travlearn {

using nlohmann::json;

std::string to_string(SessionMode m) {
  switch (m) {
    case SessionMode::teleop: return "teleop";
    case SessionMode::autonomous: return "autonomous";
    case SessionMode::replay: return "replay";
  }
  return "teleop";
}

SessionMode parse_session_mode(const std::string& s) {
  if (s == "teleop") return SessionMode::teleop;
  if (s == "autonomous") return SessionMode::autonomous;
  if (s == "replay") return SessionMode::replay;
  throw ConfigError("unknown mode '" + s + "'");
}

namespace {

std::string role_name(CameraRole r) { return r == CameraRole::train_and_infer ? "train_and_infer" : "infer_only"; }

CameraRole parse_role(const std::string& s) {
  if (s == "train_and_infer") return CameraRole::train_and_infer;
  if (s == "infer_only") return CameraRole::infer_only;
  throw ConfigError("unknown camera role '" + s + "'");
}

// Walks one JSON object, remembering which keys were consumed so the rest can be
// reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where() + "." + key + ": " + e.what());
    }
  }

  void get_with(const char* key, const std::function<void(const json&, const std::string&)>& fn) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it != j_.end()) fn(*it, path_ + "." + key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + path_ + "." + it.key() + "'");
  }

 private:
  std::string where() const { return "'" + path_ + "'"; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_pose(const json& j, const std::string& path, Pose2& p) {
  Section s(j, path);
  s.get("x", p.x);
  s.get("y", p.y);
  s.get("theta", p.theta);
  s.finish();
}

json pose_json(const Pose2& p) { return {{"x", p.x}, {"y", p.y}, {"theta", p.theta}}; }

void read_camera(const json& j, const std::string& path, CameraConfig& c) {
  Section s(j, path);
  s.get("id", c.model.camera_id);
  s.get("weight", c.weight);
  std::string role = role_name(c.role);
  s.get("role", role);
  c.role = parse_role(role);
  s.get_with("mount", [&](const json& v, const std::string& p) { read_pose(v, p, c.model.mount); });
  s.get("near_width", c.model.near_width);
  s.get("far_width", c.model.far_width);
  s.get("near_range", c.model.near_range);
  s.get("far_range", c.model.far_range);
  s.get("height", c.model.height);
  s.get("width", c.model.width);
  s.finish();
}

}  // namespace

void SessionConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (world.empty() && mode != SessionMode::replay) fail("world path is required");
  if (!(duration >= 0.0)) fail("duration must be >= 0");
  if (cameras.empty()) fail("at least one camera is required");
  std::set<std::string> ids;
  for (const auto& c : cameras) {
    if (c.weight <= 0) fail("camera '" + c.model.camera_id + "' weight must be positive");
    if (!ids.insert(c.model.camera_id).second) fail("duplicate camera id '" + c.model.camera_id + "'");
    try {
      c.model.validate();
    } catch (const std::exception& e) {
      fail("camera '" + c.model.camera_id + "': " + e.what());
    }
  }
  if (extractor != "synthetic" && extractor != "replay") fail("extractor must be 'synthetic' or 'replay'");
  if (synthetic.embedding_dim <= 0) fail("synthetic.embedding_dim must be positive");
  if (synthetic.blur_radius < 0) fail("synthetic.blur_radius must be >= 0");
  if (perception.working_height <= 0 || perception.working_width <= 0) fail("working resolution must be positive");
  if (perception.subsample.target_count <= 0) fail("subsample.target_count must be positive");
  if (perception_every_ticks <= 0) fail("perception_every_ticks must be positive");
  if (frame_queue_capacity == 0) fail("frame_queue_capacity must be positive");
  try {
    score.validate();
    learning.loss.validate();
  } catch (const std::exception& e) {
    fail(e.what());
  }
  if (learning.model.input_dim != synthetic.embedding_dim) fail("model.input_dim must equal synthetic.embedding_dim");
  if (learning.model.hidden1 <= 0 || learning.model.hidden2 <= 0) fail("hidden sizes must be positive");
  if (!(learning.adam.learning_rate > 0.0)) fail("adam.learning_rate must be positive");
  if (learning.train_every_ticks <= 0 || learning.snapshot_every_steps <= 0) fail("learning cadences must be positive");
  if (graph.supervision_capacity == 0) fail("graph.supervision_capacity must be positive");
  if (!(graph.supervision_spacing >= 0.0) || !(graph.mission_spacing >= 0.0)) fail("graph spacings must be >= 0");
  if (!(graph.reprojection_range > 0.0)) fail("graph.reprojection_range must be positive");
  if (!(map.size > 0.0) || !(map.resolution > 0.0) || map.resolution > map.size) fail("map geometry is invalid");
  if (!(map.alpha > 0.0 && map.alpha <= 1.0)) fail("map.alpha must be in (0, 1]");
  if (!(map.sdf.cap > 0.0)) fail("map.sdf_cap must be positive");
  if (map.update_every_ticks <= 0) fail("map.update_every_ticks must be positive");
  const PlannerParams& p = planner;
  for (double v : {p.goal_tolerance, p.limits.max_linear, p.limits.max_angular, p.influence_distance, p.k_attract,
                   p.k_heading, p.slowdown_distance, p.escape_speed})
    if (!(v > 0.0)) fail("planner parameters must be positive");
  for (double v : {p.robot_radius, p.k_repulse, p.k_tangent, p.heading_deadband})
    if (!(v >= 0.0)) fail("planner parameters must be non-negative");
  if (!(sim.dt > 0.0)) fail("sim.dt must be positive");
  if (!(sim.velocity_noise_std >= 0.0)) fail("sim.velocity_noise_std must be >= 0");
  if (!(sim.limits.max_linear > 0.0) || !(sim.limits.max_angular > 0.0)) fail("sim limits must be positive");
  if (!(sim.half_extents.x > 0.0) || !(sim.half_extents.y > 0.0)) fail("sim.half_extents must be positive");
}

SessionConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  SessionConfig c;
  Section root(j, "config");
  std::string world;
  root.get("world", world);
  c.world = world;
  if (!c.world.empty() && c.world.is_relative() && !base_dir.empty()) c.world = base_dir / c.world;
  root.get("feature_noise", c.feature_noise);
  root.get("seed", c.seed);
  std::string mode = to_string(c.mode);
  root.get("mode", mode);
  c.mode = parse_session_mode(mode);
  root.get("duration", c.duration);
  root.get_with("cameras", [&](const json& v, const std::string& p) {
    if (!v.is_array()) throw ConfigError("'" + p + "' must be an array");
    c.cameras.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      CameraConfig cam;
      read_camera(v[i], p + "[" + std::to_string(i) + "]", cam);
      c.cameras.push_back(cam);
    }
  });
  if (c.cameras.empty() && !j.contains("cameras")) c.cameras.push_back(CameraConfig{});

  root.get_with("extractor", [&](const json& v, const std::string& p) {
    Section s(v, p);
    s.get("type", c.extractor);
    s.get("embedding_dim", c.synthetic.embedding_dim);
    s.get("seed", c.synthetic.seed);
    s.get("blur_radius", c.synthetic.blur_radius);
    s.finish();
  });
  c.learning.model.input_dim = c.synthetic.embedding_dim;

  root.get_with("perception", [&](const json& v, const std::string& p) {
    Section s(v, p);
    s.get("working_height", c.perception.working_height);
    s.get("working_width", c.perception.working_width);
    s.get("every_ticks", c.perception_every_ticks);
    std::string strategy = to_string(c.perception.subsample.strategy);
    s.get("subsample", strategy);
    c.perception.subsample.strategy = parse_subsample_strategy(strategy);
    s.get("target_count", c.perception.subsample.target_count);
    s.get("position_weight", c.perception.subsample.position_weight);
    s.get("kmeans_iterations", c.perception.subsample.max_iterations);
    std::string inference = to_string(c.inference_mode);
    s.get("inference", inference);
    c.inference_mode = parse_inference_mode(inference);
    s.get("queue_capacity", c.frame_queue_capacity);
    s.finish();
  });
  c.perception.keep_features = c.inference_mode == InferenceMode::pixel;

  root.get_with("score", [&](const json& v, const std::string& p) {
    Section s(v, p);
    s.get("k", c.score.k);
    s.get("v_thr", c.score.v_thr);
    s.get("q", c.score.q);
    s.get("r", c.score.r);
    s.finish();
  });

  root.get_with("graph", [&](const json& v, const std::string& p) {
    Section s(v, p);
    s.get("supervision_capacity", c.graph.supervision_capacity);
    s.get("supervision_spacing", c.graph.supervision_spacing);
    s.get("mission_spacing", c.graph.mission_spacing);
    s.get("reprojection_range", c.graph.reprojection_range);
    s.get("keep_dense_features", c.graph.keep_dense_features);
    s.finish();
  });

  root.get_with("learning", [&](const json& v, const std::string& p) {
    Section s(v, p);
    s.get("hidden1", c.learning.model.hidden1);
    s.get("hidden2", c.learning.model.hidden2);
    s.get("w_trav", c.learning.loss.w_trav);
    s.get("w_reco", c.learning.loss.w_reco);
    s.get("k_sigma", c.learning.loss.k_sigma);
    s.get("fpr_max", c.learning.loss.fpr_max);
    s.get("learning_rate", c.learning.adam.learning_rate);
    s.get("beta1", c.learning.adam.beta1);
    s.get("beta2", c.learning.adam.beta2);
    s.get("epsilon", c.learning.adam.epsilon);
    s.get("train_every_ticks", c.learning.train_every_ticks);
    s.get("snapshot_every_steps", c.learning.snapshot_every_steps);
    s.finish();
  });

  root.get_with("map", [&](const json& v, const std::string& p) {
    Section s(v, p);
    s.get("size", c.map.size);
    s.get("resolution", c.map.resolution);
    s.get("alpha", c.map.alpha);
    s.get("sdf_cap", c.map.sdf.cap);
    s.get("unknown_is_obstacle", c.map.sdf.unknown_is_obstacle);
    s.get("footprint_prior", c.map.footprint_prior);
    s.get("update_every_ticks", c.map.update_every_ticks);
    s.finish();
  });

  root.get_with("planner", [&](const json& v, const std::string& p) {
    Section s(v, p);
    auto& pl = c.planner;
    s.get("goal_tolerance", pl.goal_tolerance);
    s.get("max_linear", pl.limits.max_linear);
    s.get("max_angular", pl.limits.max_angular);
    s.get("influence_distance", pl.influence_distance);
    s.get("robot_radius", pl.robot_radius);
    s.get("k_attract", pl.k_attract);
    s.get("k_repulse", pl.k_repulse);
    s.get("k_tangent", pl.k_tangent);
    s.get("k_heading", pl.k_heading);
    s.get("heading_deadband", pl.heading_deadband);
    s.get("slowdown_distance", pl.slowdown_distance);
    s.get("escape_speed", pl.escape_speed);
    s.finish();
  });

  root.get_with("sim", [&](const json& v, const std::string& p) {
    Section s(v, p);
    s.get("dt", c.sim.dt);
    s.get("velocity_noise_std", c.sim.velocity_noise_std);
    s.get("footprint_traction", c.sim.footprint_traction);
    s.get("max_linear", c.sim.limits.max_linear);
    s.get("max_angular", c.sim.limits.max_angular);
    s.get_with("start", [&](const json& pv, const std::string& pp) { read_pose(pv, pp, c.sim.start); });
    s.get_with("half_extents", [&](const json& hv, const std::string& hp) {
      if (!hv.is_array() || hv.size() != 2) throw ConfigError("'" + hp + "' must be [half_length, half_width]");
      c.sim.half_extents = {hv[0].get<double>(), hv[1].get<double>()};
    });
    s.finish();
  });
  root.finish();
  c.validate();
  return c;
}

SessionConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

json config_to_json(const SessionConfig& c) {
  json cams = json::array();
  for (const auto& cam : c.cameras)
    cams.push_back({{"id", cam.model.camera_id},
                    {"weight", cam.weight},
                    {"role", role_name(cam.role)},
                    {"mount", pose_json(cam.model.mount)},
                    {"near_width", cam.model.near_width},
                    {"far_width", cam.model.far_width},
                    {"near_range", cam.model.near_range},
                    {"far_range", cam.model.far_range},
                    {"height", cam.model.height},
                    {"width", cam.model.width}});
  const auto& pl = c.planner;
  return {
      {"world", c.world.string()},
      {"feature_noise", c.feature_noise},
      {"seed", c.seed},
      {"mode", to_string(c.mode)},
      {"duration", c.duration},
      {"cameras", cams},
      {"extractor",
       {{"type", c.extractor},
        {"embedding_dim", c.synthetic.embedding_dim},
        {"seed", c.synthetic.seed},
        {"blur_radius", c.synthetic.blur_radius}}},
      {"perception",
       {{"working_height", c.perception.working_height},
        {"working_width", c.perception.working_width},
        {"every_ticks", c.perception_every_ticks},
        {"subsample", to_string(c.perception.subsample.strategy)},
        {"target_count", c.perception.subsample.target_count},
        {"position_weight", c.perception.subsample.position_weight},
        {"kmeans_iterations", c.perception.subsample.max_iterations},
        {"inference", to_string(c.inference_mode)},
        {"queue_capacity", c.frame_queue_capacity}}},
      {"score", {{"k", c.score.k}, {"v_thr", c.score.v_thr}, {"q", c.score.q}, {"r", c.score.r}}},
      {"graph",
       {{"supervision_capacity", c.graph.supervision_capacity},
        {"supervision_spacing", c.graph.supervision_spacing},
        {"mission_spacing", c.graph.mission_spacing},
        {"reprojection_range", c.graph.reprojection_range},
        {"keep_dense_features", c.graph.keep_dense_features}}},
      {"learning",
       {{"hidden1", c.learning.model.hidden1},
        {"hidden2", c.learning.model.hidden2},
        {"w_trav", c.learning.loss.w_trav},
        {"w_reco", c.learning.loss.w_reco},
        {"k_sigma", c.learning.loss.k_sigma},
        {"fpr_max", c.learning.loss.fpr_max},
        {"learning_rate", c.learning.adam.learning_rate},
        {"beta1", c.learning.adam.beta1},
        {"beta2", c.learning.adam.beta2},
        {"epsilon", c.learning.adam.epsilon},
        {"train_every_ticks", c.learning.train_every_ticks},
        {"snapshot_every_steps", c.learning.snapshot_every_steps}}},
      {"map",
       {{"size", c.map.size},
        {"resolution", c.map.resolution},
        {"alpha", c.map.alpha},
        {"sdf_cap", c.map.sdf.cap},
        {"unknown_is_obstacle", c.map.sdf.unknown_is_obstacle},
        {"footprint_prior", c.map.footprint_prior},
        {"update_every_ticks", c.map.update_every_ticks}}},
      {"planner",
       {{"goal_tolerance", pl.goal_tolerance},
        {"max_linear", pl.limits.max_linear},
        {"max_angular", pl.limits.max_angular},
        {"influence_distance", pl.influence_distance},
        {"robot_radius", pl.robot_radius},
        {"k_attract", pl.k_attract},
        {"k_repulse", pl.k_repulse},
        {"k_tangent", pl.k_tangent},
        {"k_heading", pl.k_heading},
        {"heading_deadband", pl.heading_deadband},
        {"slowdown_distance", pl.slowdown_distance},
        {"escape_speed", pl.escape_speed}}},
      {"sim",
       {{"dt", c.sim.dt},
        {"velocity_noise_std", c.sim.velocity_noise_std},
        {"footprint_traction", c.sim.footprint_traction},
        {"max_linear", c.sim.limits.max_linear},
        {"max_angular", c.sim.limits.max_angular},
        {"start", pose_json(c.sim.start)},
        {"half_extents", {c.sim.half_extents.x, c.sim.half_extents.y}}}},
  };
}

TerrainWorld load_session_world(const SessionConfig& cfg) {
  auto world = load_world(cfg.world, static_cast<std::size_t>(cfg.synthetic.embedding_dim));
  if (cfg.feature_noise >= 0.0) world = with_feature_noise(std::move(world), cfg.feature_noise);
  return world;
}

}  // namespace travlearn
