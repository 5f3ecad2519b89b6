#include "travlearn/worldsim.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace travlearn {

using nlohmann::json;

TerrainWorld::TerrainWorld(double cell_size, int width, int height, std::vector<TerrainDef> defs,
                           std::vector<TerrainId> cells)
    : cell_size_(cell_size), width_(width), height_(height), defs_(std::move(defs)), cells_(std::move(cells)) {
  if (!(cell_size_ > 0.0)) throw WorldError("cell_size must be positive");
  if (width_ <= 0 || height_ <= 0) throw WorldError("world dimensions must be positive");
  if (cells_.size() != static_cast<std::size_t>(width_) * height_) throw WorldError("grid size mismatch");
  if (defs_.empty()) throw WorldError("world has no terrain definitions");
  for (const auto& d : defs_) {
    if (!(d.traction >= 0.0 && d.traction <= 1.0)) throw WorldError("traction of '" + d.name + "' outside [0,1]");
    if (!(d.feature_noise_std >= 0.0)) throw WorldError("negative feature noise for '" + d.name + "'");
    if (d.feature_prototype.size() != defs_.front().feature_prototype.size())
      throw WorldError("feature prototypes differ in length");
  }
  for (auto id : cells_) {
    if (id < 0 || static_cast<std::size_t>(id) >= defs_.size()) throw WorldError("cell references unknown terrain");
  }
}

std::size_t TerrainWorld::embedding_dim() const { return defs_.front().feature_prototype.size(); }

bool TerrainWorld::in_bounds(Vec2 p) const {
  return p.x >= 0.0 && p.y >= 0.0 && p.x < extent_x() && p.y < extent_y();
}

void TerrainWorld::set_cell(int i, int j, TerrainId id) {
  if (id < 0 || static_cast<std::size_t>(id) >= defs_.size()) throw WorldError("unknown terrain id");
  cells_.at(static_cast<std::size_t>(j) * width_ + i) = id;
}

TerrainId TerrainWorld::terrain_at(Vec2 p) const {
  if (!in_bounds(p)) return kNoTerrain;
  const int i = std::min(static_cast<int>(p.x / cell_size_), width_ - 1);
  const int j = std::min(static_cast<int>(p.y / cell_size_), height_ - 1);
  return cell(i, j);
}

double TerrainWorld::traction_at(Vec2 p) const {
  const TerrainId id = terrain_at(p);
  return id == kNoTerrain ? 0.0 : def(id).traction;
}

TerrainWorld parse_world(const std::string& text, std::size_t embedding_dim) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw WorldError("empty world file");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw WorldError(std::string("bad world header: ") + e.what());
  }
  const double cell_size = header.at("cell_size").get<double>();
  const int width = header.at("width").get<int>();
  const int height = header.at("height").get<int>();

  std::vector<TerrainDef> defs;
  for (const auto& jd : header.at("terrain_defs")) {
    TerrainDef d;
    d.name = jd.at("name").get<std::string>();
    const auto sym = jd.at("symbol").get<std::string>();
    if (sym.size() != 1) throw WorldError("terrain symbol must be one character: '" + sym + "'");
    d.symbol = sym[0];
    d.traction = jd.at("traction").get<double>();
    d.feature_noise_std = jd.value("feature_noise_std", 0.0);
    if (jd.contains("color")) {
      const auto c = jd.at("color").get<std::vector<int>>();
      if (c.size() != 3) throw WorldError("color must have three channels");
      d.color = {static_cast<std::uint8_t>(c[0]), static_cast<std::uint8_t>(c[1]), static_cast<std::uint8_t>(c[2])};
    }
    if (jd.contains("feature_prototype")) {
      d.feature_prototype = jd.at("feature_prototype").get<std::vector<float>>();
      if (d.feature_prototype.size() != embedding_dim)
        throw WorldError("prototype of '" + d.name + "' does not match embedding dimension");
    } else {
      if (defs.size() >= embedding_dim) throw WorldError("embedding dimension smaller than terrain count");
      d.feature_prototype.assign(embedding_dim, 0.0f);
      d.feature_prototype[defs.size()] = static_cast<float>(std::sqrt(2.0));
    }
    defs.push_back(std::move(d));
  }

  std::vector<TerrainId> cells(static_cast<std::size_t>(width) * height);
  for (int row = 0; row < height; ++row) {
    if (!std::getline(in, line)) throw WorldError("world grid truncated at row " + std::to_string(row));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (static_cast<int>(line.size()) != width)
      throw WorldError("world row " + std::to_string(row) + " has " + std::to_string(line.size()) + " cells");
    const int j = height - 1 - row;
    for (int i = 0; i < width; ++i) {
      auto it = std::find_if(defs.begin(), defs.end(), [&](const TerrainDef& d) { return d.symbol == line[i]; });
      if (it == defs.end()) throw WorldError(std::string("unknown terrain symbol '") + line[i] + "'");
      cells[static_cast<std::size_t>(j) * width + i] = static_cast<TerrainId>(it - defs.begin());
    }
  }
  return TerrainWorld(cell_size, width, height, std::move(defs), std::move(cells));
}

TerrainWorld load_world(const std::filesystem::path& path, std::size_t embedding_dim) {
  std::ifstream f(path);
  if (!f) throw WorldError("cannot open world file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_world(ss.str(), embedding_dim);
}

std::string format_world(const TerrainWorld& world) {
  json header;
  header["cell_size"] = world.cell_size();
  header["width"] = world.width();
  header["height"] = world.height();
  header["terrain_defs"] = json::array();
  for (const auto& d : world.terrain_defs()) {
    header["terrain_defs"].push_back({{"name", d.name},
                                      {"symbol", std::string(1, d.symbol)},
                                      {"traction", d.traction},
                                      {"feature_noise_std", d.feature_noise_std},
                                      {"color", {d.color.r, d.color.g, d.color.b}},
                                      {"feature_prototype", d.feature_prototype}});
  }
  std::string out = header.dump() + "\n";
  for (int j = world.height() - 1; j >= 0; --j) {
    for (int i = 0; i < world.width(); ++i) out += world.def(world.cell(i, j)).symbol;
    out += '\n';
  }
  return out;
}

TerrainWorld with_feature_noise(TerrainWorld world, double noise_std) {
  auto defs = world.terrain_defs();
  for (auto& d : defs) d.feature_noise_std = noise_std;
  std::vector<TerrainId> cells;
  cells.reserve(static_cast<std::size_t>(world.width()) * world.height());
  for (int j = 0; j < world.height(); ++j)
    for (int i = 0; i < world.width(); ++i) cells.push_back(world.cell(i, j));
  return TerrainWorld(world.cell_size(), world.width(), world.height(), std::move(defs), std::move(cells));
}

TwistCommand TwistCommand::clamped(const TwistLimits& limits) const {
  TwistCommand out = *this;
  const double speed = std::hypot(vx, vy);
  if (speed > limits.max_linear && speed > 0.0) {
    const double s = limits.max_linear / speed;
    out.vx *= s;
    out.vy *= s;
  }
  out.wz = std::clamp(wz, -limits.max_angular, limits.max_angular);
  return out;
}

namespace {

double footprint_traction(const TerrainWorld& world, const RobotState& state) {
  // 5x5 samples over the body rectangle
  constexpr int kSamples = 5;
  double acc = 0.0;
  for (int a = 0; a < kSamples; ++a) {
    for (int b = 0; b < kSamples; ++b) {
      const double u = (a + 0.5) / kSamples * 2.0 - 1.0;
      const double v = (b + 0.5) / kSamples * 2.0 - 1.0;
      acc += world.traction_at(state.pose.apply({u * state.footprint_half_extents.x, v * state.footprint_half_extents.y}));
    }
  }
  return acc / (kSamples * kSamples);
}

}  // namespace

RobotState step_robot(const TerrainWorld& world, const RobotState& state, const TwistCommand& cmd, double dt,
                      const StepOptions& opts, std::mt19937_64* noise_rng) {
  if (!cmd.finite()) throw std::invalid_argument("twist command is not finite");
  if (!(dt > 0.0)) throw std::invalid_argument("step dt must be positive");

  const double traction = opts.footprint_traction ? footprint_traction(world, state)
                                                  : world.traction_at(state.pose.translation());
  const Vec2 realized{cmd.vx * traction, cmd.vy * traction};

  RobotState next = state;
  const double c = std::cos(state.pose.theta);
  const double s = std::sin(state.pose.theta);
  next.pose.x += (c * realized.x - s * realized.y) * dt;
  next.pose.y += (s * realized.x + c * realized.y) * dt;
  next.pose.theta = wrap_angle(state.pose.theta + cmd.wz * dt);

  // keep the centroid strictly inside the last cell
  const double margin = 1e-9;
  next.pose.x = std::clamp(next.pose.x, 0.0, world.extent_x() - margin);
  next.pose.y = std::clamp(next.pose.y, 0.0, world.extent_y() - margin);

  next.measured_velocity = realized;
  if (noise_rng != nullptr && opts.velocity_noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, opts.velocity_noise_std);
    next.measured_velocity.x += noise(*noise_rng);
    next.measured_velocity.y += noise(*noise_rng);
  }
  return next;
}

Polygon footprint_polygon(const RobotState& state) {
  const double hl = state.footprint_half_extents.x;
  const double hw = state.footprint_half_extents.y;
  return {state.pose.apply({-hl, -hw}), state.pose.apply({hl, -hw}), state.pose.apply({hl, hw}),
          state.pose.apply({-hl, hw})};
}

void CameraModel::validate() const {
  if (!(far_range > near_range && near_range > 0.0)) throw std::invalid_argument("camera ranges must satisfy far > near > 0");
  if (!(near_width > 0.0 && far_width > 0.0)) throw std::invalid_argument("camera widths must be positive");
  if (height <= 0 || width <= 0) throw std::invalid_argument("camera image size must be positive");
}

Vec2 CameraModel::pixel_to_camera(int row, int col) const {
  const double t = 1.0 - (row + 0.5) / height;
  const double u = (col + 0.5) / width;
  const double half = 0.5 * (near_width + t * (far_width - near_width));
  return {near_range + t * (far_range - near_range), half * (1.0 - 2.0 * u)};
}

Vec2 CameraModel::camera_to_pixel(Vec2 p) const {
  const double t = (p.x - near_range) / (far_range - near_range);
  const double half = 0.5 * (near_width + t * (far_width - near_width));
  const double u = 0.5 * (1.0 - p.y / half);
  return {(1.0 - t) * height - 0.5, u * width - 0.5};
}

Polygon CameraModel::window_in_world(const Pose2& robot_pose) const {
  const Pose2 cam = robot_pose.compose(mount);
  return {cam.apply({near_range, -0.5 * near_width}), cam.apply({far_range, -0.5 * far_width}),
          cam.apply({far_range, 0.5 * far_width}), cam.apply({near_range, 0.5 * near_width})};
}

std::vector<Vec2> camera_pixel_to_world(const CameraModel& cam, const Pose2& robot_pose) {
  cam.validate();
  const Pose2 cam_pose = robot_pose.compose(cam.mount);
  std::vector<Vec2> out(static_cast<std::size_t>(cam.height) * cam.width);
  for (int r = 0; r < cam.height; ++r)
    for (int c = 0; c < cam.width; ++c)
      out[static_cast<std::size_t>(r) * cam.width + c] = cam_pose.apply(cam.pixel_to_camera(r, c));
  return out;
}

Observation render_camera(const TerrainWorld& world, const RobotState& state, const CameraModel& cam,
                          double timestamp) {
  Observation obs;
  obs.camera_id = cam.camera_id;
  obs.timestamp = timestamp;
  obs.robot_pose = state.pose;
  obs.height = cam.height;
  obs.width = cam.width;
  obs.pixel_to_world = camera_pixel_to_world(cam, state.pose);
  obs.color.resize(obs.pixel_to_world.size());
  obs.gt_terrain.resize(obs.pixel_to_world.size());
  for (std::size_t i = 0; i < obs.pixel_to_world.size(); ++i) {
    const TerrainId id = world.terrain_at(obs.pixel_to_world[i]);
    obs.gt_terrain[i] = id;
    obs.color[i] = id == kNoTerrain ? Rgb{} : world.def(id).color;
  }
  return obs;
}

}  // namespace travlearn
