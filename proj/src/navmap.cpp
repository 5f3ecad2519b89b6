#include "travlearn/navmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace travlearn {

namespace {

std::int64_t floor_div(double v, double res) { return static_cast<std::int64_t>(std::floor(v / res)); }

}  // namespace

TravGrid::TravGrid(double size_m, double resolution, Vec2 center) : res_(resolution) {
  if (!(resolution > 0.0) || !(size_m >= resolution) || !std::isfinite(size_m))
    throw std::invalid_argument("grid size and resolution must be positive");
  n_ = static_cast<int>(std::lround(size_m / resolution));
  const auto cells = static_cast<std::size_t>(n_) * n_;
  value_.assign(cells, 0.0f);
  known_.assign(cells, 0);
  updates_.assign(cells, 0);
  origin_i_ = floor_div(center.x, res_) - n_ / 2;
  origin_j_ = floor_div(center.y, res_) - n_ / 2;
}

std::optional<std::pair<int, int>> TravGrid::cell_of(Vec2 world) const {
  if (!std::isfinite(world.x) || !std::isfinite(world.y)) return std::nullopt;
  const std::int64_t i = floor_div(world.x, res_) - origin_i_;
  const std::int64_t j = floor_div(world.y, res_) - origin_j_;
  if (i < 0 || j < 0 || i >= n_ || j >= n_) return std::nullopt;
  return std::pair{static_cast<int>(i), static_cast<int>(j)};
}

Vec2 TravGrid::cell_center(int i, int j) const {
  return {(static_cast<double>(origin_i_ + i) + 0.5) * res_, (static_cast<double>(origin_j_ + j) + 0.5) * res_};
}

void TravGrid::set(int i, int j, float v) {
  if (!in_range(i, j)) throw std::out_of_range("grid cell out of range");
  if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("traversability must be in [0, 1]");
  value_[idx(i, j)] = v;
  known_[idx(i, j)] = 1;
  ++updates_[idx(i, j)];
}

void TravGrid::clear(int i, int j) {
  if (!in_range(i, j)) throw std::out_of_range("grid cell out of range");
  value_[idx(i, j)] = 0.0f;
  known_[idx(i, j)] = 0;
  updates_[idx(i, j)] = 0;
}

int TravGrid::fill_unknown(std::span<const Vec2> ccw_poly, float value) {
  if (ccw_poly.empty()) return 0;
  const Aabb box = bounds_of(ccw_poly);
  const auto lo = cell_of({std::max(box.lo.x, cell_center(0, 0).x), std::max(box.lo.y, cell_center(0, 0).y)});
  const auto hi = cell_of({std::min(box.hi.x, cell_center(n_ - 1, n_ - 1).x),
                           std::min(box.hi.y, cell_center(n_ - 1, n_ - 1).y)});
  if (!lo || !hi) return 0;
  int filled = 0;
  for (int j = lo->second; j <= hi->second; ++j)
    for (int i = lo->first; i <= hi->first; ++i)
      if (!known(i, j) && point_in_convex(ccw_poly, cell_center(i, j))) {
        set(i, j, value);
        ++filled;
      }
  return filled;
}

void TravGrid::recenter(Vec2 center) {
  const std::int64_t ni = floor_div(center.x, res_) - n_ / 2;
  const std::int64_t nj = floor_div(center.y, res_) - n_ / 2;
  const std::int64_t di = ni - origin_i_;
  const std::int64_t dj = nj - origin_j_;
  if (di == 0 && dj == 0) return;
  const auto cells = static_cast<std::size_t>(n_) * n_;
  std::vector<float> value(cells, 0.0f);
  std::vector<std::uint8_t> known(cells, 0);
  std::vector<std::uint32_t> updates(cells, 0);
  for (int j = 0; j < n_; ++j) {
    const std::int64_t oj = j + dj;
    if (oj < 0 || oj >= n_) continue;
    for (int i = 0; i < n_; ++i) {
      const std::int64_t oi = i + di;
      if (oi < 0 || oi >= n_) continue;
      const std::size_t src = static_cast<std::size_t>(oj) * n_ + static_cast<std::size_t>(oi);
      value[idx(i, j)] = value_[src];
      known[idx(i, j)] = known_[src];
      updates[idx(i, j)] = updates_[src];
    }
  }
  value_ = std::move(value);
  known_ = std::move(known);
  updates_ = std::move(updates);
  origin_i_ = ni;
  origin_j_ = nj;
}

void fuse_traversability(TravGrid& grid, const TraversabilityImage& image, std::span<const Vec2> pixel_to_world,
                         double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("fusion alpha must be in (0, 1]");
  const std::size_t n = static_cast<std::size_t>(image.height) * image.width;
  if (image.values.size() != n || pixel_to_world.size() != n)
    throw std::invalid_argument("traversability image and pixel mapping disagree in size");
  const auto cells = static_cast<std::size_t>(grid.n_) * grid.n_;
  std::vector<double> sum(cells, 0.0);
  std::vector<std::uint32_t> count(cells, 0);
  for (std::size_t p = 0; p < n; ++p) {
    if (!image.valid.empty() && !image.valid[p]) continue;
    const auto c = grid.cell_of(pixel_to_world[p]);
    if (!c) continue;
    const std::size_t k = grid.idx(c->first, c->second);
    sum[k] += std::clamp(static_cast<double>(image.values[p]), 0.0, 1.0);
    ++count[k];
  }
  for (std::size_t k = 0; k < cells; ++k) {
    if (count[k] == 0) continue;
    const double mean = sum[k] / count[k];
    if (!grid.known_[k]) {
      grid.value_[k] = static_cast<float>(mean);
      grid.known_[k] = 1;
    } else {
      const double old = grid.value_[k];
      const double blended = alpha * mean + (1.0 - alpha) * old;
      grid.value_[k] = static_cast<float>(std::clamp(blended, std::min(old, mean), std::max(old, mean)));
    }
    ++grid.updates_[k];
  }
}

namespace {

constexpr std::int64_t kNoSite = std::numeric_limits<std::int64_t>::max();

// One-dimensional squared distance transform over integer sample costs, exact:
// parabola intersections are compared by cross-multiplication, never divided.
void edt_1d(const std::int64_t* f, std::int64_t* out, int n, std::vector<int>& v) {
  v.clear();
  auto ge_intersection = [&](int a, int b, int c) {
    // true when intersection(c, b) <= intersection(b, a) for a < b < c
    const std::int64_t nb_a = (f[b] + std::int64_t{b} * b) - (f[a] + std::int64_t{a} * a);
    const std::int64_t db_a = 2 * std::int64_t{b - a};
    const std::int64_t nc_b = (f[c] + std::int64_t{c} * c) - (f[b] + std::int64_t{b} * b);
    const std::int64_t dc_b = 2 * std::int64_t{c - b};
    return nc_b * db_a <= nb_a * dc_b;
  };
  for (int q = 0; q < n; ++q) {
    if (f[q] == kNoSite) continue;
    while (v.size() >= 2 && ge_intersection(v[v.size() - 2], v.back(), q)) v.pop_back();
    v.push_back(q);
  }
  if (v.empty()) {
    std::fill(out, out + n, kNoSite);
    return;
  }
  std::size_t k = 0;
  auto cost = [&](int q, int site) { return std::int64_t{q - site} * (q - site) + f[site]; };
  for (int q = 0; q < n; ++q) {
    while (k + 1 < v.size() && cost(q, v[k + 1]) <= cost(q, v[k])) ++k;
    out[q] = cost(q, v[k]);
  }
}

}  // namespace

std::vector<double> squared_distance_transform(std::span<const std::uint8_t> obstacle, int nx, int ny) {
  if (nx <= 0 || ny <= 0 || obstacle.size() != static_cast<std::size_t>(nx) * ny)
    throw std::invalid_argument("obstacle raster has the wrong size");
  std::vector<std::int64_t> g(obstacle.size());
  std::vector<int> v;
  v.reserve(static_cast<std::size_t>(std::max(nx, ny)));
  // columns (along y) first
  std::vector<std::int64_t> f(static_cast<std::size_t>(ny)), out(static_cast<std::size_t>(std::max(nx, ny)));
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) f[j] = obstacle[static_cast<std::size_t>(j) * nx + i] ? 0 : kNoSite;
    edt_1d(f.data(), out.data(), ny, v);
    for (int j = 0; j < ny; ++j) g[static_cast<std::size_t>(j) * nx + i] = out[j];
  }
  std::vector<double> d(obstacle.size());
  for (int j = 0; j < ny; ++j) {
    std::int64_t* row = g.data() + static_cast<std::size_t>(j) * nx;
    edt_1d(row, out.data(), nx, v);
    for (int i = 0; i < nx; ++i)
      d[static_cast<std::size_t>(j) * nx + i] =
          out[i] == kNoSite ? std::numeric_limits<double>::infinity() : static_cast<double>(out[i]);
  }
  return d;
}

SdfGrid compute_sdf(const TravGrid& grid, double tau_thr, const SdfParams& params) {
  if (!(params.cap > 0.0)) throw std::invalid_argument("SDF cap must be positive");
  const int n = grid.cells();
  SdfGrid sdf;
  sdf.cells = n;
  sdf.resolution = grid.resolution();
  sdf.origin = grid.origin();
  std::vector<std::uint8_t> obstacle(static_cast<std::size_t>(n) * n);
  std::size_t n_obstacle = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const bool obs = grid.known(i, j) ? grid.value(i, j) < tau_thr : params.unknown_is_obstacle;
      obstacle[static_cast<std::size_t>(j) * n + i] = obs ? 1 : 0;
      n_obstacle += obs ? 1 : 0;
    }
  sdf.all_obstacle = n_obstacle == obstacle.size();
  sdf.distance.assign(obstacle.size(), 0.0);
  if (sdf.all_obstacle) return sdf;
  const auto d2 = squared_distance_transform(obstacle, n, n);
  for (std::size_t k = 0; k < d2.size(); ++k)
    sdf.distance[k] = std::isinf(d2[k]) ? params.cap : std::min(params.cap, std::sqrt(d2[k]) * sdf.resolution);
  return sdf;
}

double SdfGrid::sample(Vec2 world) const {
  if (cells == 0) return 0.0;
  // continuous cell coordinates with cell centres at integers
  const double gx = std::clamp((world.x - origin.x) / resolution - 0.5, 0.0, cells - 1.0);
  const double gy = std::clamp((world.y - origin.y) / resolution - 0.5, 0.0, cells - 1.0);
  const int i0 = std::min(static_cast<int>(gx), cells - 1);
  const int j0 = std::min(static_cast<int>(gy), cells - 1);
  const int i1 = std::min(i0 + 1, cells - 1);
  const int j1 = std::min(j0 + 1, cells - 1);
  const double tx = gx - i0;
  const double ty = gy - j0;
  return (1 - ty) * ((1 - tx) * at(i0, j0) + tx * at(i1, j0)) + ty * ((1 - tx) * at(i0, j1) + tx * at(i1, j1));
}

Vec2 SdfGrid::gradient(Vec2 world) const {
  const double h = resolution;
  return {(sample({world.x + h, world.y}) - sample({world.x - h, world.y})) / (2 * h),
          (sample({world.x, world.y + h}) - sample({world.x, world.y - h})) / (2 * h)};
}

PlanResult plan_twist(const SdfGrid& sdf, Vec2 goal, const RobotState& state, const PlannerParams& p,
                      PlannerMemory* memory) {
  if (!std::isfinite(goal.x) || !std::isfinite(goal.y)) throw std::invalid_argument("planner goal must be finite");
  if (memory && memory->goal != goal) *memory = PlannerMemory{goal, 0};
  PlanResult out;
  const Vec2 pos = state.pose.translation();
  const Vec2 to_goal = goal - pos;
  const double dist = to_goal.norm();
  if (dist <= p.goal_tolerance) {
    out.at_goal = true;
    return out;
  }
  const double d = sdf.sample(pos);
  Vec2 grad = sdf.gradient(pos);
  const double gnorm = grad.norm();
  const Vec2 ghat = gnorm > 1e-9 ? grad * (1.0 / gnorm) : Vec2{};

  if (d <= 0.0 || sdf.all_obstacle) {
    out.escaping = true;
    const Vec2 dir = gnorm > 1e-9 ? ghat : to_goal * (1.0 / dist);
    const Vec2 local = Pose2{0.0, 0.0, state.pose.theta}.inverse_apply(dir);
    out.twist = TwistCommand{p.escape_speed * local.x, p.escape_speed * local.y, 0.0}.clamped(p.limits);
    return out;
  }

  const Vec2 attract = to_goal * (p.k_attract / dist);
  Vec2 force = attract;
  const double clearance = d - p.robot_radius;
  if (d < p.influence_distance && gnorm > 1e-9) {
    // repulsion grows as the clearance shrinks, zero at the influence boundary
    const double s = std::clamp((p.influence_distance - d) / std::max(p.influence_distance - p.robot_radius, 1e-6),
                                0.0, 1.0);
    force = force + ghat * (p.k_repulse * s * s / std::max(clearance / p.influence_distance, 0.05));
    // slide along the obstacle boundary when the goal lies behind it
    if (attract.dot(ghat) < 0.0) {
      Vec2 t{-ghat.y, ghat.x};
      int sign = memory ? memory->tangent_sign : 0;
      if (sign == 0) sign = t.dot(attract) < 0.0 ? -1 : 1;
      if (memory) memory->tangent_sign = sign;
      force = force + t * (p.k_tangent * s * sign);
    }
  } else if (memory) {
    memory->tangent_sign = 0;
  }

  const double heading = std::atan2(force.y, force.x);
  double err = wrap_angle(heading - state.pose.theta);
  if (std::abs(err) < p.heading_deadband) err = 0.0;
  const double align = std::max(0.0, std::cos(err));
  const double approach = std::min(1.0, dist / p.slowdown_distance);
  // slow down only as far as the heading closes on the nearest obstacle
  const double closing = d < p.influence_distance ? std::max(0.0, -std::cos(heading - std::atan2(ghat.y, ghat.x))) : 0.0;
  const double clear = 1.0 - closing * (1.0 - std::clamp(clearance / p.influence_distance, 0.15, 1.0));
  const double speed = p.limits.max_linear * std::min(1.0, force.norm() / p.k_attract);
  out.twist = TwistCommand{speed * align * align * std::max(approach, 0.25) * clear, 0.0, p.k_heading * err}.clamped(
      p.limits);
  return out;
}

std::optional<Vec2> spawn_carrot(const TravGrid& grid, const RobotState& state, const CameraModel& camera,
                                 double tau_thr) {
  const Polygon window = camera.window_in_world(state.pose);
  const Vec2 pos = state.pose.translation();
  const double res = grid.resolution();
  const Aabb box = bounds_of(window);
  auto corridor_ok = [&](Vec2 target) {
    const Vec2 delta = target - pos;
    const double len = delta.norm();
    const int steps = std::max(1, static_cast<int>(std::ceil(len / (0.5 * res))));
    for (int s = 0; s <= steps; ++s) {
      const Vec2 q = pos + delta * (static_cast<double>(s) / steps);
      const auto c = grid.cell_of(q);
      if (!c) return false;
      if (!grid.known(c->first, c->second)) {
        // the strip between the robot and the near edge of the view may be unseen
        if ((q - pos).norm() <= camera.near_range + res) continue;
        return false;
      }
      if (grid.value(c->first, c->second) < tau_thr) return false;
    }
    return true;
  };
  std::optional<Vec2> best;
  double best_dist = -1.0;
  for (int j = 0; j < grid.cells(); ++j)
    for (int i = 0; i < grid.cells(); ++i) {
      const Vec2 c = grid.cell_center(i, j);
      if (c.x < box.lo.x || c.x > box.hi.x || c.y < box.lo.y || c.y > box.hi.y) continue;
      if (!grid.known(i, j) || grid.value(i, j) < tau_thr || !point_in_convex(window, c)) continue;
      const double dist = (c - pos).norm();
      if (dist <= best_dist) continue;
      if (!corridor_ok(c)) continue;
      best = c;
      best_dist = dist;
    }
  return best;
}

void dump_grid_image(const std::filesystem::path& pgm_path, std::span<const double> values, int cells,
                     double resolution, Vec2 origin, double lo, double hi) {
  if (values.size() != static_cast<std::size_t>(cells) * cells) throw std::invalid_argument("grid dump size mismatch");
  if (!(hi > lo)) throw std::invalid_argument("grid dump range is empty");
  std::ofstream out(pgm_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + pgm_path.string());
  out << "P5\n" << cells << ' ' << cells << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(cells));
  // top image row is the largest y
  for (int j = cells - 1; j >= 0; --j) {
    for (int i = 0; i < cells; ++i) {
      const double v = values[static_cast<std::size_t>(j) * cells + i];
      row[i] = std::isfinite(v)
                   ? static_cast<unsigned char>(1 + std::lround(254.0 * std::clamp((v - lo) / (hi - lo), 0.0, 1.0)))
                   : 0;
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  nlohmann::json meta{{"cells", cells},       {"resolution", resolution}, {"origin", {origin.x, origin.y}},
                      {"value_min", lo},      {"value_max", hi},          {"unknown_pixel", 0},
                      {"pixel_min", 1},       {"pixel_max", 255},         {"row_order", "y_descending"}};
  auto sidecar = pgm_path;
  sidecar.replace_extension(".json");
  std::ofstream js(sidecar);
  if (!js) throw std::runtime_error("cannot write " + sidecar.string());
  js << meta.dump(2) << '\n';
}

void dump_trav_grid(const std::filesystem::path& pgm_path, const TravGrid& grid) {
  const int n = grid.cells();
  std::vector<double> v(static_cast<std::size_t>(n) * n, std::numeric_limits<double>::quiet_NaN());
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (grid.known(i, j)) v[static_cast<std::size_t>(j) * n + i] = grid.value(i, j);
  dump_grid_image(pgm_path, v, n, grid.resolution(), grid.origin(), 0.0, 1.0);
}

void dump_sdf(const std::filesystem::path& pgm_path, const SdfGrid& sdf) {
  const double hi = sdf.distance.empty() ? 1.0 : std::max(1e-9, *std::max_element(sdf.distance.begin(), sdf.distance.end()));
  dump_grid_image(pgm_path, sdf.distance, sdf.cells, sdf.resolution, sdf.origin, 0.0, hi);
}

}  // namespace travlearn
