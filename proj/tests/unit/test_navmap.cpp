#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "travlearn/navmap.hpp"

using namespace travlearn;

#ifndef TRAVLEARN_SOURCE_DIR
#define TRAVLEARN_SOURCE_DIR "."
#endif

namespace {

TraversabilityImage image_of(std::vector<float> values) {
  TraversabilityImage img;
  img.height = 1;
  img.width = static_cast<int>(values.size());
  img.valid.assign(values.size(), 1);
  img.values = std::move(values);
  return img;
}

TravGrid random_grid(std::mt19937_64& rng, int n, double res, double unknown_p = 0.1) {
  TravGrid g(n * res, res, {n * res / 2, n * res / 2});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (u(rng) >= unknown_p) g.set(i, j, static_cast<float>(u(rng)));
  return g;
}

std::vector<double> brute_force_sdf(const TravGrid& g, double thr, const SdfParams& p) {
  const int n = g.cells();
  std::vector<std::pair<int, int>> obstacles;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (g.known(i, j) ? g.value(i, j) < thr : p.unknown_is_obstacle) obstacles.emplace_back(i, j);
  std::vector<double> out(static_cast<std::size_t>(n) * n, p.cap);
  if (obstacles.size() == out.size()) return std::vector<double>(out.size(), 0.0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (auto [oi, oj] : obstacles) best = std::min(best, std::hypot(double(i - oi), double(j - oj)));
      out[static_cast<std::size_t>(j) * n + i] = std::min(p.cap, best * g.resolution());
    }
  return out;
}

}  // namespace

TEST_CASE("fusion") {
  TravGrid g(1.0, 1.0, {0.5, 0.5});
  REQUIRE(g.cells() == 1);
  const std::vector<Vec2> at_cell{{0.5, 0.5}};
  SUBCASE("unknown cells take the new value") {
    fuse_traversability(g, image_of({0.3f}), at_cell, 0.5);
    CHECK(g.value(0, 0) == doctest::Approx(0.3));
  }
  SUBCASE("alpha = 1 overwrites") {
    g.set(0, 0, 0.2f);
    fuse_traversability(g, image_of({0.9f}), at_cell, 1.0);
    CHECK(g.value(0, 0) == doctest::Approx(0.9));
  }
  SUBCASE("old 0, new 1, alpha 0.5") {
    g.set(0, 0, 0.0f);
    fuse_traversability(g, image_of({1.0f}), at_cell, 0.5);
    CHECK(g.value(0, 0) == doctest::Approx(0.5));
  }
  SUBCASE("pixels sharing a cell are averaged first") {
    g.set(0, 0, 0.0f);
    const std::vector<Vec2> both{{0.2, 0.2}, {0.8, 0.8}};
    fuse_traversability(g, image_of({1.0f, 0.0f}), both, 1.0);
    CHECK(g.value(0, 0) == doctest::Approx(0.5));
  }
  SUBCASE("pixels outside the grid are ignored") {
    const std::vector<Vec2> outside{{5.0, 5.0}};
    fuse_traversability(g, image_of({1.0f}), outside, 0.5);
    CHECK_FALSE(g.known(0, 0));
  }
  SUBCASE("alpha out of range") {
    CHECK_THROWS(fuse_traversability(g, image_of({1.0f}), at_cell, 0.0));
    CHECK_THROWS(fuse_traversability(g, image_of({1.0f}), at_cell, 1.5));
  }
}

TEST_CASE("fusion is a convex combination") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    TravGrid g(1.0, 1.0, {0.5, 0.5});
    const float old = static_cast<float>(u(rng));
    g.set(0, 0, old);
    std::vector<float> vals(5);
    for (auto& v : vals) v = static_cast<float>(u(rng));
    const std::vector<Vec2> where(5, Vec2{0.5, 0.5});
    fuse_traversability(g, image_of(vals), where, 0.05 + 0.95 * u(rng));
    const float lo = std::min(old, *std::min_element(vals.begin(), vals.end()));
    const float hi = std::max(old, *std::max_element(vals.begin(), vals.end()));
    CHECK(g.value(0, 0) >= lo - 1e-6f);
    CHECK(g.value(0, 0) <= hi + 1e-6f);
  }
}

TEST_CASE("recenter is shift-equivariant") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto g = random_grid(rng, 20, 0.1);
    const auto before = g;
    const Vec2 c{1.0 + u(rng), 1.0 + u(rng)};
    g.recenter(c);
    for (int j = 0; j < g.cells(); ++j)
      for (int i = 0; i < g.cells(); ++i) {
        const auto src = before.cell_of(g.cell_center(i, j));
        if (!src) {
          CHECK_FALSE(g.known(i, j));
          continue;
        }
        CHECK(g.known(i, j) == before.known(src->first, src->second));
        CHECK(g.value(i, j) == before.value(src->first, src->second));
      }
  }
}

TEST_CASE("signed distance field") {
  SUBCASE("single obstacle, 3x3 at 1 m") {
    TravGrid g(3.0, 1.0, {1.5, 1.5});
    for (int j = 0; j < 3; ++j)
      for (int i = 0; i < 3; ++i) g.set(i, j, 1.0f);
    g.set(1, 1, 0.0f);
    const auto sdf = compute_sdf(g, 0.5);
    CHECK(sdf.at(1, 1) == 0.0);
    CHECK(sdf.at(0, 0) == doctest::Approx(std::sqrt(2.0)));
    CHECK(sdf.at(2, 2) == doctest::Approx(std::sqrt(2.0)));
    CHECK(sdf.at(0, 1) == doctest::Approx(1.0));
  }
  SUBCASE("no obstacles gives the cap everywhere") {
    TravGrid g(2.0, 0.5, {1.0, 1.0});
    for (int j = 0; j < g.cells(); ++j)
      for (int i = 0; i < g.cells(); ++i) g.set(i, j, 1.0f);
    SdfParams p;
    p.cap = 2.5;
    const auto sdf = compute_sdf(g, 0.5, p);
    CHECK_FALSE(sdf.all_obstacle);
    for (double d : sdf.distance) CHECK(d == 2.5);
  }
  SUBCASE("all obstacle is flagged and zero") {
    TravGrid g(1.0, 0.25, {0.5, 0.5});
    const auto sdf = compute_sdf(g, 0.5);
    CHECK(sdf.all_obstacle);
    for (double d : sdf.distance) CHECK(d == 0.0);
  }
  SUBCASE("unknown cells may be treated as free") {
    TravGrid g(1.0, 0.25, {0.5, 0.5});
    g.set(0, 0, 0.0f);
    SdfParams p;
    p.unknown_is_obstacle = false;
    const auto sdf = compute_sdf(g, 0.5, p);
    CHECK(sdf.at(3, 0) == doctest::Approx(0.75));
  }
}

TEST_CASE("distance transform matches the brute-force oracle") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = trial < 30 ? 32 : 64;
    auto g = random_grid(rng, n, 0.1, 0.05);
    SdfParams p;
    p.cap = 100.0;
    const double thr = trial % 2 ? 0.1 : 0.02;  // sparse obstacles
    const auto sdf = compute_sdf(g, thr, p);
    const auto oracle = brute_force_sdf(g, thr, p);
    bool same = true;
    for (std::size_t k = 0; k < oracle.size(); ++k) same = same && std::abs(sdf.distance[k] - oracle[k]) < 1e-12;
    CHECK(same);
  }
}

TEST_CASE("sdf is Lipschitz up to discretisation") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = random_grid(rng, 32, 0.1, 0.0);
    const auto sdf = compute_sdf(g, 0.05);
    const int n = sdf.cells;
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int k = 0; k < 500; ++k) {
      const int ai = pick(rng), aj = pick(rng), bi = pick(rng), bj = pick(rng);
      const double dist = std::hypot(double(ai - bi), double(aj - bj)) * sdf.resolution;
      CHECK(std::abs(sdf.at(ai, aj) - sdf.at(bi, bj)) <= dist + sdf.resolution + 1e-12);
    }
  }
}

TEST_CASE("planner") {
  TravGrid g(6.0, 0.1, {0.0, 0.0});
  for (int j = 0; j < g.cells(); ++j)
    for (int i = 0; i < g.cells(); ++i) g.set(i, j, 1.0f);
  const auto free_sdf = compute_sdf(g, 0.5);
  PlannerParams p;
  RobotState s;

  SUBCASE("goal straight ahead drives forward") {
    const auto r = plan_twist(free_sdf, {2.0, 0.0}, s, p);
    CHECK(r.twist.vx > 0.0);
    CHECK(std::abs(r.twist.vy) < 1e-9);
    CHECK(std::abs(r.twist.wz) < 1e-9);
    CHECK_FALSE(r.at_goal);
  }
  SUBCASE("at goal stops") {
    const auto r = plan_twist(free_sdf, {0.1, 0.1}, s, p);
    CHECK(r.at_goal);
    CHECK(r.twist == TwistCommand{});
  }
  SUBCASE("inside an obstacle escapes along the gradient") {
    for (int j = 0; j < g.cells(); ++j)
      for (int i = 0; i < g.cells(); ++i)
        if (g.cell_center(i, j).x < 0.05) g.set(i, j, 0.0f);
    s.pose = {-0.05, 0.0, 0.0};  // obstacle cell centre
    const auto r = plan_twist(compute_sdf(g, 0.5), {2.0, 0.0}, s, p);
    CHECK(r.escaping);
    CHECK(r.twist.vx > 0.0);
  }
  SUBCASE("non-finite goal is rejected") {
    CHECK_THROWS(plan_twist(free_sdf, {std::nan(""), 0.0}, s, p));
  }
}

TEST_CASE("planner output stays within limits") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<SdfGrid> sdfs;
  for (int k = 0; k < 10; ++k) sdfs.push_back(compute_sdf(random_grid(rng, 40, 0.1, 0.05), 0.15));
  PlannerParams p;
  PlannerMemory memory;
  bool ok = true;
  for (int k = 0; k < 100000; ++k) {
    const auto& sdf = sdfs[k % sdfs.size()];
    RobotState s;
    s.pose = {2.0 + 2.5 * u(rng), 2.0 + 2.5 * u(rng), 4.0 * u(rng)};
    const Vec2 goal{2.0 + 10.0 * u(rng), 2.0 + 10.0 * u(rng)};
    const auto r = plan_twist(sdf, goal, s, p, k % 2 ? &memory : nullptr);
    ok = ok && r.twist.finite() && std::hypot(r.twist.vx, r.twist.vy) <= p.limits.max_linear + 1e-12 &&
         std::abs(r.twist.wz) <= p.limits.max_angular + 1e-12;
  }
  CHECK(ok);
}

TEST_CASE("gap world rollout with a perfect map") {
  const auto world = load_world(TRAVLEARN_SOURCE_DIR "/worlds/gap.world", 8);
  const double thr = 0.5;
  RobotState s;
  s.pose = {2.0, 3.0, 0.0};
  const Vec2 goal{10.0, 9.0};
  PlannerParams p;
  PlannerMemory memory;
  TravGrid grid(10.0, 0.1, s.pose.translation());
  std::mt19937_64 rng(1);
  bool reached = false;
  int hazards = 0;
  for (int tick = 0; tick < 20 * 120 && !reached; ++tick) {
    grid.recenter(s.pose.translation());
    for (int j = 0; j < grid.cells(); ++j)
      for (int i = 0; i < grid.cells(); ++i) {
        const Vec2 c = grid.cell_center(i, j);
        grid.set(i, j, world.in_bounds(c) ? static_cast<float>(world.traction_at(c)) : 0.0f);
      }
    const auto r = plan_twist(compute_sdf(grid, thr), goal, s, p, &memory);
    reached = r.at_goal;
    s = step_robot(world, s, r.twist, 0.05, {}, &rng);
    hazards += world.traction_at(s.pose.translation()) < thr;
  }
  CHECK(reached);
  CHECK(hazards == 0);
}

TEST_CASE("carrot") {
  CameraModel cam;
  RobotState s;
  TravGrid g(12.0, 0.1, {0.0, 0.0});
  const auto window = cam.window_in_world(s.pose);
  auto fill = [&](auto value) {
    for (int j = 0; j < g.cells(); ++j)
      for (int i = 0; i < g.cells(); ++i) g.set(i, j, value(g.cell_center(i, j)));
  };
  // farthest window cell centre satisfying `pred`, by exhaustive scan
  auto farthest = [&](auto pred) {
    double best = -1.0;
    for (int j = 0; j < g.cells(); ++j)
      for (int i = 0; i < g.cells(); ++i) {
        const Vec2 c = g.cell_center(i, j);
        if (point_in_convex(window, c) && pred(c)) best = std::max(best, c.norm());
      }
    return best;
  };

  SUBCASE("fully traversable window reaches the far edge") {
    fill([](Vec2) { return 1.0f; });
    const auto c = spawn_carrot(g, s, cam, 0.5);
    REQUIRE(c);
    CHECK(c->norm() == doctest::Approx(farthest([](Vec2) { return true; })));
    CHECK(c->x > cam.far_range - 0.1);
  }
  SUBCASE("fully untraversable window has none") {
    fill([](Vec2) { return 0.0f; });
    CHECK_FALSE(spawn_carrot(g, s, cam, 0.5));
  }
  SUBCASE("corridor ending at a band stops just before it") {
    fill([](Vec2 c) { return c.x < 2.0 ? 1.0f : 0.0f; });
    const auto c = spawn_carrot(g, s, cam, 0.5);
    REQUIRE(c);
    CHECK(c->x < 2.0);
    CHECK(c->x > 2.0 - 0.1);
    CHECK(c->norm() == doctest::Approx(farthest([](Vec2 q) { return q.x < 2.0; })));
  }
}
