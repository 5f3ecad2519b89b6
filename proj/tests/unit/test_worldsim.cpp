#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "travlearn/supervision.hpp"

using namespace travlearn;
using testutil::split_world;
using testutil::uniform_world;

TEST_CASE("step_robot: traction examples") {
  StepOptions quiet{0.0, false};
  RobotState s;
  s.pose = {5.0, 5.0, 0.0};

  SUBCASE("identity traction") {
    const auto w = uniform_world(1.0);
    const auto n = step_robot(w, s, {1.0, 0.0, 0.0}, 0.1, quiet, nullptr);
    CHECK(n.pose.x == doctest::Approx(5.1).epsilon(1e-15));
    CHECK(n.pose.y == 5.0);
    CHECK(n.measured_velocity == Vec2{1.0, 0.0});
  }
  SUBCASE("zero traction") {
    const auto w = uniform_world(0.0);
    const auto n = step_robot(w, s, {1.0, 0.0, 0.0}, 0.1, quiet, nullptr);
    CHECK(n.pose.translation() == s.pose.translation());
    CHECK(n.measured_velocity == Vec2{0.0, 0.0});
  }
  SUBCASE("half traction feeds a velocity error of 0.125") {
    const auto w = uniform_world(0.5);
    const auto n = step_robot(w, s, {1.0, 0.0, 0.0}, 0.1, quiet, nullptr);
    CHECK(n.measured_velocity == Vec2{0.5, 0.0});
    CHECK(velocity_error({1.0, 0.0}, n.measured_velocity) == 0.125);
  }
}

TEST_CASE("step_robot rejects non-finite commands") {
  const auto w = uniform_world(1.0);
  RobotState s;
  s.pose = {5.0, 5.0, 0.0};
  CHECK_THROWS_AS(step_robot(w, s, {NAN, 0.0, 0.0}, 0.1, {}, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(step_robot(w, s, {0.0, 0.0, INFINITY}, 0.1, {}, nullptr), std::invalid_argument);
}

TEST_CASE("step_robot conserves displacement on full traction") {
  const auto w = uniform_world(1.0, 8, 40.0);
  RobotState s;
  s.pose = {2.0, 3.0, 0.3};
  const TwistCommand cmd{0.7, -0.2, 0.0};
  const int n = 200;
  const double dt = 0.05;
  for (int i = 0; i < n; ++i) s = step_robot(w, s, cmd, dt, {0.0, false}, nullptr);
  const double c = std::cos(0.3), sn = std::sin(0.3);
  CHECK(s.pose.x == doctest::Approx(2.0 + (c * 0.7 + sn * 0.2) * n * dt).epsilon(1e-12));
  CHECK(s.pose.y == doctest::Approx(3.0 + (sn * 0.7 - c * 0.2) * n * dt).epsilon(1e-12));
}

TEST_CASE("step_robot is deterministic under a seed") {
  const auto w = uniform_world(0.8);
  std::mt19937_64 a(42), b(42);
  RobotState sa, sb;
  sa.pose = sb.pose = {5.0, 5.0, 0.0};
  for (int i = 0; i < 100; ++i) {
    sa = step_robot(w, sa, {1.0, 0.0, 0.2}, 0.05, {}, &a);
    sb = step_robot(w, sb, {1.0, 0.0, 0.2}, 0.05, {}, &b);
  }
  CHECK(sa.pose == sb.pose);
  CHECK(sa.measured_velocity == sb.measured_velocity);
}

TEST_CASE("footprint_polygon") {
  RobotState s;
  s.footprint_half_extents = {0.5, 0.25};
  const auto p0 = footprint_polygon(s);
  REQUIRE(p0.size() == 4);
  CHECK(p0[0] == Vec2{-0.5, -0.25});
  CHECK(p0[1] == Vec2{0.5, -0.25});
  CHECK(p0[2] == Vec2{0.5, 0.25});
  CHECK(p0[3] == Vec2{-0.5, 0.25});

  SUBCASE("quarter turn rotates the vertices") {
    s.pose.theta = M_PI / 2;
    const auto p = footprint_polygon(s);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(p[i].x == doctest::Approx(-p0[i].y));
      CHECK(p[i].y == doctest::Approx(p0[i].x));
    }
  }
  SUBCASE("general pose is rotate then translate") {
    s.pose = {3.0, 4.0, M_PI / 4};
    const auto p = footprint_polygon(s);
    const double c = std::cos(M_PI / 4), sn = std::sin(M_PI / 4);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(p[i].x == doctest::Approx(3.0 + c * p0[i].x - sn * p0[i].y));
      CHECK(p[i].y == doctest::Approx(4.0 + sn * p0[i].x + c * p0[i].y));
    }
  }
  SUBCASE("area is pose invariant") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-50, 50), th(-M_PI, M_PI);
    for (int k = 0; k < 100; ++k) {
      s.pose = {u(rng), u(rng), th(rng)};
      CHECK(polygon_area(footprint_polygon(s)) == doctest::Approx(0.5));
    }
  }
}

TEST_CASE("render_camera geometry") {
  CameraModel cam;
  RobotState st;

  SUBCASE("image centre lies on the centreline, ahead of the robot") {
    cam.width = 63;  // odd, so there is a centre column
    st.pose = {10.0, 10.0, 0.0};
    const auto p = camera_pixel_to_world(cam, st.pose);
    const Vec2 c = p[static_cast<std::size_t>(cam.height / 2) * cam.width + cam.width / 2];
    CHECK(c.y == doctest::Approx(10.0));
    CHECK(c.x > 10.0);
  }
  SUBCASE("uniform world gives a constant raster") {
    const auto w = uniform_world(1.0);
    st.pose = {10.0, 10.0, 0.7};
    const auto obs = render_camera(w, st, cam);
    for (auto id : obs.gt_terrain) CHECK(id == 0);
  }
  SUBCASE("straight boundary where the inverse mapping puts it") {
    const auto w = split_world(5.0);
    st.pose = {2.0, 10.0, 0.0};  // window spans x in [2.4, 6.0]
    const auto obs = render_camera(w, st, cam);
    const double boundary_row = cam.camera_to_pixel({5.0 - 2.0, 0.0}).x;
    const int last_far_row = static_cast<int>(std::floor(boundary_row));
    for (int r = 0; r < cam.height; ++r)
      for (int c = 0; c < cam.width; ++c) CHECK(obs.gt_terrain[obs.index(r, c)] == (r <= last_far_row ? 1 : 0));
  }
  SUBCASE("every valid pixel lies inside the window") {
    const auto w = uniform_world(1.0);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(5, 15), th(-M_PI, M_PI);
    for (int k = 0; k < 20; ++k) {
      st.pose = {u(rng), u(rng), th(rng)};
      const auto obs = render_camera(w, st, cam);
      const auto win = cam.window_in_world(st.pose);
      for (std::size_t i = 0; i < obs.pixel_to_world.size(); ++i)
        if (obs.valid(i)) CHECK(point_in_convex(win, obs.pixel_to_world[i]));
    }
  }
  SUBCASE("window fully outside the world is all invalid") {
    const auto w = uniform_world(1.0);
    st.pose = {-30.0, -30.0, 0.0};
    const auto obs = render_camera(w, st, cam);
    for (std::size_t i = 0; i < obs.gt_terrain.size(); ++i) CHECK_FALSE(obs.valid(i));
  }
  SUBCASE("pixel <-> camera mapping round-trips") {
    for (int r = 0; r < cam.height; r += 7)
      for (int c = 0; c < cam.width; c += 5) {
        const Vec2 back = cam.camera_to_pixel(cam.pixel_to_camera(r, c));
        CHECK(back.x == doctest::Approx(r));
        CHECK(back.y == doctest::Approx(c));
      }
  }
}

TEST_CASE("world text format round-trips") {
  const std::string text =
      R"({"cell_size":0.5,"width":3,"height":2,"terrain_defs":[{"name":"a","symbol":"a","traction":1.0},)"
      R"({"name":"b","symbol":"b","traction":0.25,"feature_noise_std":0.1}]})"
      "\naab\nbba\n";
  const auto w = parse_world(text, 4);
  CHECK(w.width() == 3);
  CHECK(w.cell(0, 1) == 0);  // first row is the top
  CHECK(w.cell(2, 1) == 1);
  CHECK(w.cell(0, 0) == 1);
  CHECK(w.def(1).traction == 0.25);
  CHECK(w.def(1).feature_prototype[1] == doctest::Approx(std::sqrt(2.0)));
  const auto again = parse_world(format_world(w), 4);
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 3; ++i) CHECK(again.cell(i, j) == w.cell(i, j));
  CHECK(again.def(1).feature_noise_std == 0.1);

  CHECK_THROWS_AS(parse_world(text.substr(0, text.size() - 4), 4), WorldError);
  std::string bad = text;
  bad[bad.size() - 2] = 'z';
  CHECK_THROWS_AS(parse_world(bad, 4), WorldError);
}
