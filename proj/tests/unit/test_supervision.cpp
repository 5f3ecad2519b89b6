#include <doctest.h>

#include <random>

#include "travlearn/supervision.hpp"

using namespace travlearn;

namespace {

// 10 x 10 frame looking at x in [1, 2), y in [-0.5, 0.5) from the origin; segment 0
// holds the pixels with y < 0, segment 1 those with y >= 0
FeatureFramePtr strip_frame(Pose2 pose = {}) {
  auto f = std::make_shared<FeatureFrame>();
  f->height = 10;
  f->width = 10;
  f->robot_pose = pose;
  f->segments = {10, 10, 2, std::vector<std::int32_t>(100)};
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 10; ++c) {
      const std::size_t p = static_cast<std::size_t>(r) * 10 + c;
      const Vec2 local{1.05 + 0.1 * r, -0.45 + 0.1 * c};
      f->pixel_to_world.push_back(pose.apply(local));
      f->valid.push_back(1);
      f->segments.labels[p] = local.y < 0.0 ? 0 : 1;
    }
  for (int s = 0; s < 2; ++s) f->segment_set.segments.push_back({s, std::vector<double>(4, s), 50, 0});
  return f;
}

SupervisionNode box_node(double t, Vec2 centre, Vec2 half, double score) {
  const Pose2 pose{centre.x, centre.y, 0.0};
  return {t,
          pose,
          {pose.apply({-half.x, -half.y}), pose.apply({half.x, -half.y}), pose.apply({half.x, half.y}),
           pose.apply({-half.x, half.y})},
          score};
}

}  // namespace

TEST_CASE("velocity error") {
  CHECK(velocity_error({0.3, -0.2}, {0.3, -0.2}) == 0.0);
  CHECK(velocity_error({1, 0}, {0, 0}) == 0.5);
  CHECK(velocity_error({1, 1}, {0, 0}) == 1.0);
}

TEST_CASE("Kalman smoothing") {
  SUBCASE("converges to a constant input") {
    KalmanState s;
    for (int i = 0; i < 100; ++i) s = kalman_smooth(s, 0.7, 1e-4, 1e-2);
    CHECK(std::abs(s.estimate - 0.7) < 1e-3);
  }
  SUBCASE("r -> 0 follows the measurement in one step") {
    const auto s = kalman_smooth({0.0, 1.0}, 0.42, 1e-4, 1e-15);
    CHECK(s.estimate == doctest::Approx(0.42).epsilon(1e-12));
  }
  SUBCASE("q = 0 and large r barely move") {
    KalmanState s{0.0, 1e-3};
    const auto n = kalman_smooth(s, 1.0, 0.0, 1e3);
    const double gain = 1e-3 / (1e-3 + 1e3);
    CHECK(n.estimate == doctest::Approx(gain));
    CHECK(n.estimate < 1e-5);
  }
  SUBCASE("posterior variance is positive and settles monotonically") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> lq(-6, -2), lr(-4, 0), z(0, 1);
    for (int run = 0; run < 1000; ++run) {
      const double q = std::pow(10.0, lq(rng)), r = std::pow(10.0, lr(rng));
      KalmanState s;
      s = kalman_smooth(s, z(rng), q, r);
      double prev = s.variance;
      for (int k = 0; k < 50; ++k) {
        s = kalman_smooth(s, z(rng), q, r);
        CHECK(s.variance > 0.0);
        CHECK(s.variance <= prev * (1.0 + 1e-12));
        prev = s.variance;
      }
    }
  }
}

TEST_CASE("traversability score") {
  ScoreParams p;
  CHECK(traversability_score(p.v_thr, p) == doctest::Approx(0.5).epsilon(1e-15));
  ScoreParams q{10.0, 0.3, 1e-4, 1e-2};
  CHECK(traversability_score(0.0, q) == doctest::Approx(0.95257).epsilon(1e-5));
  CHECK(traversability_score(1e6, p) == doctest::Approx(0.0));
  double prev = traversability_score(0.0, p);
  CHECK(prev <= logistic(p.k * p.v_thr));
  for (double v = 0.01; v < 3.0; v += 0.01) {
    const double s = traversability_score(v, p);
    CHECK(s < prev);
    CHECK(s > 0.0);
    prev = s;
  }
}

TEST_CASE("supervision graph") {
  SUBCASE("ring buffer evicts the oldest") {
    SupervisionGraph g(3, 0.1);
    for (int i = 0; i < 4; ++i) CHECK(g.push(box_node(i, {0.2 * i, 0}, {0.1, 0.1}, 1.0)) == PushResult::added);
    CHECK(g.size() == 3);
    CHECK(g.evicted() == 1);
    CHECK(g.nodes().front().timestamp == 1.0);
  }
  SUBCASE("spacing gate is closed") {
    SupervisionGraph g(10, 0.1);
    g.push(box_node(0, {0, 0}, {0.1, 0.1}, 1));
    CHECK(g.push(box_node(1, {0.05, 0}, {0.1, 0.1}, 1)) == PushResult::rejected_too_close);
    CHECK(g.push(box_node(2, {0.1, 0}, {0.1, 0.1}, 1)) == PushResult::added);
  }
}

TEST_CASE("mission graph") {
  MissionGraph m(0.5);
  CHECK(m.maybe_add(strip_frame({0, 0, 0})) != nullptr);
  CHECK(m.maybe_add(strip_frame({0.25, 0, 0})) == nullptr);
  const auto* n = m.maybe_add(strip_frame({1.0, 0, 0}));
  REQUIRE(n != nullptr);
  CHECK(n->labels.size() == 2);
  for (const auto& l : n->labels) CHECK_FALSE(l.traversed);
  CHECK_FALSE(n->valid());
  CHECK(m.size() == 2);
}

TEST_CASE("footprint reprojection") {
  SUBCASE("full cover at 0.9") {
    MissionGraph m(0.5);
    m.maybe_add(strip_frame());
    SupervisionGraph s(10, 0.1);
    s.push(box_node(0, {1.5, 0.25}, {0.6, 0.26}, 0.9));
    CHECK(reproject_supervision(m, s, 10.0) == 1);
    const auto& l = m.nodes()[0].labels;
    CHECK_FALSE(l[0].traversed);
    CHECK(l[1].traversed);
    CHECK(l[1].score == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(m.nodes()[0].valid());
  }
  SUBCASE("disjoint track") {
    MissionGraph m(0.5);
    m.maybe_add(strip_frame());
    SupervisionGraph s(10, 0.1);
    s.push(box_node(0, {5.0, 5.0}, {0.3, 0.2}, 1.0));
    reproject_supervision(m, s, 10.0);
    for (const auto& l : m.nodes()[0].labels) CHECK_FALSE(l.traversed);
  }
  SUBCASE("half covered: mean over labelled pixels only") {
    MissionGraph m(0.5);
    m.maybe_add(strip_frame());
    SupervisionGraph s(10, 0.1);
    s.push(box_node(0, {1.25, 0.25}, {0.26, 0.26}, 1.0));  // rows 0..4 of segment 1
    reproject_supervision(m, s, 10.0);
    int labelled = 0;
    for (double v : m.nodes()[0].supervision) labelled += v != kUnlabeled;
    CHECK(labelled == 25);
    CHECK(m.nodes()[0].labels[1].score == 1.0);
  }
  SUBCASE("out of range nodes are untouched") {
    MissionGraph m(0.5);
    m.maybe_add(strip_frame({-20, 0, 0}));
    SupervisionGraph s(10, 0.1);
    s.push(box_node(0, {1.5, 0.25}, {0.6, 0.26}, 0.9));
    CHECK(reproject_supervision(m, s, 10.0) == 0);
  }
  SUBCASE("later nodes win, result within the touching scores, idempotent") {
    MissionGraph m(0.5);
    m.maybe_add(strip_frame());
    SupervisionGraph s(10, 0.05);
    s.push(box_node(0, {1.3, 0.25}, {0.3, 0.26}, 0.2));
    s.push(box_node(1, {1.7, 0.25}, {0.3, 0.26}, 0.8));
    reproject_supervision(m, s, 10.0);
    const auto first = m.nodes()[0].supervision;
    const auto l = m.nodes()[0].labels[1];
    CHECK(l.score >= 0.2);
    CHECK(l.score <= 0.8);
    // the overlap (x in [1.4, 1.6]) belongs to the later node
    CHECK(first[static_cast<std::size_t>(4) * 10 + 7] == 0.8);
    reproject_supervision(m, s, 10.0);
    CHECK(m.nodes()[0].supervision == first);
  }
}
