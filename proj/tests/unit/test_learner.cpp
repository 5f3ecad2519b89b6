#include <doctest.h>

#include <filesystem>
#include <random>

#include "../support/gradcheck.hpp"
#include "travlearn/learner.hpp"

using namespace travlearn;

namespace {

// Mission graph with hand-set labels: traversable embeddings near +a, others near -a.
MissionGraph frozen_graph(std::uint64_t seed, int nodes = 12, int segments = 16, int dim = 8,
                          double spread = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, spread);
  MissionGraph g(0.0);
  for (int n = 0; n < nodes; ++n) {
    auto f = std::make_shared<FeatureFrame>();
    f->robot_pose = {static_cast<double>(n), 0.0, 0.0};
    f->height = 1;
    f->width = segments;
    f->segments = {1, segments, segments, std::vector<std::int32_t>(segments)};
    for (int s = 0; s < segments; ++s) {
      f->segments.labels[s] = s;
      f->pixel_to_world.push_back({0.0, 0.0});
      f->valid.push_back(1);
      std::vector<double> e(dim);
      const bool good = s % 2 == 0;
      for (int k = 0; k < dim; ++k) e[k] = (k == 0 ? (good ? 1.4 : -1.4) : 0.0) + noise(rng);
      f->segment_set.segments.push_back({s, e, 1, static_cast<std::size_t>(s)});
    }
    g.maybe_add(f);
    auto& node = g.nodes().back();
    for (int s = 0; s < segments; ++s) {
      // a quarter of the good segments are traversed
      node.labels[s].traversed = s % 8 == 0;
      node.labels[s].score = node.labels[s].traversed ? 0.9 : 0.0;
    }
  }
  return g;
}

// straight-line E=4 oracle, written independently of forward()
double oracle_forward(const TravModel& m, const std::vector<double>& x, std::vector<double>& reco) {
  const auto& s = m.shape();
  const auto& l = m.layout();
  auto p = m.params();
  std::vector<double> h1(s.hidden1), h2(s.hidden2);
  for (int j = 0; j < s.hidden1; ++j) {
    double z = p[l.b1 + j];
    for (int i = 0; i < s.input_dim; ++i) z += x[i] * p[l.w1 + i * s.hidden1 + j];
    h1[j] = z > 0 ? z : 0;
  }
  for (int j = 0; j < s.hidden2; ++j) {
    double z = p[l.b2 + j];
    for (int i = 0; i < s.hidden1; ++i) z += h1[i] * p[l.w2 + i * s.hidden2 + j];
    h2[j] = z > 0 ? z : 0;
  }
  reco.assign(s.input_dim, 0.0);
  for (int j = 0; j < s.input_dim; ++j) {
    double z = p[l.b_reco + j];
    for (int i = 0; i < s.hidden2; ++i) z += h2[i] * p[l.w_reco + i * s.input_dim + j];
    reco[j] = z;
  }
  double z = p[l.b_trav];
  for (int i = 0; i < s.hidden2; ++i) z += h2[i] * p[l.w_trav + i];
  return 1.0 / (1.0 + std::exp(-z));
}

}  // namespace

TEST_CASE("model forward") {
  SUBCASE("zero parameters") {
    TravModel m({6, 16, 4});
    const auto r = forward(m, std::vector<double>{1, 2, 3, 4, 5, 6});
    CHECK(r.traversability == 0.5);
    for (double v : r.reconstruction) CHECK(v == 0.0);
  }
  SUBCASE("matches a straight-line oracle") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n01;
    for (int k = 0; k < 20; ++k) {
      const auto m = TravModel::initialized({4, 256, 32}, rng());
      std::vector<double> x(4);
      for (auto& v : x) v = n01(rng);
      std::vector<double> reco;
      const double tau = oracle_forward(m, x, reco);
      const auto r = forward(m, x);
      CHECK(std::abs(r.traversability - tau) < 1e-12);
      for (int e = 0; e < 4; ++e) CHECK(std::abs(r.reconstruction[e] - reco[e]) < 1e-12);
    }
  }
  SUBCASE("rejects a wrong embedding size") {
    TravModel m({4, 8, 4});
    CHECK_THROWS_AS(forward(m, std::vector<double>{1, 2, 3}), std::invalid_argument);
  }
}

TEST_CASE("reconstruction loss") {
  TravModel m({2, 4, 2});
  const std::vector<double> zero{0, 0}, ones{1, 1};
  CHECK(loss_reco(m, zero, true) == 0.0);
  CHECK(loss_reco(m, ones, false) == 0.0);
  CHECK(reconstruction_error(std::vector<double>{0, 0}, ones) == 1.0);  // residual (1, 1)
  CHECK(loss_reco(m, ones, true) == 1.0);
}

TEST_CASE("confidence statistics") {
  const ConfidenceStats prev{7.0, 3.0};
  auto s = fit_confidence_stats(std::vector<double>{2, 2, 2}, prev);
  CHECK(s.mu == 2.0);
  CHECK(s.sigma == kSigmaFloor);
  s = fit_confidence_stats(std::vector<double>{1, 3}, prev);
  CHECK(s.mu == 2.0);
  CHECK(s.sigma == 1.0);
  s = fit_confidence_stats(std::vector<double>{5}, prev);
  CHECK(s.mu == 5.0);
  CHECK(s.sigma == kSigmaFloor);
  CHECK(fit_confidence_stats({}, prev) == prev);
}

TEST_CASE("confidence") {
  const ConfidenceStats st{0.3, 0.05};
  const double k = 2.0;
  CHECK(confidence(0.3, st, k) == 1.0);
  CHECK(confidence(0.1, st, k) == 1.0);
  CHECK(std::abs(confidence(0.3 + 0.05 * k, st, k) - std::exp(-0.5)) < 1e-9);
  CHECK(confidence(1e9, st, k) == doctest::Approx(0.0));
  double prev = 1.0;
  for (double L = 0.3 + 1e-4; L < 1.0; L += 1e-3) {
    const double c = confidence(L, st, k);
    CHECK(c < prev);
    prev = c;
  }
}

TEST_CASE("traversability loss trichotomy") {
  CHECK(loss_trav(0.6, 0.6, true, 0.2) == 0.0);
  CHECK(loss_trav(0.9, 0.5, true, 0.0) == doctest::Approx(0.16));
  CHECK(loss_trav(0.7, 0.0, false, 1.0) == 0.0);
  CHECK(loss_trav(0.7, 0.0, false, 0.0) == doctest::Approx(0.49).epsilon(1e-15));
  CHECK(loss_trav(0.7, 0.0, false, 0.5) == doctest::Approx(0.245));
}

TEST_CASE("total loss") {
  LossWeights w;
  CHECK(total_loss(0.0, 0.0, w) == 0.0);
  CHECK(total_loss(1.0, 1.0, w) == doctest::Approx(0.53).epsilon(1e-15));
}

TEST_CASE("analytic gradient matches central differences") {
  for (auto v : {gradcheck::Variant::reco_only, gradcheck::Variant::trav_only, gradcheck::Variant::total})
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto r = gradcheck::check(seed, v);
      CHECK(r.relative_error < 1e-5);
    }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    std::vector<double> p{0.5, -1.0, 2.0}, g(3, 0.0);
    Adam a(3);
    for (int i = 0; i < 5; ++i) a.step(p, g);
    CHECK(p == std::vector<double>{0.5, -1.0, 2.0});
    CHECK(a.steps() == 5);
  }
  SUBCASE("first step moves by the learning rate against the gradient sign") {
    std::vector<double> p{0.0, 0.0}, g{3.0, -0.01};
    Adam a(2, {0.01, 0.9, 0.999, 1e-8});
    a.step(p, g);
    CHECK(p[0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(0.01).epsilon(1e-4));
  }
}

TEST_CASE("train_step") {
  SUBCASE("no valid node is a no-op") {
    MissionGraph g(0.0);
    Learner learner({8, 16, 8}, {}, {}, 1);
    const auto before = std::vector<double>(learner.model().params().begin(), learner.model().params().end());
    const auto m = learner.train(g);
    CHECK_FALSE(m.trained);
    CHECK(learner.steps() == 0);
    CHECK(std::equal(before.begin(), before.end(), learner.model().params().begin()));
  }
  SUBCASE("same seed and graph give bit-identical trajectories") {
    const auto g = frozen_graph(3);
    Learner a({8, 32, 8}, {}, {}, 9), b({8, 32, 8}, {}, {}, 9);
    for (int i = 0; i < 30; ++i) {
      a.train(g);
      b.train(g);
    }
    CHECK(std::equal(a.model().params().begin(), a.model().params().end(), b.model().params().begin()));
  }
  SUBCASE("moving-average loss decreases on a frozen graph") {
    int decreasing = 0;
    const int runs = 20;
    for (int run = 0; run < runs; ++run) {
      // the system's embedding width; on a tiny 8-d graph the loss flattens within 50 steps
      const auto g = frozen_graph(100 + run, 12, 16, 64, 0.3);
      Learner learner({64, 256, 32}, {}, {1e-3, 0.9, 0.999, 1e-8}, run);
      std::vector<double> window_means;
      double acc = 0.0;
      for (int step = 1; step <= 200; ++step) {
        acc += learner.train(g).total;
        if (step % 50 == 0) {
          window_means.push_back(acc / 50.0);
          acc = 0.0;
        }
      }
      bool mono = true;
      for (std::size_t k = 1; k < window_means.size(); ++k) mono = mono && window_means[k] < window_means[k - 1];
      decreasing += mono;
    }
    CHECK(decreasing >= 19);
  }
}

TEST_CASE("threshold selection") {
  using TL = ThresholdLabel;
  SUBCASE("sweep example") {
    const std::vector<double> s{0.1, 0.2, 0.9, 0.95};
    const std::vector<TL> l(4, TL::negative);
    const auto r = select_threshold(s, l, 0.25);
    CHECK(r.threshold == 0.95);
    CHECK(r.false_positive_rate == 0.25);
  }
  SUBCASE("fpr_max = 1 passes everything") {
    const std::vector<double> s{0.3, 0.1, 0.8, 0.6};
    const std::vector<TL> l{TL::negative, TL::positive, TL::negative, TL::positive};
    CHECK(select_threshold(s, l, 1.0).threshold == 0.1);
  }
  SUBCASE("separated scores pick the smallest positive-side score") {
    const std::vector<double> s{0.1, 0.2, 0.6, 0.7};
    const std::vector<TL> l{TL::negative, TL::negative, TL::positive, TL::positive};
    CHECK(select_threshold(s, l, 0.0).threshold == 0.6);
  }
  SUBCASE("no negatives falls back to 0.5") {
    const std::vector<double> s{0.3, 0.9};
    const std::vector<TL> l{TL::positive, TL::ignore};
    const auto r = select_threshold(s, l, 0.15);
    CHECK(r.fallback);
    CHECK(r.threshold == 0.5);
  }
  SUBCASE("labels") {
    CHECK(threshold_label(true, 0.0) == TL::positive);
    CHECK(threshold_label(false, 0.1) == TL::negative);
    CHECK(threshold_label(false, 0.9) == TL::ignore);
  }
}

TEST_CASE("snapshots") {
  const auto g = frozen_graph(4);
  Learner learner({8, 16, 8}, {}, {}, 2);
  learner.train(g);
  const auto a = learner.publish(g);
  const auto b = learner.publish(g);
  CHECK(a->id != b->id);
  CHECK(std::equal(a->model.params().begin(), a->model.params().end(), b->model.params().begin()));
  const std::vector<double> frozen(a->model.params().begin(), a->model.params().end());
  for (int i = 0; i < 5; ++i) learner.train(g);
  CHECK(std::equal(frozen.begin(), frozen.end(), a->model.params().begin()));

  SUBCASE("serialisation round-trips bit-exactly") {
    const auto back = deserialize_snapshot(serialize_snapshot(*a, BlobType::float64));
    CHECK(back.id == a->id);
    CHECK(back.threshold == a->threshold);
    CHECK(back.stats == a->stats);
    CHECK(back.model.shape() == a->model.shape());
    CHECK(std::equal(frozen.begin(), frozen.end(), back.model.params().begin()));
  }
  SUBCASE("float32 blobs round-trip their own rounding") {
    const auto once = deserialize_snapshot(serialize_snapshot(*a, BlobType::float32));
    const auto twice = deserialize_snapshot(serialize_snapshot(once, BlobType::float32));
    CHECK(std::equal(once.model.params().begin(), once.model.params().end(), twice.model.params().begin()));
  }
  SUBCASE("corrupt checkpoints are rejected") {
    auto bytes = serialize_snapshot(*a);
    CHECK_THROWS_AS(deserialize_snapshot(bytes.substr(0, bytes.size() - 3)), CheckpointError);
    CHECK_THROWS_AS(deserialize_snapshot("not a checkpoint"), CheckpointError);
  }
  SUBCASE("file round trip") {
    const auto path = std::filesystem::temp_directory_path() / "travlearn_snapshot_test.ckpt";
    save_checkpoint(path, *a, BlobType::float64);
    const auto back = load_checkpoint(path);
    CHECK(std::equal(frozen.begin(), frozen.end(), back.model.params().begin()));
    std::filesystem::remove(path);
  }
}
