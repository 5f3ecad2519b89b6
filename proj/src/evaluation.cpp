#include "travlearn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace travlearn {

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw std::invalid_argument("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k)
      if (positive[order[k]]) {
        rank_sum += mid;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

std::vector<Pose2> eval_views(const TerrainWorld& world, const CameraModel& camera, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0.0, world.extent_x()), uy(0.0, world.extent_y()),
      ut(-M_PI, M_PI);
  std::vector<Pose2> out;
  for (int tries = 0; static_cast<int>(out.size()) < count && tries < 100000; ++tries) {
    const Pose2 p{ux(rng), uy(rng), ut(rng)};
    const auto window = camera.window_in_world(p);
    if (std::all_of(window.begin(), window.end(), [&](Vec2 v) { return world.in_bounds(v); })) out.push_back(p);
  }
  if (static_cast<int>(out.size()) < count) throw std::runtime_error("world too small for the evaluation camera");
  return out;
}

EvalResult evaluate_snapshot(const TerrainWorld& world, FeatureExtractor& extractor, const CameraModel& camera,
                             const PerceptionParams& perception, const ModelSnapshot& snapshot,
                             std::span<const Pose2> views, InferenceMode mode, double traction_cut) {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::size_t agree = 0;
  PerceptionParams params = perception;
  params.keep_features = true;
  for (std::size_t v = 0; v < views.size(); ++v) {
    RobotState st;
    st.pose = views[v];
    // far from any session timestamp so the synthetic noise is fresh
    const Observation obs = render_camera(world, st, camera, 1.0e6 + static_cast<double>(v));
    const FeatureFrame frame = build_feature_frame(obs, extractor, params, CameraRole::infer_only, v);
    const TraversabilityImage img = infer(frame, snapshot, mode);
    for (std::size_t p = 0; p < img.values.size(); ++p) {
      if (!frame.valid[p]) continue;
      const auto terrain = world.terrain_at(frame.pixel_to_world[p]);
      if (terrain == kNoTerrain) continue;
      const bool pos = world.def(terrain).traction >= traction_cut;
      scores.push_back(img.values[p]);
      labels.push_back(pos ? 1 : 0);
      agree += ((img.values[p] >= snapshot.threshold) == pos) ? 1 : 0;
    }
  }
  EvalResult r;
  r.pixels = scores.size();
  r.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  r.auc = roc_auc(scores, labels);
  r.accuracy = r.pixels ? static_cast<double>(agree) / static_cast<double>(r.pixels) : 0.0;
  return r;
}

}  // namespace travlearn
