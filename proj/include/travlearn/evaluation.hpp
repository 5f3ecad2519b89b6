#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "travlearn/inference.hpp"
#include "travlearn/learner.hpp"
#include "travlearn/perception.hpp"
#include "travlearn/worldsim.hpp"

namespace travlearn {

/// Area under the ROC curve by the rank-sum statistic; ties count one half.
/// Returns NaN when either class is empty.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> positive);

/// Robot poses whose camera window lies entirely inside the world, drawn
/// deterministically from `seed`.
std::vector<Pose2> eval_views(const TerrainWorld& world, const CameraModel& camera, int count, std::uint64_t seed);

struct EvalResult {
  double auc = 0.0;
  /// Fraction of pixels where (score >= threshold) agrees with the ground truth.
  double accuracy = 0.0;
  std::size_t pixels = 0;
  std::size_t positives = 0;
};

/// Pixel-wise comparison of a snapshot's predictions with ground-truth traction
/// binarised at `traction_cut`.
EvalResult evaluate_snapshot(const TerrainWorld& world, FeatureExtractor& extractor, const CameraModel& camera,
                             const PerceptionParams& perception, const ModelSnapshot& snapshot,
                             std::span<const Pose2> views, InferenceMode mode = InferenceMode::pixel,
                             double traction_cut = 0.5);

}  // namespace travlearn
