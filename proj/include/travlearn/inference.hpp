#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "travlearn/learner.hpp"
#include "travlearn/perception.hpp"

namespace travlearn {

enum class InferenceMode { segment, pixel };

std::string to_string(InferenceMode m);
InferenceMode parse_inference_mode(const std::string& s);

struct TraversabilityImage {
  int height = 0;
  int width = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> valid;
  InferenceMode mode = InferenceMode::segment;
  std::uint64_t snapshot_id = 0;
};

/// Traversability head only; identical to forward(...).traversability.
double predict_traversability(const TravModel& model, std::span<const double> embedding);

/// Segment mode runs the model once per segment and broadcasts over its pixels;
/// pixel mode runs it on every pixel embedding.
TraversabilityImage infer(const FeatureFrame& frame, const ModelSnapshot& snapshot, InferenceMode mode);

}  // namespace travlearn
