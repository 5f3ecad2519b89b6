#include "travlearn/inference.hpp"

#include <stdexcept>

namespace travlearn {

std::string to_string(InferenceMode m) { return m == InferenceMode::segment ? "segment" : "pixel"; }

InferenceMode parse_inference_mode(const std::string& s) {
  if (s == "segment") return InferenceMode::segment;
  if (s == "pixel") return InferenceMode::pixel;
  throw std::invalid_argument("unknown inference mode '" + s + "'");
}

double predict_traversability(const TravModel& model, std::span<const double> embedding) {
  return forward(model, embedding).traversability;
}

TraversabilityImage infer(const FeatureFrame& frame, const ModelSnapshot& snapshot, InferenceMode mode) {
  const int dim = snapshot.model.shape().input_dim;
  TraversabilityImage out;
  out.height = frame.height;
  out.width = frame.width;
  out.mode = mode;
  out.snapshot_id = snapshot.id;
  out.valid = frame.valid;
  const std::size_t n = static_cast<std::size_t>(frame.height) * frame.width;
  out.values.assign(n, 0.0f);

  if (mode == InferenceMode::segment) {
    if (frame.segments.labels.empty() || frame.segments.sentinel())
      throw std::invalid_argument("segment-wise inference needs a segment partition");
    const auto& segs = frame.segment_set.segments;
    if (!segs.empty() && static_cast<int>(segs.front().mean_embedding.size()) != dim)
      throw std::invalid_argument("snapshot embedding dimension does not match the frame");
    std::vector<float> score(segs.size());
    for (std::size_t s = 0; s < segs.size(); ++s)
      score[s] = static_cast<float>(predict_traversability(snapshot.model, segs[s].mean_embedding));
    for (std::size_t p = 0; p < n; ++p) {
      const auto label = frame.segments.labels[p];
      if (label != kNoSegment) out.values[p] = score[static_cast<std::size_t>(label)];
    }
    return out;
  }

  if (!frame.features) throw std::invalid_argument("pixel-wise inference needs the dense feature image");
  const auto& f = *frame.features;
  if (f.dim != dim) throw std::invalid_argument("snapshot embedding dimension does not match the frame");
  std::vector<double> e(static_cast<std::size_t>(dim));
  for (std::size_t p = 0; p < n; ++p) {
    f.pixel(p, e);
    out.values[p] = static_cast<float>(predict_traversability(snapshot.model, e));
  }
  return out;
}

}  // namespace travlearn
