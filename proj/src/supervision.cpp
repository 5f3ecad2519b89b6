#include "travlearn/supervision.hpp"

#include <algorithm>
#include <stdexcept>

namespace travlearn {

void ScoreParams::validate() const {
  if (!(k > 0.0)) throw std::invalid_argument("score steepness k must be positive");
  if (!(v_thr >= 0.0)) throw std::invalid_argument("v_thr must be non-negative");
  if (!(q > 0.0) || !(r > 0.0)) throw std::invalid_argument("Kalman variances must be positive");
}

double velocity_error(Vec2 commanded, Vec2 measured) {
  const double dx = commanded.x - measured.x;
  const double dy = commanded.y - measured.y;
  return 0.5 * (dx * dx + dy * dy);
}

KalmanState kalman_smooth(KalmanState s, double z, double q, double r) {
  const double prior = s.variance + q;
  const double gain = prior / (prior + r);
  return {s.estimate + gain * (z - s.estimate), (1.0 - gain) * prior};
}

double traversability_score(double v_err, const ScoreParams& p) { return logistic(-p.k * (v_err - p.v_thr)); }

TraversabilityEstimator::TraversabilityEstimator(ScoreParams params) : params_(params) { params_.validate(); }

void TraversabilityEstimator::set_params(const ScoreParams& p) {
  p.validate();
  params_ = p;
}

double TraversabilityEstimator::update(Vec2 commanded, Vec2 measured) {
  state_ = kalman_smooth(state_, velocity_error(commanded, measured), params_.q, params_.r);
  return traversability_score(state_.estimate, params_);
}

SupervisionGraph::SupervisionGraph(std::size_t capacity, double spacing) : capacity_(capacity), spacing_(spacing) {
  if (capacity_ == 0) throw std::invalid_argument("supervision graph capacity must be positive");
  if (!(spacing_ >= 0.0)) throw std::invalid_argument("supervision spacing must be non-negative");
}

PushResult SupervisionGraph::push(SupervisionNode node) {
  if (!nodes_.empty() && nodes_.back().pose.distance_to(node.pose) < spacing_) return PushResult::rejected_too_close;
  nodes_.push_back(std::move(node));
  if (nodes_.size() > capacity_) {
    nodes_.pop_front();
    ++evicted_;
  }
  return PushResult::added;
}

bool MissionNode::valid() const {
  return std::any_of(labels.begin(), labels.end(), [](const SegmentLabel& l) { return l.score > 0.0; });
}

MissionGraph::MissionGraph(double spacing, bool keep_dense_features) : spacing_(spacing), keep_dense_(keep_dense_features) {
  if (!(spacing_ >= 0.0)) throw std::invalid_argument("mission spacing must be non-negative");
}

const MissionNode* MissionGraph::maybe_add(const FeatureFramePtr& frame) {
  if (!frame) throw std::invalid_argument("null frame");
  if (frame->segment_set.segments.empty()) throw std::invalid_argument("mission frames need a segment set");
  if (!nodes_.empty() && nodes_.back().frame->robot_pose.distance_to(frame->robot_pose) < spacing_) return nullptr;

  MissionNode node;
  if (keep_dense_ || !frame->features) {
    node.frame = frame;
  } else {
    auto light = std::make_shared<FeatureFrame>(*frame);
    light->features.reset();
    node.frame = std::move(light);
  }
  node.supervision.assign(static_cast<std::size_t>(frame->height) * frame->width, kUnlabeled);
  for (const auto& seg : frame->segment_set.segments) node.labels.push_back({seg.id, 0.0, false});
  nodes_.push_back(std::move(node));
  return &nodes_.back();
}

std::vector<SegmentLabel> segment_labels(const FeatureFrame& frame, const std::vector<double>& g) {
  const auto& segs = frame.segment_set.segments;
  std::vector<double> sum(segs.size(), 0.0);
  std::vector<int> count(segs.size(), 0);
  if (frame.segments.sentinel() || frame.segments.labels.empty()) {
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const double v = g[segs[s].representative_pixel];
      if (v != kUnlabeled) {
        sum[s] += v;
        ++count[s];
      }
    }
  } else {
    for (std::size_t p = 0; p < g.size(); ++p) {
      const auto s = frame.segments.labels[p];
      if (s == kNoSegment || g[p] == kUnlabeled) continue;
      sum[static_cast<std::size_t>(s)] += g[p];
      ++count[static_cast<std::size_t>(s)];
    }
  }
  std::vector<SegmentLabel> labels(segs.size());
  for (std::size_t s = 0; s < segs.size(); ++s) {
    labels[s].segment_id = segs[s].id;
    labels[s].traversed = count[s] > 0;
    labels[s].score = count[s] > 0 ? sum[s] / count[s] : 0.0;
  }
  return labels;
}

std::size_t reproject_supervision(MissionGraph& mission, const SupervisionGraph& sup, double range_m) {
  const auto& track = sup.nodes();
  if (track.empty()) return 0;

  struct Swept {
    Polygon hull;
    Aabb box;
    double score;
  };
  std::vector<Swept> swept;
  swept.reserve(track.size());
  Aabb all;
  for (std::size_t i = 0; i < track.size(); ++i) {
    std::vector<Vec2> pts(track[i].footprint.begin(), track[i].footprint.end());
    if (i > 0) pts.insert(pts.end(), track[i - 1].footprint.begin(), track[i - 1].footprint.end());
    Swept s{convex_hull(std::move(pts)), {}, track[i].score};
    s.box = bounds_of(s.hull);
    all.expand(s.box);
    swept.push_back(std::move(s));
  }

  std::size_t updated = 0;
  for (auto& node : mission.nodes()) {
    const Pose2& pose = node.frame->robot_pose;
    const bool near = std::any_of(track.begin(), track.end(),
                                  [&](const SupervisionNode& n) { return n.pose.distance_to(pose) <= range_m; });
    if (!near) continue;
    ++updated;

    const auto& frame = *node.frame;
    for (std::size_t p = 0; p < frame.pixel_to_world.size(); ++p) {
      if (!frame.valid[p]) continue;
      const Vec2 w = frame.pixel_to_world[p];
      if (!all.contains(w)) continue;
      for (std::size_t i = swept.size(); i-- > 0;) {
        if (swept[i].box.contains(w) && point_in_convex(swept[i].hull, w)) {
          node.supervision[p] = swept[i].score;
          break;
        }
      }
    }
    node.labels = segment_labels(frame, node.supervision);
  }
  return updated;
}

}  // namespace travlearn
