#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "travlearn/supervision.hpp"

namespace travlearn {

struct ModelShape {
  int input_dim = 64;
  int hidden1 = 256;
  int hidden2 = 32;

  bool operator==(const ModelShape&) const = default;
  std::size_t parameter_count() const;
};

/// Offsets of each tensor inside the flat parameter vector. Weight matrices are
/// stored input-major: W[i * out + j] connects input i to output j.
struct ParamLayout {
  std::size_t w1, b1, w2, b2, w_reco, b_reco, w_trav, b_trav, total;
  explicit ParamLayout(const ModelShape& s);
};

/// Shared two-layer ReLU trunk with a linear reconstruction head (E outputs) and
/// a single-logit traversability head.
class TravModel {
 public:
  TravModel() : TravModel(ModelShape{}) {}
  explicit TravModel(ModelShape shape);
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  static TravModel initialized(ModelShape shape, std::uint64_t seed);

  const ModelShape& shape() const { return shape_; }
  const ParamLayout& layout() const { return layout_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  bool finite() const;

 private:
  ModelShape shape_;
  ParamLayout layout_;
  std::vector<double> params_;
};

struct ForwardCache {
  std::vector<double> hidden1;  // post-ReLU
  std::vector<double> hidden2;  // post-ReLU
};

struct ForwardResult {
  std::vector<double> reconstruction;
  double traversability = 0.5;
  ForwardCache cache;
};

ForwardResult forward(const TravModel& model, std::span<const double> embedding);

/// Mean squared reconstruction residual over the E channels, regardless of labels.
double reconstruction_error(std::span<const double> reconstruction, std::span<const double> embedding);

/// Reconstruction loss: the residual for traversed segments, zero otherwise.
double loss_reco(const TravModel& model, std::span<const double> embedding, bool traversed);

struct ConfidenceStats {
  double mu = 0.0;
  double sigma = 1.0;
  bool operator==(const ConfidenceStats&) const = default;
};

inline constexpr double kSigmaFloor = 1e-6;

/// Population mean and standard deviation of traversed-segment reconstruction
/// losses. An empty batch carries `previous` over unchanged.
ConfidenceStats fit_confidence_stats(std::span<const double> traversed_losses, const ConfidenceStats& previous,
                                     double sigma_floor = kSigmaFloor);

/// 1 at or below mu, then an unnormalised Gaussian tail of width sigma * k_sigma.
double confidence(double reco_loss, const ConfidenceStats& stats, double k_sigma);

/// Squared error to the label for traversed segments; untraversed segments are
/// pulled towards zero with weight (1 - confidence).
double loss_trav(double predicted, double target, bool traversed, double confidence);

struct LossWeights {
  double w_trav = 0.03;
  double w_reco = 0.5;
  double k_sigma = 2.0;
  double fpr_max = 0.15;
  double sigma_floor = kSigmaFloor;

  void validate() const;
};

double total_loss(double mean_trav, double mean_reco, const LossWeights& w);

struct TrainingSample {
  std::span<const double> embedding;
  double target = 0.0;
  bool traversed = false;
};

struct BatchEvaluation {
  double total = 0.0;
  double trav = 0.0;  // mean over segments
  double reco = 0.0;  // mean over segments
  ConfidenceStats stats;
  int n_traversed = 0;
  std::vector<double> confidences;
};

/// Batch loss and (optionally) its gradient. Confidences are fitted from the batch
/// unless `fixed_confidences` is given; either way they are constants for the
/// gradient. `gradient`, when non-empty, is overwritten.
BatchEvaluation evaluate_batch(const TravModel& model, std::span<const TrainingSample> batch, const LossWeights& weights,
                               const ConfidenceStats& previous_stats, std::span<double> gradient,
                               const std::vector<double>* fixed_confidences = nullptr);

struct AdamParams {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::size_t parameter_count, AdamParams params = {});
  void step(std::span<double> params, std::span<const double> gradient);
  std::uint64_t steps() const { return steps_; }
  const AdamParams& params() const { return params_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }

 private:
  AdamParams params_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t steps_ = 0;
};

struct TrainMetrics {
  bool trained = false;
  std::uint64_t step = 0;
  double total = 0.0;
  double trav = 0.0;
  double reco = 0.0;
  int n_traversed = 0;
  int n_segments = 0;
  int n_nodes = 0;
  ConfidenceStats stats;
};

inline constexpr int kNodesPerBatch = 8;

/// One optimisation step on up to eight randomly chosen valid mission nodes.
/// Returns trained=false (and leaves everything untouched) when no node is valid.
TrainMetrics train_step(TravModel& model, Adam& adam, const MissionGraph& graph, const LossWeights& weights,
                        ConfidenceStats& stats, std::mt19937_64& rng);

enum class ThresholdLabel : std::uint8_t { ignore, positive, negative };

ThresholdLabel threshold_label(bool traversed, double confidence);

struct ThresholdResult {
  double threshold = 0.5;
  /// No negatives were available; threshold is the 0.5 fallback.
  bool fallback = false;
  int negatives = 0;
  int positives = 0;
  double false_positive_rate = 0.0;
};

/// Smallest observed score s with |{negatives >= s}| / |negatives| <= fpr_max.
ThresholdResult select_threshold(std::span<const double> scores, std::span<const ThresholdLabel> labels, double fpr_max);

/// Scores and labels every segment of the graph with the current model.
ThresholdResult select_threshold(const TravModel& model, const MissionGraph& graph, const ConfidenceStats& stats,
                                 const LossWeights& weights);

struct ModelSnapshot {
  std::uint64_t id = 0;
  std::uint64_t training_step = 0;
  TravModel model;
  double threshold = 0.5;
  ConfidenceStats stats;
};

using ModelSnapshotPtr = std::shared_ptr<const ModelSnapshot>;

/// Issues immutable model copies with increasing ids.
class SnapshotPublisher {
 public:
  ModelSnapshotPtr publish(const TravModel& model, double threshold, const ConfidenceStats& stats,
                           std::uint64_t training_step);
  std::uint64_t published() const { return next_id_; }

 private:
  std::uint64_t next_id_ = 0;
};

enum class BlobType { float32, float64 };

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One JSON header line followed by the little-endian parameter blob.
std::string serialize_snapshot(const ModelSnapshot& snap, BlobType type = BlobType::float32);
ModelSnapshot deserialize_snapshot(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const ModelSnapshot& snap, BlobType type = BlobType::float32);
ModelSnapshot load_checkpoint(const std::filesystem::path& path);

/// Learning-loop state: model, optimiser, confidence statistics and the
/// mini-batch RNG. Owned by a single thread.
class Learner {
 public:
  Learner(ModelShape shape, LossWeights weights, AdamParams adam, std::uint64_t seed);
  explicit Learner(const ModelSnapshot& warm_start, LossWeights weights, AdamParams adam, std::uint64_t seed);

  TrainMetrics train(const MissionGraph& graph);
  ModelSnapshotPtr publish(const MissionGraph& graph);
  ModelSnapshot current(const MissionGraph& graph) const;

  const TravModel& model() const { return model_; }
  const ConfidenceStats& stats() const { return stats_; }
  const LossWeights& weights() const { return weights_; }
  void set_weights(const LossWeights& w);
  std::uint64_t steps() const { return adam_.steps(); }

 private:
  TravModel model_;
  LossWeights weights_;
  Adam adam_;
  ConfidenceStats stats_;
  std::mt19937_64 rng_;
  SnapshotPublisher publisher_;
};

}  // namespace travlearn
