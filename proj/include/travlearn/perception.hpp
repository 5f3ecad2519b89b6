#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "travlearn/geometry.hpp"
#include "travlearn/worldsim.hpp"

namespace travlearn {

/// Dense embedding raster stored E-major: value(e, pixel) = data[e * H * W + pixel].
struct FeatureImage {
  int dim = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  FeatureImage() = default;
  FeatureImage(int dim, int height, int width)
      : dim(dim), height(height), width(width), data(static_cast<std::size_t>(dim) * height * width, 0.0f) {}

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  float& at(int e, std::size_t pixel) { return data[static_cast<std::size_t>(e) * pixels() + pixel]; }
  float at(int e, std::size_t pixel) const { return data[static_cast<std::size_t>(e) * pixels() + pixel]; }
  /// Copies one pixel's embedding, widened to double.
  void pixel(std::size_t pixel, std::span<double> out) const;
};

FeatureImage resize_nearest(const FeatureImage& img, int height, int width);

inline constexpr std::int32_t kNoSegment = -1;

struct SegmentMap {
  int height = 0;
  int width = 0;
  int count = 0;
  std::vector<std::int32_t> labels;

  /// Random sub-sampling produces no partition, only sample locations.
  bool sentinel() const {
    return !labels.empty() && std::all_of(labels.begin(), labels.end(), [](auto l) { return l == kNoSegment; });
  }
};

enum class SubsampleStrategy { random, slic_like, semantic_knn };

std::string to_string(SubsampleStrategy s);
SubsampleStrategy parse_subsample_strategy(const std::string& s);

struct Segment {
  int id = 0;
  std::vector<double> mean_embedding;
  int pixel_count = 0;
  std::size_t representative_pixel = 0;
};

struct SegmentSet {
  SubsampleStrategy provenance = SubsampleStrategy::semantic_knn;
  std::vector<Segment> segments;
};

struct SubsampleParams {
  SubsampleStrategy strategy = SubsampleStrategy::semantic_knn;
  int target_count = 32;
  /// Weight of (row, col) relative to colour for slic_like, in units of the grid interval.
  double position_weight = 1.0;
  int max_iterations = 25;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
};

struct SubsampleResult {
  SegmentMap map;
  SegmentSet set;
  int requested = 0;
  /// Fewer than requested when the image cannot support that many clusters.
  int effective = 0;
};

SubsampleResult subsample(const FeatureImage& features, std::span<const Rgb> color, const SubsampleParams& params);

struct KMeansResult {
  std::vector<std::int32_t> labels;
  std::vector<double> centers;  // k x dim, row-major
  int clusters = 0;
  int iterations = 0;
};

/// Lloyd's algorithm over row-major points (n x dim). Starts from `init_centers`
/// when non-empty, otherwise from k-means++ seeded by `seed`. Empty clusters are
/// re-seeded at the point farthest from its centroid; clusters that cannot be
/// re-seeded (all points coincide with their centroid) are removed.
KMeansResult kmeans(std::span<const double> points, std::size_t dim, int k, std::vector<double> init_centers,
                    std::uint64_t seed, int max_iterations, double tolerance);

class CameraScheduler {
 public:
  struct Entry {
    std::string camera_id;
    int weight = 1;
  };

  explicit CameraScheduler(std::vector<Entry> entries);

  /// Weighted round robin: each round visits cameras in order, each `weight` times.
  const std::string& next();
  /// As next(), but positions whose camera fails `available` are consumed and
  /// skipped. Returns nullopt if no camera is available within one full round.
  std::optional<std::string> next(const std::function<bool(const std::string&)>& available);

  const std::vector<Entry>& entries() const { return entries_; }

 private:
  bool advance();
  std::vector<Entry> entries_;
  std::size_t index_ = 0;
  int emitted_ = 0;
  int total_weight_ = 0;
};

enum class CameraRole { train_and_infer, infer_only };

struct FeatureFrame {
  std::string camera_id;
  CameraRole role = CameraRole::train_and_infer;
  double timestamp = 0.0;
  std::uint64_t sequence = 0;
  Pose2 robot_pose;
  int height = 0;
  int width = 0;
  std::optional<FeatureImage> features;
  SegmentMap segments;
  SegmentSet segment_set;
  std::vector<Vec2> pixel_to_world;
  std::vector<std::uint8_t> valid;

  int embedding_dim() const {
    return segment_set.segments.empty() ? (features ? features->dim : 0)
                                        : static_cast<int>(segment_set.segments.front().mean_embedding.size());
  }
};

using FeatureFramePtr = std::shared_ptr<const FeatureFrame>;

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual int embedding_dim() const = 0;
  virtual FeatureImage extract(const Observation& obs) = 0;
};

struct SyntheticExtractorParams {
  int embedding_dim = 64;
  std::uint64_t seed = 0;
  /// Gaussian blur radius in pixels applied to the white noise; 0 disables blurring.
  int blur_radius = 2;
};

/// Stand-in for a pretrained backbone: terrain prototype plus spatially correlated
/// noise, passed through a fixed random orthogonal mixing.
class SyntheticExtractor final : public FeatureExtractor {
 public:
  SyntheticExtractor(const TerrainWorld& world, SyntheticExtractorParams params);
  int embedding_dim() const override { return params_.embedding_dim; }
  FeatureImage extract(const Observation& obs) override;
  /// Prototype of a terrain after mixing.
  std::vector<double> mixed_prototype(TerrainId id) const;
  const std::vector<double>& mixing() const { return mixing_; }

 private:
  std::vector<std::vector<double>> prototypes_;
  std::vector<double> noise_std_;
  SyntheticExtractorParams params_;
  std::vector<double> mixing_;  // E x E row-major, orthogonal
  std::vector<double> kernel_;
};

struct FeatureLogRecord {
  double timestamp = 0.0;
  std::string camera_id;
  Pose2 pose;
  int height = 0;
  int width = 0;
  int dim = 0;
  std::uint64_t offset = 0;
  std::uint64_t byte_length = 0;
};

class FeatureLogError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string format_feature_record(const FeatureLogRecord& r);
FeatureLogRecord parse_feature_record(const std::string& line);

/// Appends E-major little-endian float32 rasters to a sidecar file and indexes
/// them with one JSON line per frame.
class FeatureLogWriter {
 public:
  FeatureLogWriter(const std::filesystem::path& index_path, const std::filesystem::path& blob_path);
  FeatureLogRecord append(double timestamp, const std::string& camera_id, const Pose2& pose, const FeatureImage& img);
  /// Writes only the blob and returns the record; the caller indexes it elsewhere.
  FeatureLogRecord append_blob(double timestamp, const std::string& camera_id, const Pose2& pose,
                               const FeatureImage& img);
  void flush();

 private:
  std::ofstream index_;
  std::ofstream blob_;
  std::uint64_t offset_ = 0;
};

class FeatureLogReader {
 public:
  /// Reads the JSON index; an empty index path means records are supplied later.
  FeatureLogReader(const std::filesystem::path& index_path, const std::filesystem::path& blob_path);
  explicit FeatureLogReader(const std::filesystem::path& blob_path);

  void add_record(FeatureLogRecord r) { records_.push_back(std::move(r)); }
  const std::vector<FeatureLogRecord>& records() const { return records_; }
  FeatureImage read(const FeatureLogRecord& r) const;
  const FeatureLogRecord* find(double timestamp, const std::string& camera_id) const;

 private:
  std::filesystem::path blob_path_;
  std::vector<FeatureLogRecord> records_;
};

/// Serves embeddings recorded in a feature log, matched by (timestamp, camera).
class ReplayExtractor final : public FeatureExtractor {
 public:
  ReplayExtractor(std::shared_ptr<const FeatureLogReader> reader, int embedding_dim);
  int embedding_dim() const override { return dim_; }
  FeatureImage extract(const Observation& obs) override;

 private:
  std::shared_ptr<const FeatureLogReader> reader_;
  int dim_;
};

struct PerceptionParams {
  int working_height = 64;
  int working_width = 64;
  SubsampleParams subsample;
  /// Keep dense features on the frame after sub-sampling (needed for pixel-wise inference).
  bool keep_features = true;
};

/// Extracts and resizes to the working resolution.
FeatureImage extract_features(const Observation& obs, FeatureExtractor& extractor, const PerceptionParams& params);

FeatureFrame build_feature_frame(const Observation& obs, FeatureExtractor& extractor, const PerceptionParams& params,
                                 CameraRole role, std::uint64_t sequence);

}  // namespace travlearn
