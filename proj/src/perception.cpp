#include "travlearn/perception.hpp"

#include <bit>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/QR>
#include <nlohmann/json.hpp>

namespace travlearn {

using nlohmann::json;

void FeatureImage::pixel(std::size_t p, std::span<double> out) const {
  for (int e = 0; e < dim; ++e) out[e] = at(e, p);
}

FeatureImage resize_nearest(const FeatureImage& img, int height, int width) {
  if (img.height == height && img.width == width) return img;
  FeatureImage out(img.dim, height, width);
  for (int r = 0; r < height; ++r) {
    const int sr = std::min(img.height - 1, static_cast<int>((r + 0.5) * img.height / height));
    for (int c = 0; c < width; ++c) {
      const int sc = std::min(img.width - 1, static_cast<int>((c + 0.5) * img.width / width));
      const std::size_t src = static_cast<std::size_t>(sr) * img.width + sc;
      const std::size_t dst = static_cast<std::size_t>(r) * width + c;
      for (int e = 0; e < img.dim; ++e) out.at(e, dst) = img.at(e, src);
    }
  }
  return out;
}

std::string to_string(SubsampleStrategy s) {
  switch (s) {
    case SubsampleStrategy::random: return "random";
    case SubsampleStrategy::slic_like: return "slic_like";
    case SubsampleStrategy::semantic_knn: return "semantic_knn";
  }
  return "unknown";
}

SubsampleStrategy parse_subsample_strategy(const std::string& s) {
  if (s == "random") return SubsampleStrategy::random;
  if (s == "slic_like") return SubsampleStrategy::slic_like;
  if (s == "semantic_knn") return SubsampleStrategy::semantic_knn;
  throw std::invalid_argument("unknown sub-sampling strategy '" + s + "'");
}

// ---------------------------------------------------------------------------
// k-means

namespace {

// centers stored transposed (dim x k) so the distance loop vectorises over clusters
void assign(std::span<const double> points, std::size_t dim, std::span<const double> centers_t, std::size_t k,
            std::vector<std::int32_t>& labels, std::vector<double>& dist) {
  const std::size_t n = points.size() / dim;
  std::vector<double> d(k);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(d.begin(), d.end(), 0.0);
    const double* x = points.data() + i * dim;
    for (std::size_t e = 0; e < dim; ++e) {
      const double xe = x[e];
      const double* ce = centers_t.data() + e * k;
      for (std::size_t c = 0; c < k; ++c) {
        const double diff = xe - ce[c];
        d[c] += diff * diff;
      }
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (d[c] < d[best]) best = c;
    labels[i] = static_cast<std::int32_t>(best);
    dist[i] = d[best];
  }
}

double sq_dist(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t e = 0; e < dim; ++e) {
    const double diff = a[e] - b[e];
    s += diff * diff;
  }
  return s;
}

std::vector<double> kmeanspp(std::span<const double> points, std::size_t dim, int k, std::uint64_t seed) {
  const std::size_t n = points.size() / dim;
  std::mt19937_64 rng(seed);
  std::vector<double> centers;
  const std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  centers.insert(centers.end(), points.begin() + first * dim, points.begin() + (first + 1) * dim);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(points.data() + i * dim, centers.data(), dim);

  while (static_cast<int>(centers.size() / dim) < k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    if (!(total > 0.0)) break;
    const double r = std::uniform_real_distribution<double>(0.0, total)(rng);
    double acc = 0.0;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc > r && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    while (d2[pick] == 0.0 && pick > 0) --pick;
    const double* p = points.data() + pick * dim;
    centers.insert(centers.end(), p, p + dim);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(points.data() + i * dim, p, dim));
  }
  return centers;
}

}  // namespace

KMeansResult kmeans(std::span<const double> points, std::size_t dim, int k, std::vector<double> centers,
                    std::uint64_t seed, int max_iterations, double tolerance) {
  if (dim == 0 || points.size() % dim != 0) throw std::invalid_argument("kmeans: bad point buffer");
  const std::size_t n = points.size() / dim;
  if (k < 1 || static_cast<std::size_t>(k) > n) throw std::invalid_argument("kmeans: k must be in [1, n]");
  if (centers.empty()) centers = kmeanspp(points, dim, k, seed);
  if (centers.size() % dim != 0) throw std::invalid_argument("kmeans: bad initial centers");

  KMeansResult res;
  res.labels.assign(n, 0);
  std::vector<double> dist(n);
  std::vector<double> centers_t;
  std::vector<double> sums;
  std::vector<int> counts;

  auto transpose = [&](std::size_t kk) {
    centers_t.assign(dim * kk, 0.0);
    for (std::size_t c = 0; c < kk; ++c)
      for (std::size_t e = 0; e < dim; ++e) centers_t[e * kk + c] = centers[c * dim + e];
  };

  for (int it = 0; it < max_iterations; ++it) {
    std::size_t kk = centers.size() / dim;
    transpose(kk);
    assign(points, dim, centers_t, kk, res.labels, dist);

    sums.assign(kk * dim, 0.0);
    counts.assign(kk, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = static_cast<std::size_t>(res.labels[i]);
      ++counts[c];
      for (std::size_t e = 0; e < dim; ++e) sums[c * dim + e] += points[i * dim + e];
    }

    std::vector<double> next(kk * dim);
    std::vector<bool> keep(kk, true);
    for (std::size_t c = 0; c < kk; ++c) {
      if (counts[c] > 0) {
        for (std::size_t e = 0; e < dim; ++e) next[c * dim + e] = sums[c * dim + e] / counts[c];
        continue;
      }
      // re-seed at the point farthest from its own centroid
      const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      if (!(dist[far] > 0.0)) {
        keep[c] = false;
        continue;
      }
      std::copy_n(points.begin() + far * dim, dim, next.begin() + c * dim);
      dist[far] = 0.0;
    }

    double shift = 0.0;
    std::vector<double> compact;
    for (std::size_t c = 0; c < kk; ++c) {
      if (!keep[c]) continue;
      shift = std::max(shift, std::sqrt(sq_dist(&next[c * dim], &centers[c * dim], dim)));
      compact.insert(compact.end(), next.begin() + c * dim, next.begin() + (c + 1) * dim);
    }
    const bool removed = compact.size() != centers.size();
    centers = std::move(compact);
    res.iterations = it + 1;
    if (!removed && shift < tolerance) break;
  }

  std::size_t kk = centers.size() / dim;
  transpose(kk);
  assign(points, dim, centers_t, kk, res.labels, dist);

  // drop clusters left empty by the final assignment
  std::vector<int> members(kk, 0);
  for (auto l : res.labels) ++members[static_cast<std::size_t>(l)];
  std::vector<std::int32_t> remap(kk, -1);
  std::vector<double> final_centers;
  std::int32_t next_id = 0;
  for (std::size_t c = 0; c < kk; ++c) {
    if (members[c] == 0) continue;
    remap[c] = next_id++;
    final_centers.insert(final_centers.end(), centers.begin() + c * dim, centers.begin() + (c + 1) * dim);
  }
  for (auto& l : res.labels) l = remap[static_cast<std::size_t>(l)];
  res.centers = std::move(final_centers);
  res.clusters = next_id;
  return res;
}

// ---------------------------------------------------------------------------
// sub-sampling

namespace {

SegmentSet build_segments(const FeatureImage& f, const std::vector<std::int32_t>& labels, int count,
                          SubsampleStrategy provenance) {
  SegmentSet set;
  set.provenance = provenance;
  set.segments.resize(static_cast<std::size_t>(count));
  std::vector<double> row_sum(count, 0.0);
  std::vector<double> col_sum(count, 0.0);
  for (int s = 0; s < count; ++s) {
    set.segments[s].id = s;
    set.segments[s].mean_embedding.assign(f.dim, 0.0);
  }
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const auto s = labels[p];
    if (s == kNoSegment) continue;
    auto& seg = set.segments[s];
    ++seg.pixel_count;
    row_sum[s] += static_cast<double>(p / f.width);
    col_sum[s] += static_cast<double>(p % f.width);
    for (int e = 0; e < f.dim; ++e) seg.mean_embedding[e] += f.at(e, p);
  }
  std::vector<double> best(count, std::numeric_limits<double>::infinity());
  for (int s = 0; s < count; ++s) {
    auto& seg = set.segments[s];
    if (seg.pixel_count == 0) throw std::logic_error("empty segment");
    for (auto& v : seg.mean_embedding) v /= seg.pixel_count;
    row_sum[s] /= seg.pixel_count;
    col_sum[s] /= seg.pixel_count;
  }
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const auto s = labels[p];
    if (s == kNoSegment) continue;
    const double dr = static_cast<double>(p / f.width) - row_sum[s];
    const double dc = static_cast<double>(p % f.width) - col_sum[s];
    const double d = dr * dr + dc * dc;
    if (d < best[s]) {
      best[s] = d;
      set.segments[s].representative_pixel = p;
    }
  }
  return set;
}

SubsampleResult subsample_random(const FeatureImage& f, const SubsampleParams& p) {
  const std::size_t n = f.pixels();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(p.seed);
  for (std::size_t i = 0; i < static_cast<std::size_t>(p.target_count); ++i) {
    const auto j = std::uniform_int_distribution<std::size_t>(i, n - 1)(rng);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(p.target_count));
  std::sort(idx.begin(), idx.end());

  SubsampleResult res;
  res.map = {f.height, f.width, p.target_count, std::vector<std::int32_t>(n, kNoSegment)};
  res.set.provenance = SubsampleStrategy::random;
  for (std::size_t s = 0; s < idx.size(); ++s) {
    Segment seg;
    seg.id = static_cast<int>(s);
    seg.pixel_count = 1;
    seg.representative_pixel = idx[s];
    seg.mean_embedding.resize(f.dim);
    f.pixel(idx[s], seg.mean_embedding);
    res.set.segments.push_back(std::move(seg));
  }
  res.requested = res.effective = p.target_count;
  return res;
}

// Splits labels into 4-connected components and merges small fragments into a neighbour.
std::vector<std::int32_t> connected_cleanup(const std::vector<std::int32_t>& labels, int h, int w, int min_size,
                                            int& count) {
  const std::size_t n = labels.size();
  std::vector<std::int32_t> comp(n, -1);
  std::vector<int> sizes;
  std::vector<std::size_t> stack;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] != -1) continue;
    const auto id = static_cast<std::int32_t>(sizes.size());
    sizes.push_back(0);
    comp[s] = id;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++sizes[id];
      const int r = static_cast<int>(p / w);
      const int c = static_cast<int>(p % w);
      const int nr[4] = {r - 1, r + 1, r, r};
      const int nc[4] = {c, c, c - 1, c + 1};
      for (int k = 0; k < 4; ++k) {
        if (nr[k] < 0 || nr[k] >= h || nc[k] < 0 || nc[k] >= w) continue;
        const std::size_t q = static_cast<std::size_t>(nr[k]) * w + nc[k];
        if (comp[q] == -1 && labels[q] == labels[p]) {
          comp[q] = id;
          stack.push_back(q);
        }
      }
    }
  }

  std::vector<std::int32_t> parent(sizes.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::int32_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  std::vector<int> merged_size = sizes;
  for (std::size_t p = 0; p < n; ++p) {
    const auto a = find(comp[p]);
    if (merged_size[a] >= min_size) continue;
    const int r = static_cast<int>(p / w);
    const int c = static_cast<int>(p % w);
    const int nr[4] = {r - 1, r + 1, r, r};
    const int nc[4] = {c, c, c - 1, c + 1};
    for (int k = 0; k < 4; ++k) {
      if (nr[k] < 0 || nr[k] >= h || nc[k] < 0 || nc[k] >= w) continue;
      const auto b = find(comp[static_cast<std::size_t>(nr[k]) * w + nc[k]]);
      if (b != a) {
        parent[a] = b;
        merged_size[b] += merged_size[a];
        break;
      }
    }
  }

  std::vector<std::int32_t> remap(sizes.size(), -1);
  std::vector<std::int32_t> out(n);
  count = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const auto root = find(comp[p]);
    if (remap[root] == -1) remap[root] = count++;
    out[p] = remap[root];
  }
  return out;
}

SubsampleResult subsample_slic(const FeatureImage& f, std::span<const Rgb> color, const SubsampleParams& p) {
  if (color.size() != f.pixels()) throw std::invalid_argument("slic_like needs a colour image matching the features");
  const int h = f.height;
  const int w = f.width;
  const std::size_t n = f.pixels();
  const double interval = std::sqrt(static_cast<double>(n) / p.target_count);
  const double pos_scale = p.position_weight / interval;

  constexpr std::size_t dim = 5;
  std::vector<double> pts(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i * dim + 0] = color[i].r / 255.0;
    pts[i * dim + 1] = color[i].g / 255.0;
    pts[i * dim + 2] = color[i].b / 255.0;
    pts[i * dim + 3] = pos_scale * static_cast<double>(i / w);
    pts[i * dim + 4] = pos_scale * static_cast<double>(i % w);
  }

  // grid initialisation, as in SLIC
  const int gy = std::clamp(static_cast<int>(std::lround(std::sqrt(p.target_count * static_cast<double>(h) / w))), 1, h);
  const int gx = std::clamp(static_cast<int>(std::lround(static_cast<double>(p.target_count) / gy)), 1, w);
  std::vector<double> init;
  for (int a = 0; a < gy; ++a) {
    for (int b = 0; b < gx; ++b) {
      const int r = std::min(h - 1, static_cast<int>((a + 0.5) * h / gy));
      const int c = std::min(w - 1, static_cast<int>((b + 0.5) * w / gx));
      const std::size_t i = static_cast<std::size_t>(r) * w + c;
      init.insert(init.end(), pts.begin() + i * dim, pts.begin() + (i + 1) * dim);
    }
  }
  const int k = gy * gx;
  auto km = kmeans(pts, dim, k, std::move(init), p.seed, p.max_iterations, p.tolerance);

  int count = 0;
  const int min_size = std::max(1, static_cast<int>(n / (4 * static_cast<std::size_t>(p.target_count))));
  auto labels = connected_cleanup(km.labels, h, w, min_size, count);

  SubsampleResult res;
  res.map = {h, w, count, labels};
  res.set = build_segments(f, labels, count, SubsampleStrategy::slic_like);
  res.requested = p.target_count;
  res.effective = count;
  return res;
}

SubsampleResult subsample_knn(const FeatureImage& f, const SubsampleParams& p) {
  const std::size_t n = f.pixels();
  const auto dim = static_cast<std::size_t>(f.dim);
  std::vector<double> pts(n * dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t e = 0; e < dim; ++e) pts[i * dim + e] = f.at(static_cast<int>(e), i);
  auto km = kmeans(pts, dim, p.target_count, {}, p.seed, p.max_iterations, p.tolerance);

  SubsampleResult res;
  res.map = {f.height, f.width, km.clusters, km.labels};
  res.set = build_segments(f, km.labels, km.clusters, SubsampleStrategy::semantic_knn);
  res.requested = p.target_count;
  res.effective = km.clusters;
  return res;
}

}  // namespace

SubsampleResult subsample(const FeatureImage& features, std::span<const Rgb> color, const SubsampleParams& params) {
  if (params.target_count < 1 || static_cast<std::size_t>(params.target_count) > features.pixels())
    throw std::invalid_argument("target_count must be in [1, H*W]");
  switch (params.strategy) {
    case SubsampleStrategy::random: return subsample_random(features, params);
    case SubsampleStrategy::slic_like: return subsample_slic(features, color, params);
    case SubsampleStrategy::semantic_knn: return subsample_knn(features, params);
  }
  throw std::invalid_argument("unknown strategy");
}

// ---------------------------------------------------------------------------
// camera scheduler

CameraScheduler::CameraScheduler(std::vector<Entry> entries) : entries_(std::move(entries)) {
  for (const auto& e : entries_) {
    if (e.weight < 0) throw std::invalid_argument("camera weight must be non-negative");
    total_weight_ += e.weight;
  }
  if (total_weight_ <= 0) throw std::invalid_argument("camera scheduler needs at least one positive weight");
}

// Moves to the next round-robin slot; returns true when it lands on a valid slot.
bool CameraScheduler::advance() {
  if (emitted_ < entries_[index_].weight) return true;
  emitted_ = 0;
  index_ = (index_ + 1) % entries_.size();
  return emitted_ < entries_[index_].weight;
}

const std::string& CameraScheduler::next() {
  while (!advance()) {
  }
  ++emitted_;
  return entries_[index_].camera_id;
}

std::optional<std::string> CameraScheduler::next(const std::function<bool(const std::string&)>& available) {
  for (int tries = 0; tries < total_weight_; ++tries) {
    const std::string& id = next();
    if (available(id)) return id;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// synthetic extractor

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

SyntheticExtractor::SyntheticExtractor(const TerrainWorld& world, SyntheticExtractorParams params)
    : params_(params) {
  const int dim = params_.embedding_dim;
  if (static_cast<int>(world.embedding_dim()) != dim)
    throw std::invalid_argument("world prototypes do not match the extractor embedding dimension");
  for (const auto& d : world.terrain_defs()) {
    prototypes_.emplace_back(d.feature_prototype.begin(), d.feature_prototype.end());
    noise_std_.push_back(d.feature_noise_std);
  }

  std::mt19937_64 rng(mix_seed(params_.seed, 0x6d6978));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(dim, dim);
  for (int c = 0; c < dim; ++c)
    for (int r = 0; r < dim; ++r) g(r, c) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd rmat = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < dim; ++c)
    if (rmat(c, c) < 0.0) q.col(c) *= -1.0;
  mixing_.resize(static_cast<std::size_t>(dim) * dim);
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) mixing_[static_cast<std::size_t>(r) * dim + c] = q(r, c);

  const int radius = std::max(0, params_.blur_radius);
  if (radius == 0) {
    kernel_ = {1.0};
  } else {
    const double sigma = radius / 2.0;
    for (int i = -radius; i <= radius; ++i) kernel_.push_back(std::exp(-0.5 * i * i / (sigma * sigma)));
    const double s = std::accumulate(kernel_.begin(), kernel_.end(), 0.0);
    for (auto& v : kernel_) v /= s;
  }
}

std::vector<double> SyntheticExtractor::mixed_prototype(TerrainId id) const {
  const int dim = params_.embedding_dim;
  std::vector<double> out(dim, 0.0);
  const auto& p = prototypes_.at(static_cast<std::size_t>(id));
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) out[r] += mixing_[static_cast<std::size_t>(r) * dim + c] * p[c];
  return out;
}

FeatureImage SyntheticExtractor::extract(const Observation& obs) {
  const int dim = params_.embedding_dim;
  const int h = obs.height;
  const int w = obs.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;

  std::uint64_t tbits = 0;
  std::memcpy(&tbits, &obs.timestamp, sizeof(tbits));
  std::mt19937_64 rng(mix_seed(mix_seed(params_.seed, tbits), fnv1a(obs.camera_id)));
  std::normal_distribution<double> normal(0.0, 1.0);

  // white noise -> separable blur -> unit variance
  std::vector<double> noise(static_cast<std::size_t>(dim) * n);
  for (auto& v : noise) v = normal(rng);
  const int radius = static_cast<int>(kernel_.size() / 2);
  if (radius > 0) {
    double energy = 0.0;
    for (double k : kernel_) energy += k * k;
    const double gain = 1.0 / energy;  // 2-D variance of the separable kernel is energy^2
    std::vector<double> tmp(n);
    for (int e = 0; e < dim; ++e) {
      double* plane = noise.data() + static_cast<std::size_t>(e) * n;
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
          double acc = 0.0;
          for (int k = -radius; k <= radius; ++k)
            acc += kernel_[k + radius] * plane[static_cast<std::size_t>(r) * w + std::clamp(c + k, 0, w - 1)];
          tmp[static_cast<std::size_t>(r) * w + c] = acc;
        }
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
          double acc = 0.0;
          for (int k = -radius; k <= radius; ++k)
            acc += kernel_[k + radius] * tmp[static_cast<std::size_t>(std::clamp(r + k, 0, h - 1)) * w + c];
          plane[static_cast<std::size_t>(r) * w + c] = acc * gain;
        }
    }
  }

  FeatureImage out(dim, h, w);
  std::vector<double> v(dim);
  for (std::size_t p = 0; p < n; ++p) {
    const TerrainId id = obs.gt_terrain[p];
    if (id == kNoTerrain) continue;
    const auto& proto = prototypes_[static_cast<std::size_t>(id)];
    const double sd = noise_std_[static_cast<std::size_t>(id)];
    for (int e = 0; e < dim; ++e) v[e] = proto[e] + sd * noise[static_cast<std::size_t>(e) * n + p];
    for (int r = 0; r < dim; ++r) {
      const double* row = mixing_.data() + static_cast<std::size_t>(r) * dim;
      double acc = 0.0;
      for (int c = 0; c < dim; ++c) acc += row[c] * v[c];
      out.at(r, p) = static_cast<float>(acc);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// feature log

std::string format_feature_record(const FeatureLogRecord& r) {
  json j{{"timestamp", r.timestamp},
         {"camera_id", r.camera_id},
         {"pose", {r.pose.x, r.pose.y, r.pose.theta}},
         {"H", r.height},
         {"W", r.width},
         {"E", r.dim},
         {"offset", r.offset},
         {"byte_length", r.byte_length}};
  return j.dump();
}

FeatureLogRecord parse_feature_record(const std::string& line) {
  try {
    const auto j = json::parse(line);
    FeatureLogRecord r;
    r.timestamp = j.at("timestamp").get<double>();
    r.camera_id = j.at("camera_id").get<std::string>();
    const auto pose = j.at("pose").get<std::vector<double>>();
    if (pose.size() != 3) throw FeatureLogError("pose must have three entries");
    r.pose = {pose[0], pose[1], pose[2]};
    r.height = j.at("H").get<int>();
    r.width = j.at("W").get<int>();
    r.dim = j.at("E").get<int>();
    r.offset = j.at("offset").get<std::uint64_t>();
    r.byte_length = j.at("byte_length").get<std::uint64_t>();
    return r;
  } catch (const json::exception& e) {
    throw FeatureLogError(std::string("bad feature log record: ") + e.what());
  }
}

FeatureLogWriter::FeatureLogWriter(const std::filesystem::path& index_path, const std::filesystem::path& blob_path)
    : blob_(blob_path, std::ios::binary | std::ios::trunc) {
  if (!index_path.empty()) {
    index_.open(index_path, std::ios::trunc);
    if (!index_) throw FeatureLogError("cannot open " + index_path.string());
  }
  if (!blob_) throw FeatureLogError("cannot open " + blob_path.string());
}

FeatureLogRecord FeatureLogWriter::append_blob(double timestamp, const std::string& camera_id, const Pose2& pose,
                                               const FeatureImage& img) {
  FeatureLogRecord r{timestamp, camera_id, pose, img.height, img.width, img.dim, offset_, img.data.size() * 4};
  if constexpr (std::endian::native == std::endian::little) {
    blob_.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(r.byte_length));
  } else {
    for (float v : img.data) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      char b[4] = {static_cast<char>(bits), static_cast<char>(bits >> 8), static_cast<char>(bits >> 16),
                   static_cast<char>(bits >> 24)};
      blob_.write(b, 4);
    }
  }
  if (!blob_) throw FeatureLogError("feature blob write failed");
  offset_ += r.byte_length;
  return r;
}

FeatureLogRecord FeatureLogWriter::append(double timestamp, const std::string& camera_id, const Pose2& pose,
                                          const FeatureImage& img) {
  auto r = append_blob(timestamp, camera_id, pose, img);
  if (index_.is_open()) index_ << format_feature_record(r) << '\n';
  return r;
}

void FeatureLogWriter::flush() {
  blob_.flush();
  if (index_.is_open()) index_.flush();
}

FeatureLogReader::FeatureLogReader(const std::filesystem::path& index_path, const std::filesystem::path& blob_path)
    : blob_path_(blob_path) {
  std::ifstream in(index_path);
  if (!in) throw FeatureLogError("cannot open " + index_path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) records_.push_back(parse_feature_record(line));
  }
}

FeatureLogReader::FeatureLogReader(const std::filesystem::path& blob_path) : blob_path_(blob_path) {}

FeatureImage FeatureLogReader::read(const FeatureLogRecord& r) const {
  FeatureImage img(r.dim, r.height, r.width);
  if (r.byte_length != img.data.size() * 4)
    throw FeatureLogError("record byte_length does not match E*H*W at offset " + std::to_string(r.offset));
  std::ifstream in(blob_path_, std::ios::binary);
  if (!in) throw FeatureLogError("cannot open " + blob_path_.string());
  in.seekg(static_cast<std::streamoff>(r.offset));
  std::vector<unsigned char> raw(r.byte_length);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::uint64_t>(in.gcount()) != r.byte_length)
    throw FeatureLogError("feature blob truncated at offset " + std::to_string(r.offset));
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(raw[4 * i]) | (static_cast<std::uint32_t>(raw[4 * i + 1]) << 8) |
                               (static_cast<std::uint32_t>(raw[4 * i + 2]) << 16) |
                               (static_cast<std::uint32_t>(raw[4 * i + 3]) << 24);
    img.data[i] = std::bit_cast<float>(bits);
  }
  return img;
}

const FeatureLogRecord* FeatureLogReader::find(double timestamp, const std::string& camera_id) const {
  for (const auto& r : records_)
    if (r.timestamp == timestamp && r.camera_id == camera_id) return &r;
  return nullptr;
}

ReplayExtractor::ReplayExtractor(std::shared_ptr<const FeatureLogReader> reader, int embedding_dim)
    : reader_(std::move(reader)), dim_(embedding_dim) {}

FeatureImage ReplayExtractor::extract(const Observation& obs) {
  const auto* rec = reader_->find(obs.timestamp, obs.camera_id);
  if (rec == nullptr) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "feature log has no frame for camera '" << obs.camera_id << "' at timestamp " << obs.timestamp;
    throw FeatureLogError(msg.str());
  }
  if (rec->dim != dim_) throw FeatureLogError("feature log embedding dimension mismatch");
  return reader_->read(*rec);
}

// ---------------------------------------------------------------------------

FeatureImage extract_features(const Observation& obs, FeatureExtractor& extractor, const PerceptionParams& params) {
  auto img = extractor.extract(obs);
  if (img.dim != extractor.embedding_dim()) throw std::invalid_argument("extractor returned wrong embedding dimension");
  return resize_nearest(img, params.working_height, params.working_width);
}

FeatureFrame build_feature_frame(const Observation& obs, FeatureExtractor& extractor, const PerceptionParams& params,
                                 CameraRole role, std::uint64_t sequence) {
  FeatureFrame frame;
  frame.camera_id = obs.camera_id;
  frame.role = role;
  frame.timestamp = obs.timestamp;
  frame.sequence = sequence;
  frame.robot_pose = obs.robot_pose;
  frame.height = params.working_height;
  frame.width = params.working_width;

  auto features = extract_features(obs, extractor, params);
  const std::size_t n = features.pixels();
  frame.pixel_to_world.resize(n);
  frame.valid.resize(n);
  std::vector<Rgb> color(n);
  for (int r = 0; r < frame.height; ++r) {
    const int sr = std::min(obs.height - 1, static_cast<int>((r + 0.5) * obs.height / frame.height));
    for (int c = 0; c < frame.width; ++c) {
      const int sc = std::min(obs.width - 1, static_cast<int>((c + 0.5) * obs.width / frame.width));
      const std::size_t src = obs.index(sr, sc);
      const std::size_t dst = static_cast<std::size_t>(r) * frame.width + c;
      frame.pixel_to_world[dst] = obs.pixel_to_world[src];
      frame.valid[dst] = obs.valid(src) ? 1 : 0;
      color[dst] = obs.color[src];
    }
  }

  auto sp = params.subsample;
  sp.seed = mix_seed(params.subsample.seed, sequence);
  auto sub = subsample(features, color, sp);
  frame.segments = std::move(sub.map);
  frame.segment_set = std::move(sub.set);
  if (params.keep_features) frame.features = std::move(features);
  return frame;
}

}  // namespace travlearn
