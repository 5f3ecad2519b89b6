#include "travlearn/learner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace travlearn {

using nlohmann::json;

std::size_t ModelShape::parameter_count() const { return ParamLayout(*this).total; }

ParamLayout::ParamLayout(const ModelShape& s) {
  const auto e = static_cast<std::size_t>(s.input_dim);
  const auto h1 = static_cast<std::size_t>(s.hidden1);
  const auto h2 = static_cast<std::size_t>(s.hidden2);
  w1 = 0;
  b1 = w1 + e * h1;
  w2 = b1 + h1;
  b2 = w2 + h1 * h2;
  w_reco = b2 + h2;
  b_reco = w_reco + h2 * e;
  w_trav = b_reco + e;
  b_trav = w_trav + h2;
  total = b_trav + 1;
}

TravModel::TravModel(ModelShape shape) : shape_(shape), layout_(shape), params_(layout_.total, 0.0) {
  if (shape.input_dim <= 0 || shape.hidden1 <= 0 || shape.hidden2 <= 0)
    throw std::invalid_argument("model dimensions must be positive");
}

TravModel TravModel::initialized(ModelShape shape, std::uint64_t seed) {
  TravModel m(shape);
  std::mt19937_64 rng(seed);
  const auto& l = m.layout_;
  auto fill = [&](std::size_t from, std::size_t to, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = from; i < to; ++i) m.params_[i] = u(rng);
  };
  fill(l.w1, l.w2, shape.input_dim);
  fill(l.w2, l.w_reco, shape.hidden1);
  fill(l.w_reco, l.w_trav, shape.hidden2);
  fill(l.w_trav, l.total, shape.hidden2);
  return m;
}

bool TravModel::finite() const {
  return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

// y = b + x W with W stored input-major; the per-output summation order is fixed
// (ascending input index) so results do not depend on batching.
void dense(const double* w, const double* b, const double* x, int in, int out, double* y) {
  std::copy(b, b + out, y);
  for (int i = 0; i < in; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = w + static_cast<std::size_t>(i) * out;
    for (int j = 0; j < out; ++j) y[j] += row[j] * xi;
  }
}

void relu(std::vector<double>& v) {
  for (auto& x : v) x = x > 0.0 ? x : 0.0;
}

}  // namespace

ForwardResult forward(const TravModel& model, std::span<const double> e) {
  const auto& s = model.shape();
  if (static_cast<int>(e.size()) != s.input_dim)
    throw std::invalid_argument("embedding has " + std::to_string(e.size()) + " channels, model expects " +
                                std::to_string(s.input_dim));
  const auto& l = model.layout();
  const double* p = model.params().data();

  ForwardResult r;
  r.cache.hidden1.resize(s.hidden1);
  r.cache.hidden2.resize(s.hidden2);
  r.reconstruction.resize(s.input_dim);
  dense(p + l.w1, p + l.b1, e.data(), s.input_dim, s.hidden1, r.cache.hidden1.data());
  relu(r.cache.hidden1);
  dense(p + l.w2, p + l.b2, r.cache.hidden1.data(), s.hidden1, s.hidden2, r.cache.hidden2.data());
  relu(r.cache.hidden2);
  dense(p + l.w_reco, p + l.b_reco, r.cache.hidden2.data(), s.hidden2, s.input_dim, r.reconstruction.data());
  double logit = 0.0;
  dense(p + l.w_trav, p + l.b_trav, r.cache.hidden2.data(), s.hidden2, 1, &logit);
  r.traversability = logistic(logit);
  return r;
}

double reconstruction_error(std::span<const double> reco, std::span<const double> e) {
  double acc = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double d = reco[i] - e[i];
    acc += d * d;
  }
  return acc / static_cast<double>(e.size());
}

double loss_reco(const TravModel& model, std::span<const double> e, bool traversed) {
  if (!traversed) return 0.0;
  return reconstruction_error(forward(model, e).reconstruction, e);
}

ConfidenceStats fit_confidence_stats(std::span<const double> losses, const ConfidenceStats& previous,
                                     double sigma_floor) {
  if (losses.empty()) return previous;
  const double n = static_cast<double>(losses.size());
  const double mu = std::accumulate(losses.begin(), losses.end(), 0.0) / n;
  double var = 0.0;
  for (double l : losses) var += (l - mu) * (l - mu);
  return {mu, std::max(std::sqrt(var / n), sigma_floor)};
}

double confidence(double reco_loss, const ConfidenceStats& stats, double k_sigma) {
  if (reco_loss <= stats.mu) return 1.0;
  const double width = stats.sigma * k_sigma;
  const double d = reco_loss - stats.mu;
  return std::exp(-(d * d) / (2.0 * width * width));
}

double loss_trav(double predicted, double target, bool traversed, double c) {
  if (traversed) return (predicted - target) * (predicted - target);
  return (1.0 - c) * predicted * predicted;
}

void LossWeights::validate() const {
  if (!(w_trav >= 0.0) || !(w_reco >= 0.0)) throw std::invalid_argument("loss weights must be non-negative");
  if (!(k_sigma > 0.0)) throw std::invalid_argument("k_sigma must be positive");
  if (!(fpr_max > 0.0 && fpr_max <= 1.0)) throw std::invalid_argument("fpr_max must lie in (0, 1]");
  if (!(sigma_floor > 0.0)) throw std::invalid_argument("sigma floor must be positive");
}

double total_loss(double mean_trav, double mean_reco, const LossWeights& w) {
  return w.w_trav * mean_trav + w.w_reco * mean_reco;
}

BatchEvaluation evaluate_batch(const TravModel& model, std::span<const TrainingSample> batch, const LossWeights& weights,
                               const ConfidenceStats& previous_stats, std::span<double> gradient,
                               const std::vector<double>* fixed_confidences) {
  BatchEvaluation out;
  out.stats = previous_stats;
  if (!gradient.empty()) {
    if (gradient.size() != model.params().size()) throw std::invalid_argument("gradient buffer size mismatch");
    std::fill(gradient.begin(), gradient.end(), 0.0);
  }
  const std::size_t n = batch.size();
  if (n == 0) return out;
  if (fixed_confidences != nullptr && fixed_confidences->size() != n)
    throw std::invalid_argument("fixed confidences size mismatch");

  std::vector<ForwardResult> fwd;
  fwd.reserve(n);
  std::vector<double> err(n);
  std::vector<double> traversed_err;
  for (std::size_t i = 0; i < n; ++i) {
    fwd.push_back(forward(model, batch[i].embedding));
    err[i] = reconstruction_error(fwd.back().reconstruction, batch[i].embedding);
    if (batch[i].traversed) {
      traversed_err.push_back(err[i]);
      ++out.n_traversed;
    }
  }

  if (fixed_confidences != nullptr) {
    out.confidences = *fixed_confidences;
  } else {
    out.stats = fit_confidence_stats(traversed_err, previous_stats, weights.sigma_floor);
    out.confidences.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.confidences[i] = confidence(err[i], out.stats, weights.k_sigma);
  }

  double sum_trav = 0.0;
  double sum_reco = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum_trav += loss_trav(fwd[i].traversability, batch[i].target, batch[i].traversed, out.confidences[i]);
    if (batch[i].traversed) sum_reco += err[i];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.trav = sum_trav * inv_n;
  out.reco = sum_reco * inv_n;
  out.total = total_loss(out.trav, out.reco, weights);
  if (gradient.empty()) return out;

  const auto& s = model.shape();
  const auto& l = model.layout();
  const double* p = model.params().data();
  double* g = gradient.data();
  const int e_dim = s.input_dim;
  std::vector<double> g_reco(e_dim);
  std::vector<double> g_h2(s.hidden2);
  std::vector<double> g_h1(s.hidden1);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = fwd[i];
    const auto& x = batch[i].embedding;
    const double tau = f.traversability;

    // heads
    const double reco_scale = batch[i].traversed ? weights.w_reco * inv_n * 2.0 / e_dim : 0.0;
    for (int e = 0; e < e_dim; ++e) g_reco[e] = reco_scale * (f.reconstruction[e] - x[e]);
    const double d_tau = batch[i].traversed ? 2.0 * (tau - batch[i].target) : 2.0 * (1.0 - out.confidences[i]) * tau;
    const double g_logit = weights.w_trav * inv_n * d_tau * tau * (1.0 - tau);

    for (int k = 0; k < s.hidden2; ++k) {
      const double hk = f.cache.hidden2[k];
      double acc = p[l.w_trav + k] * g_logit;
      const double* wr = p + l.w_reco + static_cast<std::size_t>(k) * e_dim;
      for (int e = 0; e < e_dim; ++e) acc += wr[e] * g_reco[e];
      g_h2[k] = hk > 0.0 ? acc : 0.0;
      if (hk != 0.0) {
        double* gwr = g + l.w_reco + static_cast<std::size_t>(k) * e_dim;
        for (int e = 0; e < e_dim; ++e) gwr[e] += hk * g_reco[e];
        g[l.w_trav + k] += hk * g_logit;
      }
    }
    for (int e = 0; e < e_dim; ++e) g[l.b_reco + e] += g_reco[e];
    g[l.b_trav] += g_logit;

    // second trunk layer
    for (int j = 0; j < s.hidden1; ++j) {
      const double hj = f.cache.hidden1[j];
      if (hj == 0.0) {
        g_h1[j] = 0.0;
        continue;
      }
      const double* w2 = p + l.w2 + static_cast<std::size_t>(j) * s.hidden2;
      double* gw2 = g + l.w2 + static_cast<std::size_t>(j) * s.hidden2;
      double acc = 0.0;
      for (int k = 0; k < s.hidden2; ++k) {
        acc += w2[k] * g_h2[k];
        gw2[k] += hj * g_h2[k];
      }
      g_h1[j] = acc;
    }
    for (int k = 0; k < s.hidden2; ++k) g[l.b2 + k] += g_h2[k];

    // first trunk layer
    for (int d = 0; d < e_dim; ++d) {
      const double xd = x[d];
      if (xd == 0.0) continue;
      double* gw1 = g + l.w1 + static_cast<std::size_t>(d) * s.hidden1;
      for (int j = 0; j < s.hidden1; ++j) gw1[j] += xd * g_h1[j];
    }
    for (int j = 0; j < s.hidden1; ++j) g[l.b1 + j] += g_h1[j];
  }
  return out;
}

Adam::Adam(std::size_t parameter_count, AdamParams params)
    : params_(params), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw std::invalid_argument("Adam: size mismatch");
  ++steps_;
  const double b1 = params_.beta1;
  const double b2 = params_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] -= params_.learning_rate * m_hat / (std::sqrt(v_hat) + params_.epsilon);
  }
}

namespace {

std::vector<TrainingSample> gather(const MissionGraph& graph, std::span<const std::size_t> nodes) {
  std::vector<TrainingSample> batch;
  for (auto idx : nodes) {
    const auto& node = graph.nodes()[idx];
    const auto& segs = node.frame->segment_set.segments;
    for (std::size_t s = 0; s < segs.size(); ++s)
      batch.push_back({segs[s].mean_embedding, node.labels[s].score, node.labels[s].traversed});
  }
  return batch;
}

}  // namespace

TrainMetrics train_step(TravModel& model, Adam& adam, const MissionGraph& graph, const LossWeights& weights,
                        ConfidenceStats& stats, std::mt19937_64& rng) {
  TrainMetrics m;
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < graph.size(); ++i)
    if (graph.nodes()[i].valid()) valid.push_back(i);
  if (valid.empty()) return m;

  const std::size_t take = std::min<std::size_t>(kNodesPerBatch, valid.size());
  for (std::size_t i = 0; i < take; ++i) {
    const auto j = std::uniform_int_distribution<std::size_t>(i, valid.size() - 1)(rng);
    std::swap(valid[i], valid[j]);
  }
  valid.resize(take);

  const auto batch = gather(graph, valid);
  std::vector<double> grad(model.params().size());
  const auto eval = evaluate_batch(model, batch, weights, stats, grad);
  adam.step(model.params(), grad);
  stats = eval.stats;

  m.trained = true;
  m.step = adam.steps();
  m.total = eval.total;
  m.trav = eval.trav;
  m.reco = eval.reco;
  m.n_traversed = eval.n_traversed;
  m.n_segments = static_cast<int>(batch.size());
  m.n_nodes = static_cast<int>(take);
  m.stats = eval.stats;
  return m;
}

ThresholdLabel threshold_label(bool traversed, double c) {
  if (traversed) return ThresholdLabel::positive;
  return c < 0.5 ? ThresholdLabel::negative : ThresholdLabel::ignore;
}

ThresholdResult select_threshold(std::span<const double> scores, std::span<const ThresholdLabel> labels,
                                 double fpr_max) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
  ThresholdResult res;
  std::vector<double> negatives;
  std::vector<double> candidates;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == ThresholdLabel::ignore) continue;
    candidates.push_back(scores[i]);
    if (labels[i] == ThresholdLabel::negative) {
      negatives.push_back(scores[i]);
    } else {
      ++res.positives;
    }
  }
  res.negatives = static_cast<int>(negatives.size());
  if (negatives.empty()) {
    res.fallback = true;
    return res;
  }
  std::sort(negatives.begin(), negatives.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  const double n_neg = static_cast<double>(negatives.size());
  auto fpr_at = [&](double t) {
    const auto above = negatives.end() - std::lower_bound(negatives.begin(), negatives.end(), t);
    return static_cast<double>(above) / n_neg;
  };
  for (double c : candidates) {
    const double fpr = fpr_at(c);
    if (fpr <= fpr_max) {
      res.threshold = c;
      res.false_positive_rate = fpr;
      return res;
    }
  }
  // budget only met strictly above every observed score
  res.threshold = std::nextafter(candidates.back(), std::numeric_limits<double>::infinity());
  res.false_positive_rate = 0.0;
  return res;
}

ThresholdResult select_threshold(const TravModel& model, const MissionGraph& graph, const ConfidenceStats& stats,
                                 const LossWeights& weights) {
  std::vector<double> scores;
  std::vector<ThresholdLabel> labels;
  for (const auto& node : graph.nodes()) {
    const auto& segs = node.frame->segment_set.segments;
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const auto f = forward(model, segs[s].mean_embedding);
      const double c = confidence(reconstruction_error(f.reconstruction, segs[s].mean_embedding), stats, weights.k_sigma);
      scores.push_back(f.traversability);
      labels.push_back(threshold_label(node.labels[s].traversed, c));
    }
  }
  return select_threshold(scores, labels, weights.fpr_max);
}

ModelSnapshotPtr SnapshotPublisher::publish(const TravModel& model, double threshold, const ConfidenceStats& stats,
                                            std::uint64_t training_step) {
  if (!model.finite()) throw std::runtime_error("refusing to publish a model with non-finite parameters");
  auto snap = std::make_shared<ModelSnapshot>();
  snap->id = next_id_++;
  snap->training_step = training_step;
  snap->model = model;
  snap->threshold = threshold;
  snap->stats = stats;
  return snap;
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

constexpr const char* kCheckpointFormat = "travlearn-checkpoint";
constexpr int kCheckpointVersion = 1;

template <typename T, typename U>
void put_le(std::string& out, T value) {
  const auto bits = std::bit_cast<U>(value);
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

template <typename T, typename U>
T get_le(const unsigned char* p) {
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) bits |= static_cast<U>(p[b]) << (8 * b);
  return std::bit_cast<T>(bits);
}

}  // namespace

std::string serialize_snapshot(const ModelSnapshot& snap, BlobType type) {
  const auto& s = snap.model.shape();
  json header{{"format", kCheckpointFormat},
              {"version", kCheckpointVersion},
              {"E", s.input_dim},
              {"layers", {s.hidden1, s.hidden2}},
              {"step", snap.training_step},
              {"snapshot_id", snap.id},
              {"tau_thr", snap.threshold},
              {"mu_pos", snap.stats.mu},
              {"sigma_pos", snap.stats.sigma},
              {"dtype", type == BlobType::float32 ? "float32" : "float64"},
              {"param_count", snap.model.params().size()},
              {"layout", {"w1", "b1", "w2", "b2", "w_reco", "b_reco", "w_trav", "b_trav"}}};
  std::string out = header.dump();
  out.push_back('\n');
  for (double v : snap.model.params()) {
    if (type == BlobType::float32) {
      put_le<float, std::uint32_t>(out, static_cast<float>(v));
    } else {
      put_le<double, std::uint64_t>(out, v);
    }
  }
  return out;
}

ModelSnapshot deserialize_snapshot(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw CheckpointError("checkpoint header not terminated");
  json header;
  try {
    header = json::parse(bytes.substr(0, nl));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  if (header.value("format", "") != kCheckpointFormat) throw CheckpointError("not a checkpoint file");
  if (header.value("version", 0) != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + header.value("version", json()).dump());

  ModelShape shape;
  shape.input_dim = header.at("E").get<int>();
  const auto layers = header.at("layers").get<std::vector<int>>();
  if (layers.size() != 2) throw CheckpointError("expected two hidden layer sizes");
  shape.hidden1 = layers[0];
  shape.hidden2 = layers[1];

  ModelSnapshot snap;
  snap.model = TravModel(shape);
  snap.training_step = header.at("step").get<std::uint64_t>();
  snap.id = header.value("snapshot_id", std::uint64_t{0});
  snap.threshold = header.at("tau_thr").get<double>();
  snap.stats = {header.at("mu_pos").get<double>(), header.at("sigma_pos").get<double>()};
  const std::string dtype = header.at("dtype").get<std::string>();
  const std::size_t width = dtype == "float32" ? 4 : dtype == "float64" ? 8 : 0;
  if (width == 0) throw CheckpointError("unknown dtype " + dtype);
  const std::size_t count = header.at("param_count").get<std::size_t>();
  if (count != snap.model.params().size()) throw CheckpointError("parameter count does not match the layer sizes");
  if (bytes.size() - nl - 1 != count * width) throw CheckpointError("checkpoint blob has the wrong length");

  const auto* blob = reinterpret_cast<const unsigned char*>(bytes.data() + nl + 1);
  auto params = snap.model.params();
  for (std::size_t i = 0; i < count; ++i) {
    params[i] = width == 4 ? static_cast<double>(get_le<float, std::uint32_t>(blob + 4 * i))
                           : get_le<double, std::uint64_t>(blob + 8 * i);
  }
  return snap;
}

void save_checkpoint(const std::filesystem::path& path, const ModelSnapshot& snap, BlobType type) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot write " + path.string());
  const auto bytes = serialize_snapshot(snap, type);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("write failed for " + path.string());
}

ModelSnapshot load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return deserialize_snapshot(ss.str());
}

// ---------------------------------------------------------------------------

Learner::Learner(ModelShape shape, LossWeights weights, AdamParams adam, std::uint64_t seed)
    : model_(TravModel::initialized(shape, mix_seed(seed, 1))),
      weights_(weights),
      adam_(model_.params().size(), adam),
      rng_(mix_seed(seed, 2)) {
  weights_.validate();
}

Learner::Learner(const ModelSnapshot& warm, LossWeights weights, AdamParams adam, std::uint64_t seed)
    : model_(warm.model), weights_(weights), adam_(model_.params().size(), adam), stats_(warm.stats), rng_(mix_seed(seed, 2)) {
  weights_.validate();
}

void Learner::set_weights(const LossWeights& w) {
  w.validate();
  weights_ = w;
}

TrainMetrics Learner::train(const MissionGraph& graph) {
  return train_step(model_, adam_, graph, weights_, stats_, rng_);
}

ModelSnapshot Learner::current(const MissionGraph& graph) const {
  ModelSnapshot s;
  s.id = publisher_.published();
  s.training_step = adam_.steps();
  s.model = model_;
  s.threshold = select_threshold(model_, graph, stats_, weights_).threshold;
  s.stats = stats_;
  return s;
}

ModelSnapshotPtr Learner::publish(const MissionGraph& graph) {
  const auto thr = select_threshold(model_, graph, stats_, weights_);
  return publisher_.publish(model_, thr.threshold, stats_, adam_.steps());
}

}  // namespace travlearn
