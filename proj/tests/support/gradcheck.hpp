#pragma once

// Central finite-difference check of evaluate_batch's analytic gradient.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "travlearn/learner.hpp"

namespace gradcheck {

using namespace travlearn;

enum class Variant { reco_only, trav_only, total };

struct Outcome {
  double relative_error = 0.0;
  std::size_t coordinates = 0;
};

/// One random (parameters, batch) draw. Confidences are held fixed, as they are
/// constants for the gradient. `per_tensor` coordinates are drawn from each of
/// the eight parameter tensors (all of them when the tensor is smaller).
inline Outcome check(std::uint64_t seed, Variant variant, int input_dim = 8, int batch_size = 4,
                     std::size_t per_tensor = 16, double h = 1e-5) {
  std::mt19937_64 rng(seed);
  const ModelShape shape{input_dim, 256, 32};
  TravModel model = TravModel::initialized(shape, rng());
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  std::vector<std::vector<double>> emb(batch_size, std::vector<double>(input_dim));
  std::vector<TrainingSample> batch(batch_size);
  std::vector<double> conf(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    for (auto& v : emb[i]) v = n01(rng);
    batch[i].embedding = emb[i];
    batch[i].traversed = i % 2 == 0;
    batch[i].target = u01(rng);
    // untraversed items cover c = 0, c = 1 and values between
    conf[i] = batch[i].traversed ? 1.0 : (i == 1 ? 0.0 : (i == 3 ? 1.0 : u01(rng)));
    if (i >= 4) conf[i] = batch[i].traversed ? 1.0 : u01(rng);
  }

  LossWeights w;
  if (variant == Variant::reco_only) w.w_trav = 0.0;
  if (variant == Variant::trav_only) w.w_reco = 0.0;

  std::vector<double> grad(model.params().size());
  evaluate_batch(model, batch, w, {}, grad, &conf);

  const ParamLayout& l = model.layout();
  const std::size_t bounds[9] = {l.w1, l.b1, l.w2, l.b2, l.w_reco, l.b_reco, l.w_trav, l.b_trav, l.total};
  std::vector<std::size_t> coords;
  for (int t = 0; t < 8; ++t) {
    const std::size_t lo = bounds[t], hi = bounds[t + 1];
    if (hi - lo <= per_tensor) {
      for (std::size_t k = lo; k < hi; ++k) coords.push_back(k);
    } else {
      std::uniform_int_distribution<std::size_t> pick(lo, hi - 1);
      for (std::size_t k = 0; k < per_tensor; ++k) coords.push_back(pick(rng));
    }
  }

  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  auto params = model.params();
  for (std::size_t k : coords) {
    const double orig = params[k];
    params[k] = orig + h;
    const double up = evaluate_batch(model, batch, w, {}, {}, &conf).total;
    params[k] = orig - h;
    const double down = evaluate_batch(model, batch, w, {}, {}, &conf).total;
    params[k] = orig;
    const double numeric = (up - down) / (2.0 * h);
    diff2 += (grad[k] - numeric) * (grad[k] - numeric);
    a2 += grad[k] * grad[k];
    n2 += numeric * numeric;
  }
  const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-300});
  return {std::sqrt(diff2) / scale, coords.size()};
}

}  // namespace gradcheck
