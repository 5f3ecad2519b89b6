#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "travlearn/worldsim.hpp"

namespace testutil {

using namespace travlearn;

// prototype sqrt(2) * e_k, as the world parser assigns by default
inline std::vector<float> unit_prototype(std::size_t dim, std::size_t k, double scale = std::sqrt(2.0)) {
  std::vector<float> v(dim, 0.0f);
  v[k % dim] = static_cast<float>(scale);
  return v;
}

inline TerrainDef terrain(const std::string& name, double traction, std::size_t dim, std::size_t k,
                          double noise = 0.0) {
  TerrainDef d;
  d.name = name;
  d.symbol = name.empty() ? '?' : name[0];
  d.traction = traction;
  d.feature_prototype = unit_prototype(dim, k);
  d.feature_noise_std = noise;
  d.color = {static_cast<std::uint8_t>(40 * k), static_cast<std::uint8_t>(200 - 40 * k), 100};
  return d;
}

/// World of `w` x `h` cells whose terrain comes from `pick(x, y)` at cell centres.
inline TerrainWorld make_world(double cell, int w, int h, std::vector<TerrainDef> defs,
                               const std::function<TerrainId(double, double)>& pick) {
  std::vector<TerrainId> cells(static_cast<std::size_t>(w) * h);
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i) cells[static_cast<std::size_t>(j) * w + i] = pick((i + 0.5) * cell, (j + 0.5) * cell);
  return TerrainWorld(cell, w, h, std::move(defs), std::move(cells));
}

inline TerrainWorld uniform_world(double traction, std::size_t dim = 8, double size = 20.0) {
  return make_world(0.25, static_cast<int>(size / 0.25), static_cast<int>(size / 0.25),
                    {terrain("ground", traction, dim, 0)}, [](double, double) { return TerrainId{0}; });
}

/// Two terrains split at x = split.
inline TerrainWorld split_world(double split, std::size_t dim = 8, double noise = 0.0, double size = 20.0) {
  return make_world(0.25, static_cast<int>(size / 0.25), static_cast<int>(size / 0.25),
                    {terrain("left", 1.0, dim, 0, noise), terrain("right", 0.0, dim, 1, noise)},
                    [split](double x, double) { return TerrainId{x < split ? 0 : 1}; });
}

}  // namespace testutil
