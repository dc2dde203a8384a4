#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace stable_align {

// Row-major dense grid; the layout matches the on-disk .hms format.
using Grid = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One per-landmark probability map. values(row, col), unit-free.
using Heatmap = Grid;

// K per-landmark heatmaps for one frame, all with identical dimensions.
using HeatmapStack = std::vector<Heatmap>;

// K sub-pixel points, 0-based, (x = column, y = row) in pixels.
using LandmarkSet = std::vector<Eigen::Vector2d>;

// A landmark trajectory: one LandmarkSet per frame.
using LandmarkSeries = std::vector<LandmarkSet>;

struct DegradationConfig {
  double noise_sigma = 0.0;       // additive pixel noise std
  double blur_sigma = 0.0;        // Gaussian blur std, pixels
  double peak_jitter_sigma = 0.0; // std of random peak displacement, pixels
  std::uint64_t seed = 0;
};

class DegenerateHeatmap : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void check_heatmap(const Heatmap& map) {
  require(map.rows() >= 3 && map.cols() >= 3, "heatmap must be at least 3x3");
  require(map.allFinite(), "heatmap contains NaN/Inf");
}

inline void check_stack(const HeatmapStack& stack) {
  require(!stack.empty(), "heatmap stack is empty");
  for (const auto& map : stack) {
    check_heatmap(map);
    require(map.rows() == stack.front().rows() && map.cols() == stack.front().cols(),
            "heatmap stack channels differ in shape");
  }
}

// SplitMix64; used to derive independent per-sequence seeds.
inline std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace stable_align
