#include "stable_align/heatmap.hpp"

#include <cmath>
#include <random>

namespace stable_align {

HeatmapStack make_gaussian_heatmap(const LandmarkSet& landmarks, int height, int width,
                                   double sigma) {
  require(sigma > 0.0, "sigma must be positive");
  require(height >= 3 && width >= 3, "grid must be at least 3x3");
  HeatmapStack stack;
  stack.reserve(landmarks.size());
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (const auto& p : landmarks) {
    require(p.allFinite(), "landmark coordinates must be finite");
    require(p.x() >= 0.0 && p.x() < width && p.y() >= 0.0 && p.y() < height,
            "landmark outside grid");
    Heatmap map(height, width);
    for (int r = 0; r < height; ++r) {
      const double dy = r - p.y();
      for (int c = 0; c < width; ++c) {
        const double dx = c - p.x();
        map(r, c) = std::exp(-(dx * dx + dy * dy) * inv2s2);
      }
    }
    stack.push_back(std::move(map));
  }
  return stack;
}

HeatmapStack add_gaussian_noise(const HeatmapStack& stack, double noise_sigma,
                                std::uint64_t seed) {
  check_stack(stack);
  require(noise_sigma >= 0.0, "noise_sigma must be non-negative");
  if (noise_sigma == 0.0) return stack;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sigma);
  HeatmapStack out;
  out.reserve(stack.size());
  for (const auto& map : stack) {
    Heatmap noisy = map;
    for (Eigen::Index r = 0; r < noisy.rows(); ++r)
      for (Eigen::Index c = 0; c < noisy.cols(); ++c)
        noisy(r, c) = std::clamp(noisy(r, c) + noise(rng), 0.0, 1.0);
    out.push_back(std::move(noisy));
  }
  return out;
}

namespace {

Eigen::VectorXd blur_kernel(double sigma, int radius) {
  Eigen::VectorXd k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i)
    k(i + radius) = std::exp(-0.5 * (i * i) / (sigma * sigma));
  k /= k.sum();
  return k;
}

// 1-D pass along the rows of `in` with clamp-to-edge indexing.
Grid blur_rows(const Grid& in, const Eigen::VectorXd& kernel, int radius) {
  Grid out(in.rows(), in.cols());
  const int w = static_cast<int>(in.cols());
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel(i + radius) * in(r, std::clamp(c + i, 0, w - 1));
      out(r, c) = acc;
    }
  }
  return out;
}

}  // namespace

Heatmap gaussian_blur(const Heatmap& map, double blur_sigma) {
  check_heatmap(map);
  require(blur_sigma >= 0.0, "blur_sigma must be non-negative");
  if (blur_sigma == 0.0) return map;
  const int radius = static_cast<int>(std::ceil(3.0 * blur_sigma));
  const Eigen::VectorXd kernel = blur_kernel(blur_sigma, radius);
  Grid horizontal = blur_rows(map, kernel, radius);
  Grid vertical = blur_rows(horizontal.transpose(), kernel, radius);
  return vertical.transpose();
}

HeatmapStack gaussian_blur(const HeatmapStack& stack, double blur_sigma) {
  check_stack(stack);
  if (blur_sigma == 0.0) return stack;
  HeatmapStack out;
  out.reserve(stack.size());
  for (const auto& map : stack) out.push_back(gaussian_blur(map, blur_sigma));
  return out;
}

}  // namespace stable_align
