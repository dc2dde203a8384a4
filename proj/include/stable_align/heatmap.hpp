#pragma once

#include "stable_align/types.hpp"

namespace stable_align {

// Unnormalized Gaussian targets, peak 1.0 when the landmark sits on a grid point.
HeatmapStack make_gaussian_heatmap(const LandmarkSet& landmarks, int height, int width,
                                   double sigma);

// i.i.d. N(0, noise_sigma^2) per pixel, then clamp to [0, 1]. Deterministic per seed.
HeatmapStack add_gaussian_noise(const HeatmapStack& stack, double noise_sigma,
                                std::uint64_t seed);

// Separable Gaussian convolution, radius ceil(3*sigma), kernel normalized to sum 1,
// clamp-to-edge borders. sigma = 0 is the identity.
Heatmap gaussian_blur(const Heatmap& map, double blur_sigma);
HeatmapStack gaussian_blur(const HeatmapStack& stack, double blur_sigma);

}  // namespace stable_align
