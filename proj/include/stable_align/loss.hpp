#pragma once

#include <functional>
#include <vector>

#include "stable_align/types.hpp"

namespace stable_align {

enum class PixelLossKind { L2, L1, SmoothL1, Wing, AWing, GemanMcClure };

struct JitterConfig {
  double theta = 1.0;    // jitter threshold / clamp
  double xi = 0.01;      // denominator regularizer
  double lambda = 1.0;   // baseline pixel-loss weight
  PixelLossKind pixel_loss = PixelLossKind::GemanMcClure;
};

struct LossValueGrad {
  double value = 0.0;
  Grid grad;  // d(value)/d(pred), per pixel
};

struct StackLossValueGrad {
  double value = 0.0;
  HeatmapStack grad;  // per channel, d(value)/d(s_t)
};

// Geman-McClure pixel loss, mean over pixels of d^2/(d^2 + theta^2).
LossValueGrad gm_pixel_loss(const Heatmap& pred, const Heatmap& truth, double theta);

// Dispatch on config.pixel_loss. Wing uses omega=10, epsilon=2; AWing uses
// omega=14, epsilon=1, alpha=2.1, theta=0.5. Mean reduction over pixels.
LossValueGrad pixel_loss(const Heatmap& pred, const Heatmap& truth,
                         const JitterConfig& config);

// Per-landmark modulation: min(||e_t - e_prev|| / (||c|| + xi), theta) with
// e = predicted - truth and c = truth_t - truth_prev. Values lie in [0, theta].
std::vector<double> jitter_modulation(const LandmarkSet& u_t, const LandmarkSet& hat_u_t,
                                      const LandmarkSet& u_prev,
                                      const LandmarkSet& hat_u_prev,
                                      const JitterConfig& config);

// True for landmark k iff ||e_t - e_prev|| > theta * ||c||.
std::vector<bool> jitter_criterion(const LandmarkSet& u_t, const LandmarkSet& hat_u_t,
                                   const LandmarkSet& u_prev,
                                   const LandmarkSet& hat_u_prev, double theta);

// Per channel k: (lambda + Psi_k) * pixel_loss(s_t[k], hat_s_t[k]); the total is
// the mean over channels. Psi is treated as a stop-gradient scalar, so the grad
// is the scaled pixel-loss gradient.
StackLossValueGrad jitter_loss(const HeatmapStack& s_t, const HeatmapStack& hat_s_t,
                               const LandmarkSet& u_t, const LandmarkSet& hat_u_t,
                               const LandmarkSet& u_prev, const LandmarkSet& hat_u_prev,
                               const JitterConfig& config);

// Central finite differences of `op` against its analytic gradient at `pred`.
// Returns max over pixels of |analytic - numeric| / max(1, |numeric|).
double grad_check(const std::function<LossValueGrad(const Heatmap&)>& op,
                  const Heatmap& pred, double epsilon);

}  // namespace stable_align
