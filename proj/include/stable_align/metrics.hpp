#pragma once

#include <vector>

#include "stable_align/types.hpp"

namespace stable_align {

struct NormalizationRule {
  enum class Kind { InterOcular, BoxDiagonal, Fixed };
  Kind kind = Kind::Fixed;
  int left_eye = 0;
  int right_eye = 1;
  double box_width = 0.0;
  double box_height = 0.0;
  double fixed_value = 1.0;

  static NormalizationRule inter_ocular(int left, int right);
  static NormalizationRule box_diagonal(double width, double height);
  static NormalizationRule fixed(double value);

  // Throws on a non-positive normalizer.
  double normalizer(const LandmarkSet& truth) const;
};

struct MetricsReport {
  double nrmse = 0.0;  // x100
  double fr = 0.0;
  double auc = 0.0;
  double mcv = 0.0;
  double mav = 0.0;  // px^2
  std::vector<double> per_landmark_nrmse;
  std::vector<double> per_landmark_mcv;
  std::vector<double> per_landmark_mav;
  int decode_failures = 0;
};

// Mean over landmarks of the normalized Euclidean error, x100.
double nme(const LandmarkSet& pred, const LandmarkSet& truth,
           const NormalizationRule& rule);

// Per-frame, per-landmark normalized errors averaged over the sequence, x100.
double nrmse_sequence(const LandmarkSeries& preds, const LandmarkSeries& truths,
                      const NormalizationRule& rule);

// nme_values are fractions (not x100). fr = share above the cutoff; auc is the
// exact step-function integral of the CED on [0, cutoff], normalized by cutoff.
double fr(const std::vector<double>& nme_values, double cutoff = 0.10);
double auc_ced(const std::vector<double>& nme_values, double cutoff = 0.10);

// Sample std (N-1) over mean. Errors on N < 2 or zero mean.
double cvar(const std::vector<double>& samples);

// Allan variance: sum of squared successive differences over 2(T-1).
double avar(const std::vector<double>& series);

// Per video: CVar per landmark per axis (coordinates offset by `offset` to keep
// the mean away from zero), averaged; MCV is the mean over videos.
double mcv(const std::vector<LandmarkSeries>& videos, double offset);

// AVar averaged over landmarks, axes, and videos.
double mav(const std::vector<LandmarkSeries>& videos);

// Per-landmark variants used for report breakdowns.
std::vector<double> per_landmark_mcv(const std::vector<LandmarkSeries>& videos,
                                     double offset);
std::vector<double> per_landmark_mav(const std::vector<LandmarkSeries>& videos);

}  // namespace stable_align
