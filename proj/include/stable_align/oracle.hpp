#pragma once

#include <functional>

#include "stable_align/metrics.hpp"
#include "stable_align/types.hpp"

namespace stable_align {

// Slow, independent reference implementations for self-verification of the
// fast paths (decoder, gradients, metrics).

struct OracleReport {
  double max_abs_discrepancy = 0.0;
  double max_rel_discrepancy = 0.0;
  int n_cases = 0;
  std::uint64_t worst_case_seed = 0;

  void record(double abs_disc, double rel_disc, std::uint64_t seed);
  std::string to_json() const;
};

// Thresholded mass centroid by direct double loop, 0-based.
Eigen::Vector2d oracle_centroid(const Heatmap& map, double threshold);

// Component-wise central differences of a scalar function.
Eigen::VectorXd oracle_grad(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& point, double epsilon);

// NRMSE / MCV / MAV by naive loops over the raw trajectories.
struct OracleMetrics {
  double nrmse = 0.0;
  double mcv = 0.0;
  double mav = 0.0;
};
OracleMetrics oracle_metrics(const std::vector<LandmarkSeries>& preds,
                             const std::vector<LandmarkSeries>& truths,
                             const NormalizationRule& rule, double mcv_offset);

}  // namespace stable_align
