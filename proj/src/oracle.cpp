#include "stable_align/oracle.hpp"

#include <cmath>
#include <sstream>

namespace stable_align {

void OracleReport::record(double abs_disc, double rel_disc, std::uint64_t seed) {
  n_cases += 1;
  if (abs_disc > max_abs_discrepancy) {
    max_abs_discrepancy = abs_disc;
    worst_case_seed = seed;
  }
  max_rel_discrepancy = std::max(max_rel_discrepancy, rel_disc);
}

std::string OracleReport::to_json() const {
  std::ostringstream os;
  os << "{\"max_abs_discrepancy\":" << max_abs_discrepancy
     << ",\"max_rel_discrepancy\":" << max_rel_discrepancy << ",\"n_cases\":" << n_cases
     << ",\"worst_case_seed\":" << worst_case_seed << "}";
  return os.str();
}

Eigen::Vector2d oracle_centroid(const Heatmap& map, double threshold) {
  double mass = 0.0, mx = 0.0, my = 0.0;
  for (Eigen::Index r = 0; r < map.rows(); ++r) {
    for (Eigen::Index c = 0; c < map.cols(); ++c) {
      const double v = map(r, c) < threshold ? 0.0 : map(r, c);
      mass += v;
      mx += v * static_cast<double>(c);
      my += v * static_cast<double>(r);
    }
  }
  if (mass <= 0.0) throw DegenerateHeatmap("zero surviving mass");
  return {mx / mass, my / mass};
}

Eigen::VectorXd oracle_grad(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& point, double epsilon) {
  require(epsilon >= 1e-7 && epsilon <= 1e-3, "epsilon out of range");
  Eigen::VectorXd grad(point.size());
  Eigen::VectorXd probe = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    probe(i) = point(i) + epsilon;
    const double up = f(probe);
    probe(i) = point(i) - epsilon;
    const double down = f(probe);
    probe(i) = point(i);
    grad(i) = (up - down) / (2.0 * epsilon);
  }
  return grad;
}

OracleMetrics oracle_metrics(const std::vector<LandmarkSeries>& preds,
                             const std::vector<LandmarkSeries>& truths,
                             const NormalizationRule& rule, double mcv_offset) {
  require(!preds.empty() && preds.size() == truths.size(), "dataset shape mismatch");
  OracleMetrics out;

  // NRMSE: plain loops over videos, frames, landmarks.
  double nrmse_acc = 0.0;
  for (std::size_t v = 0; v < preds.size(); ++v) {
    double video_acc = 0.0;
    for (std::size_t t = 0; t < preds[v].size(); ++t) {
      const double n = rule.normalizer(truths[v][t]);
      double frame_acc = 0.0;
      for (std::size_t k = 0; k < preds[v][t].size(); ++k) {
        const double ex = preds[v][t][k].x() - truths[v][t][k].x();
        const double ey = preds[v][t][k].y() - truths[v][t][k].y();
        frame_acc += std::sqrt(ex * ex + ey * ey) / n;
      }
      video_acc += 100.0 * frame_acc / static_cast<double>(preds[v][t].size());
    }
    nrmse_acc += video_acc / static_cast<double>(preds[v].size());
  }
  out.nrmse = nrmse_acc / static_cast<double>(preds.size());

  // MCV / MAV from the prediction trajectories.
  double mcv_acc = 0.0, mav_acc = 0.0;
  for (const auto& video : preds) {
    const std::size_t kc = video.front().size();
    const std::size_t frames = video.size();
    double video_cvar = 0.0, video_avar = 0.0;
    for (std::size_t k = 0; k < kc; ++k) {
      for (int axis = 0; axis < 2; ++axis) {
        double mean = 0.0;
        for (const auto& frame : video) mean += frame[k](axis) + mcv_offset;
        mean /= static_cast<double>(frames);
        double ss = 0.0;
        for (const auto& frame : video) {
          const double d = frame[k](axis) + mcv_offset - mean;
          ss += d * d;
        }
        video_cvar += std::sqrt(ss / static_cast<double>(frames - 1)) / mean;
        double diff_sq = 0.0;
        for (std::size_t t = 0; t + 1 < frames; ++t) {
          const double d = video[t + 1][k](axis) - video[t][k](axis);
          diff_sq += d * d;
        }
        video_avar += diff_sq / (2.0 * static_cast<double>(frames - 1));
      }
    }
    mcv_acc += video_cvar / static_cast<double>(2 * kc);
    mav_acc += video_avar / static_cast<double>(2 * kc);
  }
  out.mcv = mcv_acc / static_cast<double>(preds.size());
  out.mav = mav_acc / static_cast<double>(preds.size());
  return out;
}

}  // namespace stable_align
