#include "stable_align/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stable_align {

NormalizationRule NormalizationRule::inter_ocular(int left, int right) {
  NormalizationRule r;
  r.kind = Kind::InterOcular;
  r.left_eye = left;
  r.right_eye = right;
  return r;
}

NormalizationRule NormalizationRule::box_diagonal(double width, double height) {
  NormalizationRule r;
  r.kind = Kind::BoxDiagonal;
  r.box_width = width;
  r.box_height = height;
  return r;
}

NormalizationRule NormalizationRule::fixed(double value) {
  NormalizationRule r;
  r.kind = Kind::Fixed;
  r.fixed_value = value;
  return r;
}

double NormalizationRule::normalizer(const LandmarkSet& truth) const {
  double n = 0.0;
  switch (kind) {
    case Kind::InterOcular: {
      require(left_eye >= 0 && right_eye >= 0 &&
                  left_eye < static_cast<int>(truth.size()) &&
                  right_eye < static_cast<int>(truth.size()),
              "eye indices out of range");
      n = (truth[left_eye] - truth[right_eye]).norm();
      break;
    }
    case Kind::BoxDiagonal:
      n = std::hypot(box_width, box_height);
      break;
    case Kind::Fixed:
      n = fixed_value;
      break;
  }
  require(n > 0.0, "normalizer must be positive");
  return n;
}

double nme(const LandmarkSet& pred, const LandmarkSet& truth,
           const NormalizationRule& rule) {
  require(!pred.empty() && pred.size() == truth.size(), "landmark sets differ in K");
  const double n = rule.normalizer(truth);
  double acc = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) acc += (pred[k] - truth[k]).norm() / n;
  return 100.0 * acc / static_cast<double>(pred.size());
}

double nrmse_sequence(const LandmarkSeries& preds, const LandmarkSeries& truths,
                      const NormalizationRule& rule) {
  require(!preds.empty() && preds.size() == truths.size(),
          "prediction/truth sequences differ in length");
  double acc = 0.0;
  for (std::size_t t = 0; t < preds.size(); ++t) acc += nme(preds[t], truths[t], rule);
  return acc / static_cast<double>(preds.size());
}

double fr(const std::vector<double>& nme_values, double cutoff) {
  require(!nme_values.empty(), "empty NME list");
  const auto failures = std::count_if(nme_values.begin(), nme_values.end(),
                                      [cutoff](double v) { return v > cutoff; });
  return static_cast<double>(failures) / static_cast<double>(nme_values.size());
}

double auc_ced(const std::vector<double>& nme_values, double cutoff) {
  require(!nme_values.empty(), "empty NME list");
  require(cutoff > 0.0, "cutoff must be positive");
  // integral of the CED step function: each sample contributes (cutoff - v)+
  double acc = 0.0;
  for (double v : nme_values) acc += std::max(0.0, cutoff - v);
  return acc / (cutoff * static_cast<double>(nme_values.size()));
}

double cvar(const std::vector<double>& samples) {
  require(samples.size() >= 2, "CVar needs at least two samples");
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) /
                      static_cast<double>(samples.size());
  require(mean != 0.0, "CVar undefined at zero mean");
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(samples.size() - 1)) / mean;
}

double avar(const std::vector<double>& series) {
  require(series.size() >= 2, "AVar needs at least two samples");
  double acc = 0.0;
  for (std::size_t t = 0; t + 1 < series.size(); ++t) {
    const double d = series[t + 1] - series[t];
    acc += d * d;
  }
  return acc / (2.0 * static_cast<double>(series.size() - 1));
}

namespace {

void check_videos(const std::vector<LandmarkSeries>& videos) {
  require(!videos.empty(), "no videos");
  for (const auto& video : videos) {
    require(video.size() >= 2, "video needs at least two frames");
    for (const auto& frame : video)
      require(frame.size() == video.front().size(), "landmark count varies over frames");
  }
}

// Extract coordinate `axis` (0 = x, 1 = y) of landmark k across frames.
std::vector<double> coordinate_series(const LandmarkSeries& video, std::size_t k,
                                      int axis, double offset) {
  std::vector<double> s;
  s.reserve(video.size());
  for (const auto& frame : video) s.push_back(frame[k](axis) + offset);
  return s;
}

}  // namespace

double mcv(const std::vector<LandmarkSeries>& videos, double offset) {
  check_videos(videos);
  double acc = 0.0;
  for (const auto& video : videos) {
    const std::size_t k_count = video.front().size();
    double video_acc = 0.0;
    for (std::size_t k = 0; k < k_count; ++k)
      for (int axis = 0; axis < 2; ++axis)
        video_acc += cvar(coordinate_series(video, k, axis, offset));
    acc += video_acc / static_cast<double>(2 * k_count);
  }
  return acc / static_cast<double>(videos.size());
}

double mav(const std::vector<LandmarkSeries>& videos) {
  check_videos(videos);
  double acc = 0.0;
  for (const auto& video : videos) {
    const std::size_t k_count = video.front().size();
    double video_acc = 0.0;
    for (std::size_t k = 0; k < k_count; ++k)
      for (int axis = 0; axis < 2; ++axis)
        video_acc += avar(coordinate_series(video, k, axis, 0.0));
    acc += video_acc / static_cast<double>(2 * k_count);
  }
  return acc / static_cast<double>(videos.size());
}

std::vector<double> per_landmark_mcv(const std::vector<LandmarkSeries>& videos,
                                     double offset) {
  check_videos(videos);
  const std::size_t k_count = videos.front().front().size();
  std::vector<double> out(k_count, 0.0);
  for (std::size_t k = 0; k < k_count; ++k) {
    for (const auto& video : videos)
      out[k] += 0.5 * (cvar(coordinate_series(video, k, 0, offset)) +
                       cvar(coordinate_series(video, k, 1, offset)));
    out[k] /= static_cast<double>(videos.size());
  }
  return out;
}

std::vector<double> per_landmark_mav(const std::vector<LandmarkSeries>& videos) {
  check_videos(videos);
  const std::size_t k_count = videos.front().front().size();
  std::vector<double> out(k_count, 0.0);
  for (std::size_t k = 0; k < k_count; ++k) {
    for (const auto& video : videos)
      out[k] += 0.5 * (avar(coordinate_series(video, k, 0, 0.0)) +
                       avar(coordinate_series(video, k, 1, 0.0)));
    out[k] /= static_cast<double>(videos.size());
  }
  return out;
}

}  // namespace stable_align
