#include "stable_align/loss.hpp"

#include <cmath>

namespace stable_align {

namespace {

void check_pair(const Heatmap& pred, const Heatmap& truth) {
  require(pred.rows() == truth.rows() && pred.cols() == truth.cols(),
          "pred/truth heatmap shapes differ");
  require(pred.allFinite() && truth.allFinite(), "non-finite heatmap values");
}

double sgn(double v) { return (v > 0.0) - (v < 0.0); }

// Mean-reduced pointwise loss given per-pixel value/derivative callbacks.
template <typename F>
LossValueGrad reduce_pointwise(const Heatmap& pred, const Heatmap& truth, F&& point) {
  LossValueGrad out;
  out.grad = Grid::Zero(pred.rows(), pred.cols());
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      auto [v, g] = point(pred(r, c), truth(r, c));
      out.value += v * inv_n;
      out.grad(r, c) = g * inv_n;
    }
  }
  return out;
}

struct PointLoss {
  double value;
  double grad;
};

PointLoss l2_point(double p, double t) {
  const double d = p - t;
  return {d * d, 2.0 * d};
}

PointLoss l1_point(double p, double t) {
  const double d = p - t;
  return {std::abs(d), sgn(d)};
}

PointLoss smooth_l1_point(double p, double t) {
  const double d = p - t;
  if (std::abs(d) < 1.0) return {0.5 * d * d, d};
  return {std::abs(d) - 0.5, sgn(d)};
}

// Wing loss (omega=10, epsilon=2).
PointLoss wing_point(double p, double t) {
  constexpr double omega = 10.0, eps = 2.0;
  const double d = p - t;
  const double ad = std::abs(d);
  const double big_c = omega - omega * std::log(1.0 + omega / eps);
  if (ad < omega) return {omega * std::log(1.0 + ad / eps), sgn(d) * omega / (eps + ad)};
  return {ad - big_c, sgn(d)};
}

// Adaptive Wing loss (omega=14, epsilon=1, alpha=2.1, theta=0.5). The exponent
// adapts to the ground-truth pixel value.
PointLoss awing_point(double p, double t) {
  constexpr double omega = 14.0, eps = 1.0, alpha = 2.1, theta = 0.5;
  const double y = std::clamp(t, 0.0, 1.0);
  const double m = alpha - y;  // in [1.1, 2.1]
  const double d = p - t;
  const double ad = std::abs(d);
  if (ad < theta) {
    const double tm = std::pow(ad / eps, m);
    const double dtm = ad > 0.0 ? m * std::pow(ad / eps, m - 1.0) / eps : 0.0;
    return {omega * std::log(1.0 + tm), sgn(d) * omega * dtm / (1.0 + tm)};
  }
  const double thm = std::pow(theta / eps, m);
  const double a = omega / (1.0 + thm) * m * std::pow(theta / eps, m - 1.0) / eps;
  const double big_c = theta * a - omega * std::log(1.0 + thm);
  return {a * ad - big_c, sgn(d) * a};
}

PointLoss gm_point(double p, double t, double theta) {
  const double d = p - t;
  const double denom = d * d + theta * theta;
  return {d * d / denom, 2.0 * d * theta * theta / (denom * denom)};
}

}  // namespace

LossValueGrad gm_pixel_loss(const Heatmap& pred, const Heatmap& truth, double theta) {
  check_pair(pred, truth);
  require(theta > 0.0, "theta must be positive");
  return reduce_pointwise(pred, truth,
                          [theta](double p, double t) { return gm_point(p, t, theta); });
}

LossValueGrad pixel_loss(const Heatmap& pred, const Heatmap& truth,
                         const JitterConfig& config) {
  check_pair(pred, truth);
  switch (config.pixel_loss) {
    case PixelLossKind::L2:
      return reduce_pointwise(pred, truth, l2_point);
    case PixelLossKind::L1:
      return reduce_pointwise(pred, truth, l1_point);
    case PixelLossKind::SmoothL1:
      return reduce_pointwise(pred, truth, smooth_l1_point);
    case PixelLossKind::Wing:
      return reduce_pointwise(pred, truth, wing_point);
    case PixelLossKind::AWing:
      return reduce_pointwise(pred, truth, awing_point);
    case PixelLossKind::GemanMcClure:
      return gm_pixel_loss(pred, truth, config.theta);
  }
  throw std::invalid_argument("unknown pixel loss kind");
}

namespace {

void check_same_k(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
  require(a == b && b == c && c == d, "landmark sets differ in K");
}

}  // namespace

std::vector<double> jitter_modulation(const LandmarkSet& u_t, const LandmarkSet& hat_u_t,
                                      const LandmarkSet& u_prev,
                                      const LandmarkSet& hat_u_prev,
                                      const JitterConfig& config) {
  check_same_k(u_t.size(), hat_u_t.size(), u_prev.size(), hat_u_prev.size());
  require(config.theta > 0.0 && config.xi > 0.0, "theta and xi must be positive");
  std::vector<double> psi(u_t.size());
  for (std::size_t k = 0; k < u_t.size(); ++k) {
    const Eigen::Vector2d e_t = u_t[k] - hat_u_t[k];
    const Eigen::Vector2d e_prev = u_prev[k] - hat_u_prev[k];
    const Eigen::Vector2d offset = hat_u_t[k] - hat_u_prev[k];
    const double ratio = (e_t - e_prev).norm() / (offset.norm() + config.xi);
    psi[k] = std::min(ratio, config.theta);
  }
  return psi;
}

std::vector<bool> jitter_criterion(const LandmarkSet& u_t, const LandmarkSet& hat_u_t,
                                   const LandmarkSet& u_prev,
                                   const LandmarkSet& hat_u_prev, double theta) {
  check_same_k(u_t.size(), hat_u_t.size(), u_prev.size(), hat_u_prev.size());
  std::vector<bool> jittery(u_t.size());
  for (std::size_t k = 0; k < u_t.size(); ++k) {
    const Eigen::Vector2d e_t = u_t[k] - hat_u_t[k];
    const Eigen::Vector2d e_prev = u_prev[k] - hat_u_prev[k];
    const Eigen::Vector2d offset = hat_u_t[k] - hat_u_prev[k];
    jittery[k] = (e_t - e_prev).norm() > theta * offset.norm();
  }
  return jittery;
}

StackLossValueGrad jitter_loss(const HeatmapStack& s_t, const HeatmapStack& hat_s_t,
                               const LandmarkSet& u_t, const LandmarkSet& hat_u_t,
                               const LandmarkSet& u_prev, const LandmarkSet& hat_u_prev,
                               const JitterConfig& config) {
  check_stack(s_t);
  check_stack(hat_s_t);
  require(s_t.size() == hat_s_t.size() && s_t.size() == u_t.size(),
          "stack/landmark K mismatch");
  const std::vector<double> psi =
      jitter_modulation(u_t, hat_u_t, u_prev, hat_u_prev, config);
  StackLossValueGrad out;
  out.grad.reserve(s_t.size());
  const double inv_k = 1.0 / static_cast<double>(s_t.size());
  for (std::size_t k = 0; k < s_t.size(); ++k) {
    LossValueGrad lk = pixel_loss(s_t[k], hat_s_t[k], config);
    const double weight = (config.lambda + psi[k]) * inv_k;
    out.value += weight * lk.value;
    lk.grad *= weight;
    out.grad.push_back(std::move(lk.grad));
  }
  return out;
}

double grad_check(const std::function<LossValueGrad(const Heatmap&)>& op,
                  const Heatmap& pred, double epsilon) {
  require(epsilon >= 1e-7 && epsilon <= 1e-3, "epsilon out of range");
  const LossValueGrad analytic = op(pred);
  double worst = 0.0;
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      Heatmap probe = pred;
      probe(r, c) = pred(r, c) + epsilon;
      const double up = op(probe).value;
      probe(r, c) = pred(r, c) - epsilon;
      const double down = op(probe).value;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double rel =
          std::abs(analytic.grad(r, c) - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace stable_align
