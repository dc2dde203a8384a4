#include "stable_align/decode.hpp"

namespace stable_align {

Eigen::Vector2d argmax_decode(const Heatmap& map) {
  check_heatmap(map);
  Eigen::Index best_r = 0, best_c = 0;
  double best = map(0, 0);
  for (Eigen::Index r = 0; r < map.rows(); ++r)
    for (Eigen::Index c = 0; c < map.cols(); ++c)
      if (map(r, c) > best) {
        best = map(r, c);
        best_r = r;
        best_c = c;
      }
  return {static_cast<double>(best_c), static_cast<double>(best_r)};
}

Eigen::Vector2d interp_decode(const Heatmap& map) {
  const Eigen::Vector2d peak = argmax_decode(map);
  const auto r = static_cast<Eigen::Index>(peak.y());
  const auto c = static_cast<Eigen::Index>(peak.x());
  double x = peak.x();
  double y = peak.y();
  if (c > 0 && c < map.cols() - 1) {
    const double left = map(r, c - 1), right = map(r, c + 1);
    if (right > left) x += 0.25;
    else if (left > right) x -= 0.25;
  }
  if (r > 0 && r < map.rows() - 1) {
    const double up = map(r - 1, c), down = map(r + 1, c);
    if (down > up) y += 0.25;
    else if (up > down) y -= 0.25;
  }
  return {x, y};
}

Eigen::Vector2d pdc_decode(const Heatmap& map, const PDCConfig& cfg) {
  check_heatmap(map);
  require(cfg.threshold >= 0.0 && cfg.threshold < 1.0, "PDC threshold must be in [0,1)");
  double sum_phi = 0.0, sum_x = 0.0, sum_y = 0.0;
  for (Eigen::Index r = 0; r < map.rows(); ++r) {
    for (Eigen::Index c = 0; c < map.cols(); ++c) {
      const double v = map(r, c) < cfg.threshold ? 0.0 : map(r, c);
      sum_phi += v;
      sum_x += static_cast<double>(c + 1) * v;  // 1-based weighting
      sum_y += static_cast<double>(r + 1) * v;
    }
  }
  if (sum_phi <= 0.0)
    throw DegenerateHeatmap("all heatmap values fall below the PDC threshold");
  return {sum_x / sum_phi - 1.0, sum_y / sum_phi - 1.0};
}

LandmarkSet decode_stack(const HeatmapStack& stack, const Decoder& decoder) {
  check_stack(stack);
  LandmarkSet points;
  points.reserve(stack.size());
  for (const auto& map : stack) {
    switch (decoder.kind) {
      case DecoderKind::Argmax:
        points.push_back(argmax_decode(map));
        break;
      case DecoderKind::Interp:
        points.push_back(interp_decode(map));
        break;
      case DecoderKind::PDC:
        try {
          points.push_back(pdc_decode(map, decoder.pdc));
        } catch (const DegenerateHeatmap&) {
          points.push_back(argmax_decode(map));
        }
        break;
    }
  }
  return points;
}

}  // namespace stable_align
