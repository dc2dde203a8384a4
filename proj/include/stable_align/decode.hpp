#pragma once

#include "stable_align/types.hpp"

namespace stable_align {

struct PDCConfig {
  double threshold = 0.2;  // values below are zeroed before the centroid
};

enum class DecoderKind { Argmax, Interp, PDC };

struct Decoder {
  DecoderKind kind = DecoderKind::PDC;
  PDCConfig pdc{};
};

// Integer argmax; ties broken by smallest row, then smallest column.
Eigen::Vector2d argmax_decode(const Heatmap& map);

// Argmax shifted 0.25 px toward the larger axis-aligned neighbor; no shift at
// borders or for equal neighbors.
Eigen::Vector2d interp_decode(const Heatmap& map);

// Thresholded mass centroid. The 1-based column/row weighting of the centroid is
// evaluated literally, then converted to 0-based coordinates. Throws
// DegenerateHeatmap when nothing survives the threshold.
Eigen::Vector2d pdc_decode(const Heatmap& map, const PDCConfig& cfg);

// Channel-wise decoding; PDC falls back to argmax on a degenerate channel.
LandmarkSet decode_stack(const HeatmapStack& stack, const Decoder& decoder);

}  // namespace stable_align
