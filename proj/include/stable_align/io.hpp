#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stable_align/convlstm.hpp"
#include "stable_align/harness.hpp"
#include "stable_align/metrics.hpp"
#include "stable_align/types.hpp"

namespace stable_align {

// ".hms": magic "HMS1", u32 T, K, H, W (little-endian), then T*K*H*W float32
// values, frame-major, channel-major, row-major.
void save_hms(const std::filesystem::path& path,
              const std::vector<HeatmapStack>& frames);
std::vector<HeatmapStack> load_hms(const std::filesystem::path& path);

// Landmark CSV: header "frame,landmark,x,y", 0-based indices.
void save_landmark_csv(const std::filesystem::path& path, const LandmarkSeries& series);
LandmarkSeries load_landmark_csv(const std::filesystem::path& path);

// ".clm": magic "CLM1", u32 K, C_h, kernel, then the flattened parameters as
// float64 in ConvLSTMModel::to_vector order. Round-trips bit-exactly.
void save_model(const std::filesystem::path& path, const ConvLSTMModel& model);
ConvLSTMModel load_model(const std::filesystem::path& path);

std::string metrics_to_json(const MetricsReport& report);
std::string metrics_csv_header();
std::string metrics_to_csv_row(const MetricsReport& report);

// Strict JSON config: unknown keys are rejected, missing keys take defaults.
ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string experiment_config_to_json(const ExperimentConfig& config);

PixelLossKind parse_pixel_loss(const std::string& name);  // l2|l1|smoothl1|wing|awing|gm
DecoderKind parse_decoder_kind(const std::string& name);  // argmax|interp|pdc

}  // namespace stable_align
