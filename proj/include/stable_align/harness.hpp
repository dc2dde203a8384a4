#pragma once

#include <optional>

#include "stable_align/convlstm.hpp"
#include "stable_align/decode.hpp"
#include "stable_align/loss.hpp"
#include "stable_align/metrics.hpp"
#include "stable_align/types.hpp"

namespace stable_align {

struct SequenceSample {
  std::vector<LandmarkSet> gt_landmarks;
  std::vector<HeatmapStack> gt_heatmaps;        // clean targets
  std::vector<HeatmapStack> backbone_heatmaps;  // degraded first-stage output
  std::uint64_t seed = 0;
};

struct OptimizerConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int epochs = 30;
};

struct ExperimentConfig {
  int height = 32;
  int width = 32;
  int landmarks = 5;
  double sigma = 1.5;
  int shift_range = 2;
  int train_sequences = 50;
  int test_sequences = 20;
  DegradationConfig degradation;
  JitterConfig jitter;
  bool modulation_enabled = true;  // false = plain pixel-loss fine-tuning
  Decoder decoder;
  OptimizerConfig optimizer;
  int hidden_channels = 16;
  int kernel = 3;
  std::uint64_t seed = 1;
};

// K points spread over the interior, leaving a 3*sigma + shift_range margin.
LandmarkSet default_base_landmarks(const ExperimentConfig& config);

// One shift-augmented sequence of 5-8 frames. The backbone simulator displaces
// each peak by N(0, peak_jitter_sigma^2), then applies noise and blur.
SequenceSample generate_sequence(const LandmarkSet& base, const ExperimentConfig& config,
                                 std::uint64_t sequence_seed);

// Per-sequence seeds derive from (config.seed, salt, index).
std::vector<SequenceSample> generate_dataset(const ExperimentConfig& config, int count,
                                             std::uint64_t salt);

struct TrainResult {
  ConvLSTMModel model;
  std::vector<double> epoch_loss;
};

// Fine-tunes the stabilizer: per sequence, state reset, forward over frames,
// loss over frame pairs (frame 1 contributes only the lambda-weighted pixel
// term), BPTT, one Adam step. Throws on NaN loss with a sequence/epoch tag.
TrainResult finetune(ConvLSTMModel model, const std::vector<SequenceSample>& dataset,
                     const ExperimentConfig& config);

// model == nullptr evaluates the raw backbone output (the image-oriented
// baseline). State resets per sequence.
MetricsReport evaluate(const ConvLSTMModel* model,
                       const std::vector<SequenceSample>& dataset,
                       const ExperimentConfig& config);

struct RobustnessRow {
  double noise_sigma = 0.0;
  double blur_sigma = 0.0;
  double mcv_baseline = 0.0;
  double mcv_finetuned = 0.0;
};
std::vector<RobustnessRow> robustness_sweep(const std::vector<double>& noise_levels,
                                            const std::vector<double>& blur_levels,
                                            const ExperimentConfig& config);

struct ThetaRow {
  double theta = 0.0;
  double nrmse = 0.0;
  double mcv = 0.0;
  double nrmse_mcv = 0.0;
};
std::vector<ThetaRow> sweep_theta(const std::vector<double>& values,
                                  const ExperimentConfig& config);

struct ThetaPdcRow {
  double theta_pdc = 0.0;
  double nrmse = 0.0;
  double mav = 0.0;
  double nrmse_mav = 0.0;
};
std::vector<ThetaPdcRow> sweep_theta_pdc(const std::vector<double>& values,
                                         const ExperimentConfig& config);

struct LossSurfaceRow {
  double e_t = 0.0;
  double e_prev = 0.0;
  double pixel_term = 0.0;
  double modulated_term = 0.0;
  double total = 0.0;
};
// Scalar-error diagnostic surface over (e_t, e_prev) in [-1,1]^2.
std::vector<LossSurfaceRow> export_loss_surface(const ExperimentConfig& config,
                                                int grid_resolution);

}  // namespace stable_align
