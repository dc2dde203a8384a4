#pragma once

#include <array>
#include <cstdint>

#include "stable_align/types.hpp"

namespace stable_align {

struct ConvLSTMState {
  std::vector<Grid> h;  // hidden, C_h channels
  std::vector<Grid> c;  // cell, C_h channels
};

// Gate order everywhere: input, forget, output, candidate.
inline constexpr int kNumGates = 4;

struct GateParams {
  // kernels[out_c][in_c] is a kernel_size x kernel_size grid mapping the
  // concatenated (K + C_h) input channels to C_h outputs.
  std::vector<std::vector<Grid>> kernels;
  Eigen::VectorXd bias;  // C_h
};

struct ConvLSTMModel {
  int input_channels = 0;   // K
  int hidden_channels = 0;  // C_h
  int kernel_size = 3;      // odd
  std::array<GateParams, kNumGates> gates;
  Grid proj_w;             // K x C_h, 1x1 output projection
  Eigen::VectorXd proj_b;  // K

  // Random gate weights (uniform, fan-in scaled), forget bias +1, zero output
  // projection so the untrained model is the identity on heatmaps.
  static ConvLSTMModel init(int input_channels, int hidden_channels, int kernel_size,
                            std::uint64_t seed);
  static ConvLSTMModel zeros_like(const ConvLSTMModel& ref);

  ConvLSTMState zero_state(int height, int width) const;
  std::size_t parameter_count() const;

  // Fixed flattening order: gate kernels (gate, out_c, in_c, row-major), gate
  // biases, projection weights (row-major), projection bias. Matches the .clm
  // checkpoint layout.
  Eigen::VectorXd to_vector() const;
  void from_vector(const Eigen::VectorXd& flat);
};

struct CellCache {
  std::vector<Grid> input;  // K + C_h concatenated channels
  std::vector<Grid> c_prev;
  std::array<std::vector<Grid>, kNumGates> activations;  // i, f, o, g
  std::vector<Grid> c_t;
  std::vector<Grid> tanh_c_t;
  std::vector<Grid> h_t;
  bool valid = false;
};

struct CellOutput {
  ConvLSTMState state;
  HeatmapStack s_t;
};

// One recurrent step: gates -> (h_t, c_t), then s_t = o_t + proj(h_t).
// Pass a cache to retain intermediates for cell_backward.
CellOutput cell_forward(const ConvLSTMModel& model, const ConvLSTMState& state_prev,
                        const HeatmapStack& o_t, CellCache* cache = nullptr);

// Reverse-mode step. grad_s is d(loss)/d(s_t); grad_h_next / grad_c_next carry
// the recurrent cotangents from step t+1 (empty grids = zero). Parameter grads
// accumulate into grad_accum; returns cotangents for (h_prev, c_prev, o_t).
struct CellInputGrads {
  std::vector<Grid> grad_h_prev;
  std::vector<Grid> grad_c_prev;
  std::vector<Grid> grad_o_t;
};
CellInputGrads cell_backward(const ConvLSTMModel& model, const CellCache& cache,
                             const HeatmapStack& grad_s,
                             const std::vector<Grid>& grad_h_next,
                             const std::vector<Grid>& grad_c_next,
                             ConvLSTMModel& grad_accum);

// Threads (h, c) from a zero state through the frames in order.
std::vector<HeatmapStack> run_sequence(const ConvLSTMModel& model,
                                       const std::vector<HeatmapStack>& frames);

struct AdamState {
  long step = 0;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;

  static AdamState init(std::size_t n, double lr, double beta1 = 0.9,
                        double beta2 = 0.999);
};

// Bias-corrected Adam update in place.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& adam);

}  // namespace stable_align
