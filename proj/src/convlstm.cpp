#include "stable_align/convlstm.hpp"

#include <cmath>
#include <random>

namespace stable_align {

namespace {

struct Overlap {
  Eigen::Index y0, x0, nh, nw, u, v;
};

// Valid region for a kernel tap offset by (u, v) with zero padding.
inline bool overlap_region(Eigen::Index rows, Eigen::Index cols, Eigen::Index u,
                           Eigen::Index v, Overlap& o) {
  o.u = u;
  o.v = v;
  o.y0 = std::max<Eigen::Index>(0, -u);
  o.x0 = std::max<Eigen::Index>(0, -v);
  const Eigen::Index y1 = std::min(rows - 1, rows - 1 - u);
  const Eigen::Index x1 = std::min(cols - 1, cols - 1 - v);
  o.nh = y1 - o.y0 + 1;
  o.nw = x1 - o.x0 + 1;
  return o.nh > 0 && o.nw > 0;
}

// out(y, x) += sum_{dy,dx} ker(dy, dx) * in(y + dy - r, x + dx - r)
void conv_accum(Grid& out, const Grid& in, const Grid& ker) {
  const Eigen::Index radius = ker.rows() / 2;
  Overlap o;
  for (Eigen::Index dy = 0; dy < ker.rows(); ++dy)
    for (Eigen::Index dx = 0; dx < ker.cols(); ++dx) {
      const double w = ker(dy, dx);
      if (w == 0.0) continue;
      if (!overlap_region(out.rows(), out.cols(), dy - radius, dx - radius, o)) continue;
      out.block(o.y0, o.x0, o.nh, o.nw) +=
          w * in.block(o.y0 + o.u, o.x0 + o.v, o.nh, o.nw);
    }
}

void conv_backward_input(Grid& grad_in, const Grid& grad_out, const Grid& ker) {
  const Eigen::Index radius = ker.rows() / 2;
  Overlap o;
  for (Eigen::Index dy = 0; dy < ker.rows(); ++dy)
    for (Eigen::Index dx = 0; dx < ker.cols(); ++dx) {
      const double w = ker(dy, dx);
      if (w == 0.0) continue;
      if (!overlap_region(grad_out.rows(), grad_out.cols(), dy - radius, dx - radius, o))
        continue;
      grad_in.block(o.y0 + o.u, o.x0 + o.v, o.nh, o.nw) +=
          w * grad_out.block(o.y0, o.x0, o.nh, o.nw);
    }
}

void conv_backward_kernel(Grid& grad_ker, const Grid& in, const Grid& grad_out) {
  const Eigen::Index radius = grad_ker.rows() / 2;
  Overlap o;
  for (Eigen::Index dy = 0; dy < grad_ker.rows(); ++dy)
    for (Eigen::Index dx = 0; dx < grad_ker.cols(); ++dx) {
      if (!overlap_region(grad_out.rows(), grad_out.cols(), dy - radius, dx - radius, o))
        continue;
      grad_ker(dy, dx) += grad_out.block(o.y0, o.x0, o.nh, o.nw)
                              .cwiseProduct(in.block(o.y0 + o.u, o.x0 + o.v, o.nh, o.nw))
                              .sum();
    }
}

inline Grid sigmoid(const Grid& z) {
  return (1.0 + (-z.array()).exp()).inverse().matrix();
}

std::vector<Grid> zero_grids(int n, Eigen::Index rows, Eigen::Index cols) {
  return std::vector<Grid>(static_cast<std::size_t>(n), Grid::Zero(rows, cols));
}

}  // namespace

ConvLSTMModel ConvLSTMModel::init(int input_channels, int hidden_channels,
                                  int kernel_size, std::uint64_t seed) {
  require(input_channels > 0 && hidden_channels > 0, "channel counts must be positive");
  require(kernel_size > 0 && kernel_size % 2 == 1, "kernel size must be odd");
  ConvLSTMModel m;
  m.input_channels = input_channels;
  m.hidden_channels = hidden_channels;
  m.kernel_size = kernel_size;
  const int in_total = input_channels + hidden_channels;
  const double scale =
      1.0 / std::sqrt(static_cast<double>(in_total) * kernel_size * kernel_size);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-scale, scale);
  for (int g = 0; g < kNumGates; ++g) {
    auto& gate = m.gates[g];
    gate.kernels.resize(hidden_channels);
    for (int oc = 0; oc < hidden_channels; ++oc) {
      gate.kernels[oc].resize(in_total);
      for (int ic = 0; ic < in_total; ++ic) {
        Grid k(kernel_size, kernel_size);
        for (Eigen::Index r = 0; r < k.rows(); ++r)
          for (Eigen::Index c = 0; c < k.cols(); ++c) k(r, c) = uni(rng);
        gate.kernels[oc][ic] = std::move(k);
      }
    }
    // forget gate bias +1, others 0
    gate.bias = g == 1 ? Eigen::VectorXd::Ones(hidden_channels)
                       : Eigen::VectorXd::Zero(hidden_channels);
  }
  m.proj_w = Grid::Zero(input_channels, hidden_channels);
  m.proj_b = Eigen::VectorXd::Zero(input_channels);
  return m;
}

ConvLSTMModel ConvLSTMModel::zeros_like(const ConvLSTMModel& ref) {
  ConvLSTMModel m = ref;
  for (auto& gate : m.gates) {
    for (auto& row : gate.kernels)
      for (auto& k : row) k.setZero();
    gate.bias.setZero();
  }
  m.proj_w.setZero();
  m.proj_b.setZero();
  return m;
}

ConvLSTMState ConvLSTMModel::zero_state(int height, int width) const {
  ConvLSTMState s;
  s.h = zero_grids(hidden_channels, height, width);
  s.c = zero_grids(hidden_channels, height, width);
  return s;
}

std::size_t ConvLSTMModel::parameter_count() const {
  const std::size_t in_total = input_channels + hidden_channels;
  const std::size_t ksq = static_cast<std::size_t>(kernel_size) * kernel_size;
  return kNumGates * (hidden_channels * in_total * ksq + hidden_channels) +
         static_cast<std::size_t>(input_channels) * hidden_channels + input_channels;
}

Eigen::VectorXd ConvLSTMModel::to_vector() const {
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index at = 0;
  for (const auto& gate : gates)
    for (const auto& row : gate.kernels)
      for (const auto& k : row)
        for (Eigen::Index r = 0; r < k.rows(); ++r)
          for (Eigen::Index c = 0; c < k.cols(); ++c) flat(at++) = k(r, c);
  for (const auto& gate : gates)
    for (Eigen::Index i = 0; i < gate.bias.size(); ++i) flat(at++) = gate.bias(i);
  for (Eigen::Index r = 0; r < proj_w.rows(); ++r)
    for (Eigen::Index c = 0; c < proj_w.cols(); ++c) flat(at++) = proj_w(r, c);
  for (Eigen::Index i = 0; i < proj_b.size(); ++i) flat(at++) = proj_b(i);
  return flat;
}

void ConvLSTMModel::from_vector(const Eigen::VectorXd& flat) {
  require(static_cast<std::size_t>(flat.size()) == parameter_count(),
          "flat parameter vector has wrong length");
  Eigen::Index at = 0;
  for (auto& gate : gates)
    for (auto& row : gate.kernels)
      for (auto& k : row)
        for (Eigen::Index r = 0; r < k.rows(); ++r)
          for (Eigen::Index c = 0; c < k.cols(); ++c) k(r, c) = flat(at++);
  for (auto& gate : gates)
    for (Eigen::Index i = 0; i < gate.bias.size(); ++i) gate.bias(i) = flat(at++);
  for (Eigen::Index r = 0; r < proj_w.rows(); ++r)
    for (Eigen::Index c = 0; c < proj_w.cols(); ++c) proj_w(r, c) = flat(at++);
  for (Eigen::Index i = 0; i < proj_b.size(); ++i) proj_b(i) = flat(at++);
}

CellOutput cell_forward(const ConvLSTMModel& model, const ConvLSTMState& state_prev,
                        const HeatmapStack& o_t, CellCache* cache) {
  check_stack(o_t);
  require(static_cast<int>(o_t.size()) == model.input_channels,
          "input stack K does not match the model");
  require(static_cast<int>(state_prev.h.size()) == model.hidden_channels &&
              static_cast<int>(state_prev.c.size()) == model.hidden_channels,
          "state channel count does not match the model");
  const Eigen::Index rows = o_t.front().rows();
  const Eigen::Index cols = o_t.front().cols();
  for (const auto& g : state_prev.h)
    require(g.rows() == rows && g.cols() == cols, "state shape does not match the input");

  std::vector<Grid> input;
  input.reserve(model.input_channels + model.hidden_channels);
  for (const auto& m : o_t) input.push_back(m);
  for (const auto& m : state_prev.h) input.push_back(m);

  std::array<std::vector<Grid>, kNumGates> acts;
  for (int g = 0; g < kNumGates; ++g) {
    acts[g].reserve(model.hidden_channels);
    for (int oc = 0; oc < model.hidden_channels; ++oc) {
      Grid pre = Grid::Constant(rows, cols, model.gates[g].bias(oc));
      for (std::size_t ic = 0; ic < input.size(); ++ic)
        conv_accum(pre, input[ic], model.gates[g].kernels[oc][ic]);
      acts[g].push_back(g == 3 ? Grid(pre.array().tanh().matrix()) : sigmoid(pre));
    }
  }

  CellOutput out;
  out.state.c.reserve(model.hidden_channels);
  out.state.h.reserve(model.hidden_channels);
  std::vector<Grid> tanh_c;
  tanh_c.reserve(model.hidden_channels);
  for (int c = 0; c < model.hidden_channels; ++c) {
    Grid c_t = acts[1][c].cwiseProduct(state_prev.c[c]) + acts[0][c].cwiseProduct(acts[3][c]);
    Grid tc = c_t.array().tanh().matrix();
    out.state.h.push_back(acts[2][c].cwiseProduct(tc));
    out.state.c.push_back(std::move(c_t));
    tanh_c.push_back(std::move(tc));
  }

  out.s_t.reserve(model.input_channels);
  for (int k = 0; k < model.input_channels; ++k) {
    Grid s = o_t[k];
    s.array() += model.proj_b(k);
    for (int c = 0; c < model.hidden_channels; ++c)
      s += model.proj_w(k, c) * out.state.h[c];
    out.s_t.push_back(std::move(s));
  }

  if (cache) {
    cache->input = std::move(input);
    cache->c_prev = state_prev.c;
    cache->activations = std::move(acts);
    cache->c_t = out.state.c;
    cache->tanh_c_t = std::move(tanh_c);
    cache->h_t = out.state.h;
    cache->valid = true;
  }
  return out;
}

CellInputGrads cell_backward(const ConvLSTMModel& model, const CellCache& cache,
                             const HeatmapStack& grad_s,
                             const std::vector<Grid>& grad_h_next,
                             const std::vector<Grid>& grad_c_next,
                             ConvLSTMModel& grad_accum) {
  require(cache.valid, "cell_backward needs a cache from a matching forward call");
  require(static_cast<int>(grad_s.size()) == model.input_channels,
          "grad_s K does not match the model");
  const Eigen::Index rows = cache.h_t.front().rows();
  const Eigen::Index cols = cache.h_t.front().cols();
  const int ch = model.hidden_channels;

  std::vector<Grid> grad_h = grad_h_next.empty() ? zero_grids(ch, rows, cols) : grad_h_next;
  std::vector<Grid> grad_c = grad_c_next.empty() ? zero_grids(ch, rows, cols) : grad_c_next;
  require(static_cast<int>(grad_h.size()) == ch && static_cast<int>(grad_c.size()) == ch,
          "recurrent cotangent channel mismatch");

  CellInputGrads out;
  out.grad_o_t = zero_grids(model.input_channels, rows, cols);

  // output projection and residual skip
  for (int k = 0; k < model.input_channels; ++k) {
    out.grad_o_t[k] += grad_s[k];
    grad_accum.proj_b(k) += grad_s[k].sum();
    for (int c = 0; c < ch; ++c) {
      grad_accum.proj_w(k, c) += grad_s[k].cwiseProduct(cache.h_t[c]).sum();
      grad_h[c] += model.proj_w(k, c) * grad_s[k];
    }
  }

  const auto& i_act = cache.activations[0];
  const auto& f_act = cache.activations[1];
  const auto& o_act = cache.activations[2];
  const auto& g_act = cache.activations[3];

  std::array<std::vector<Grid>, kNumGates> grad_pre;
  for (auto& v : grad_pre) v.reserve(ch);
  out.grad_c_prev.reserve(ch);
  for (int c = 0; c < ch; ++c) {
    const Grid grad_o_gate = grad_h[c].cwiseProduct(cache.tanh_c_t[c]);
    const Grid dc = grad_c[c].array() +
                    grad_h[c].array() * o_act[c].array() *
                        (1.0 - cache.tanh_c_t[c].array().square());
    const Grid di = dc.cwiseProduct(g_act[c]);
    const Grid df = dc.cwiseProduct(cache.c_prev[c]);
    const Grid dg = dc.cwiseProduct(i_act[c]);
    out.grad_c_prev.push_back(dc.cwiseProduct(f_act[c]));
    grad_pre[0].push_back(
        (di.array() * i_act[c].array() * (1.0 - i_act[c].array())).matrix());
    grad_pre[1].push_back(
        (df.array() * f_act[c].array() * (1.0 - f_act[c].array())).matrix());
    grad_pre[2].push_back(
        (grad_o_gate.array() * o_act[c].array() * (1.0 - o_act[c].array())).matrix());
    grad_pre[3].push_back((dg.array() * (1.0 - g_act[c].array().square())).matrix());
  }

  std::vector<Grid> grad_input = zero_grids(static_cast<int>(cache.input.size()), rows, cols);
  for (int g = 0; g < kNumGates; ++g) {
    for (int oc = 0; oc < ch; ++oc) {
      grad_accum.gates[g].bias(oc) += grad_pre[g][oc].sum();
      for (std::size_t ic = 0; ic < cache.input.size(); ++ic) {
        conv_backward_kernel(grad_accum.gates[g].kernels[oc][ic], cache.input[ic],
                             grad_pre[g][oc]);
        conv_backward_input(grad_input[ic], grad_pre[g][oc],
                            model.gates[g].kernels[oc][ic]);
      }
    }
  }

  for (int k = 0; k < model.input_channels; ++k) out.grad_o_t[k] += grad_input[k];
  out.grad_h_prev.assign(grad_input.begin() + model.input_channels, grad_input.end());
  return out;
}

std::vector<HeatmapStack> run_sequence(const ConvLSTMModel& model,
                                       const std::vector<HeatmapStack>& frames) {
  require(!frames.empty(), "empty sequence");
  ConvLSTMState state = model.zero_state(static_cast<int>(frames.front().front().rows()),
                                         static_cast<int>(frames.front().front().cols()));
  std::vector<HeatmapStack> out;
  out.reserve(frames.size());
  for (const auto& frame : frames) {
    CellOutput step = cell_forward(model, state, frame);
    state = std::move(step.state);
    out.push_back(std::move(step.s_t));
  }
  return out;
}

AdamState AdamState::init(std::size_t n, double lr, double beta1, double beta2) {
  require(lr > 0.0, "learning rate must be positive");
  require(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0,
          "betas must lie in (0,1)");
  AdamState s;
  s.first_moment = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  s.second_moment = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  return s;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& adam) {
  require(params.size() == grads.size() && params.size() == adam.first_moment.size(),
          "Adam state shape mismatch");
  adam.step += 1;
  adam.first_moment = adam.beta1 * adam.first_moment + (1.0 - adam.beta1) * grads;
  adam.second_moment = adam.beta2 * adam.second_moment.array().matrix() +
                       (1.0 - adam.beta2) * grads.array().square().matrix();
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
  params.array() -= adam.lr * (adam.first_moment.array() / c1) /
                    ((adam.second_moment.array() / c2).sqrt() + adam.eps_adam);
}

}  // namespace stable_align
