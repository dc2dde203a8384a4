#include "stable_align/harness.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>
#include <thread>

#include "stable_align/heatmap.hpp"

namespace stable_align {

namespace {

int border_margin(const ExperimentConfig& config) {
  return static_cast<int>(std::ceil(3.0 * config.sigma)) + config.shift_range;
}

int thread_budget(int work_items) {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  if (const char* env = std::getenv("STABLE_ALIGN_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return std::min(n, work_items);
}

// Deterministic regardless of thread count: item i always lands in slot i.
template <typename F>
void parallel_for(int count, F&& fn) {
  const int threads = thread_budget(count);
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace

LandmarkSet default_base_landmarks(const ExperimentConfig& config) {
  const int margin = border_margin(config) + 1;
  const double x0 = margin, x1 = config.width - 1 - margin;
  const double y0 = margin, y1 = config.height - 1 - margin;
  require(x1 > x0 && y1 > y0, "grid too small for the sigma/shift margin");
  const int side = static_cast<int>(std::ceil(std::sqrt(config.landmarks)));
  LandmarkSet base;
  base.reserve(config.landmarks);
  for (int i = 0; i < config.landmarks; ++i) {
    const int gx = i % side;
    const int gy = i / side;
    const double fx = side == 1 ? 0.5 : static_cast<double>(gx) / (side - 1);
    const double fy = side == 1 ? 0.5 : static_cast<double>(gy) / (side - 1);
    base.push_back({std::round(x0 + fx * (x1 - x0)), std::round(y0 + fy * (y1 - y0))});
  }
  return base;
}

SequenceSample generate_sequence(const LandmarkSet& base, const ExperimentConfig& config,
                                 std::uint64_t sequence_seed) {
  require(static_cast<int>(base.size()) == config.landmarks, "base landmark count");
  const double margin = border_margin(config);
  for (const auto& p : base)
    require(p.x() >= margin && p.x() < config.width - margin && p.y() >= margin &&
                p.y() < config.height - margin,
            "base landmark too close to the border");

  std::mt19937_64 rng(sequence_seed);
  std::uniform_int_distribution<int> frames_dist(5, 8);
  std::uniform_int_distribution<int> step_dist(-1, 1);
  std::normal_distribution<double> peak_noise(0.0, 1.0);

  SequenceSample sample;
  sample.seed = sequence_seed;
  const int frames = frames_dist(rng);
  int shift_x = 0, shift_y = 0;
  for (int t = 0; t < frames; ++t) {
    if (config.shift_range > 0) {
      shift_x = std::clamp(shift_x + step_dist(rng), -config.shift_range,
                           config.shift_range);
      shift_y = std::clamp(shift_y + step_dist(rng), -config.shift_range,
                           config.shift_range);
    }
    LandmarkSet gt;
    gt.reserve(base.size());
    for (const auto& p : base)
      gt.push_back({p.x() + shift_x, p.y() + shift_y});
    sample.gt_heatmaps.push_back(
        make_gaussian_heatmap(gt, config.height, config.width, config.sigma));

    LandmarkSet jittered;
    jittered.reserve(gt.size());
    for (const auto& p : gt) {
      double jx = p.x(), jy = p.y();
      if (config.degradation.peak_jitter_sigma > 0.0) {
        jx += config.degradation.peak_jitter_sigma * peak_noise(rng);
        jy += config.degradation.peak_jitter_sigma * peak_noise(rng);
      }
      jittered.push_back({std::clamp(jx, 0.0, config.width - 1.0),
                          std::clamp(jy, 0.0, config.height - 1.0)});
    }
    HeatmapStack backbone =
        make_gaussian_heatmap(jittered, config.height, config.width, config.sigma);
    if (config.degradation.noise_sigma > 0.0)
      backbone = add_gaussian_noise(backbone, config.degradation.noise_sigma,
                                    mix_seed(sequence_seed + 1000 + t));
    if (config.degradation.blur_sigma > 0.0)
      backbone = gaussian_blur(backbone, config.degradation.blur_sigma);
    sample.backbone_heatmaps.push_back(std::move(backbone));
    sample.gt_landmarks.push_back(std::move(gt));
  }
  return sample;
}

std::vector<SequenceSample> generate_dataset(const ExperimentConfig& config, int count,
                                             std::uint64_t salt) {
  require(count > 0, "dataset must be non-empty");
  const LandmarkSet base = default_base_landmarks(config);
  std::vector<SequenceSample> dataset(count);
  parallel_for(count, [&](int i) {
    const std::uint64_t seq_seed =
        mix_seed(config.seed ^ mix_seed(salt) ^ mix_seed(0x5eedULL + i));
    dataset[i] = generate_sequence(base, config, seq_seed);
  });
  return dataset;
}

namespace {

// Per-frame loss value and d(loss)/d(s_t) for one sequence.
struct SequenceLoss {
  double value = 0.0;
  std::vector<HeatmapStack> grads;
};

SequenceLoss sequence_loss(const std::vector<HeatmapStack>& predicted,
                           const SequenceSample& sample,
                           const ExperimentConfig& config) {
  const std::size_t frames = predicted.size();
  const double inv_k = 1.0 / static_cast<double>(config.landmarks);
  SequenceLoss out;
  out.grads.resize(frames);

  std::vector<LandmarkSet> decoded(frames);
  if (config.modulation_enabled)
    for (std::size_t t = 0; t < frames; ++t)
      decoded[t] = decode_stack(predicted[t], config.decoder);

  for (std::size_t t = 0; t < frames; ++t) {
    if (config.modulation_enabled && t > 0) {
      StackLossValueGrad lv =
          jitter_loss(predicted[t], sample.gt_heatmaps[t], decoded[t],
                      sample.gt_landmarks[t], decoded[t - 1], sample.gt_landmarks[t - 1],
                      config.jitter);
      out.value += lv.value;
      out.grads[t] = std::move(lv.grad);
    } else {
      // frame 1 (and every frame when modulation is off): pixel term only
      const double weight =
          (config.modulation_enabled ? config.jitter.lambda : 1.0) * inv_k;
      double acc = 0.0;
      HeatmapStack grad;
      grad.reserve(config.landmarks);
      for (int k = 0; k < config.landmarks; ++k) {
        LossValueGrad lk =
            pixel_loss(predicted[t][k], sample.gt_heatmaps[t][k], config.jitter);
        acc += weight * lk.value;
        lk.grad *= weight;
        grad.push_back(std::move(lk.grad));
      }
      out.value += acc;
      out.grads[t] = std::move(grad);
    }
  }
  return out;
}

}  // namespace

TrainResult finetune(ConvLSTMModel model, const std::vector<SequenceSample>& dataset,
                     const ExperimentConfig& config) {
  require(!dataset.empty(), "training dataset is empty");
  Eigen::VectorXd params = model.to_vector();
  AdamState adam = AdamState::init(params.size(), config.optimizer.lr,
                                   config.optimizer.beta1, config.optimizer.beta2);
  TrainResult result{std::move(model), {}};
  result.epoch_loss.reserve(config.optimizer.epochs);

  for (int epoch = 0; epoch < config.optimizer.epochs; ++epoch) {
    double epoch_acc = 0.0;
    for (std::size_t s = 0; s < dataset.size(); ++s) {
      const SequenceSample& sample = dataset[s];
      const std::size_t frames = sample.backbone_heatmaps.size();

      // forward with caches, state reset at sequence start
      ConvLSTMState state =
          result.model.zero_state(config.height, config.width);
      std::vector<CellCache> caches(frames);
      std::vector<HeatmapStack> predicted(frames);
      for (std::size_t t = 0; t < frames; ++t) {
        CellOutput step = cell_forward(result.model, state,
                                       sample.backbone_heatmaps[t], &caches[t]);
        state = std::move(step.state);
        predicted[t] = std::move(step.s_t);
      }

      SequenceLoss loss = sequence_loss(predicted, sample, config);
      if (!std::isfinite(loss.value)) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << " sequence " << s;
        throw std::runtime_error(os.str());
      }
      epoch_acc += loss.value / static_cast<double>(frames);

      // BPTT
      ConvLSTMModel grad_accum = ConvLSTMModel::zeros_like(result.model);
      std::vector<Grid> grad_h_next, grad_c_next;
      for (std::size_t t = frames; t-- > 0;) {
        CellInputGrads g = cell_backward(result.model, caches[t], loss.grads[t],
                                         grad_h_next, grad_c_next, grad_accum);
        grad_h_next = std::move(g.grad_h_prev);
        grad_c_next = std::move(g.grad_c_prev);
      }

      const Eigen::VectorXd flat_grads = grad_accum.to_vector();
      adam_step(params, flat_grads, adam);
      result.model.from_vector(params);
    }
    result.epoch_loss.push_back(epoch_acc / static_cast<double>(dataset.size()));
  }
  return result;
}

MetricsReport evaluate(const ConvLSTMModel* model,
                       const std::vector<SequenceSample>& dataset,
                       const ExperimentConfig& config) {
  require(!dataset.empty(), "evaluation dataset is empty");
  const auto count = static_cast<int>(dataset.size());
  std::vector<LandmarkSeries> preds(count), truths(count);
  std::vector<int> failures(count, 0);

  parallel_for(count, [&](int i) {
    const SequenceSample& sample = dataset[i];
    std::vector<HeatmapStack> maps =
        model ? run_sequence(*model, sample.backbone_heatmaps)
              : sample.backbone_heatmaps;
    LandmarkSeries series;
    series.reserve(maps.size());
    for (std::size_t t = 0; t < maps.size(); ++t) {
      try {
        series.push_back(decode_stack(maps[t], config.decoder));
      } catch (const DegenerateHeatmap&) {
        failures[i] += 1;
        series.push_back(decode_stack(maps[t], Decoder{DecoderKind::Argmax, {}}));
      }
    }
    preds[i] = std::move(series);
    truths[i] = sample.gt_landmarks;
  });

  const NormalizationRule rule = NormalizationRule::fixed(config.width);
  MetricsReport report;
  std::vector<double> frame_nme_fracs;
  for (int i = 0; i < count; ++i) {
    report.nrmse += nrmse_sequence(preds[i], truths[i], rule);
    report.decode_failures += failures[i];
    for (std::size_t t = 0; t < preds[i].size(); ++t)
      frame_nme_fracs.push_back(nme(preds[i][t], truths[i][t], rule) / 100.0);
  }
  report.nrmse /= count;
  report.fr = fr(frame_nme_fracs);
  report.auc = auc_ced(frame_nme_fracs);
  const double offset = config.width;  // keeps coordinate means away from zero
  report.mcv = mcv(preds, offset);
  report.mav = mav(preds);
  report.per_landmark_mcv = per_landmark_mcv(preds, offset);
  report.per_landmark_mav = per_landmark_mav(preds);
  report.per_landmark_nrmse.assign(config.landmarks, 0.0);
  for (int i = 0; i < count; ++i) {
    for (std::size_t t = 0; t < preds[i].size(); ++t)
      for (int k = 0; k < config.landmarks; ++k)
        report.per_landmark_nrmse[k] += 100.0 *
                                        (preds[i][t][k] - truths[i][t][k]).norm() /
                                        rule.normalizer(truths[i][t]) /
                                        static_cast<double>(preds[i].size());
  }
  for (auto& v : report.per_landmark_nrmse) v /= count;
  return report;
}

std::vector<RobustnessRow> robustness_sweep(const std::vector<double>& noise_levels,
                                            const std::vector<double>& blur_levels,
                                            const ExperimentConfig& config) {
  require(noise_levels.size() >= 2 && blur_levels.size() >= 2,
          "need at least two levels per axis");
  std::vector<RobustnessRow> rows;
  for (double noise : noise_levels) {
    for (double blur : blur_levels) {
      ExperimentConfig level = config;
      level.shift_range = 0;  // static faces, per the protocol
      level.degradation.noise_sigma = noise;
      level.degradation.blur_sigma = blur;
      const auto train = generate_dataset(level, level.train_sequences, 0xA11CE);
      const auto test = generate_dataset(level, level.test_sequences, 0xB0B);
      const ConvLSTMModel init = ConvLSTMModel::init(
          level.landmarks, level.hidden_channels, level.kernel, mix_seed(level.seed));
      TrainResult trained = finetune(init, train, level);
      RobustnessRow row;
      row.noise_sigma = noise;
      row.blur_sigma = blur;
      row.mcv_baseline = evaluate(nullptr, test, level).mcv;
      row.mcv_finetuned = evaluate(&trained.model, test, level).mcv;
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<ThetaRow> sweep_theta(const std::vector<double>& values,
                                  const ExperimentConfig& config) {
  require(values.size() >= 3, "need at least three sweep values");
  std::vector<ThetaRow> rows;
  for (double theta : values) {
    ExperimentConfig point = config;
    point.jitter.theta = std::max(theta, 1e-6);  // 0 maps to a vanishing threshold
    const auto train = generate_dataset(point, point.train_sequences, 0xA11CE);
    const auto test = generate_dataset(point, point.test_sequences, 0xB0B);
    const ConvLSTMModel init = ConvLSTMModel::init(
        point.landmarks, point.hidden_channels, point.kernel, mix_seed(point.seed));
    TrainResult trained = finetune(init, train, point);
    const MetricsReport report = evaluate(&trained.model, test, point);
    rows.push_back({theta, report.nrmse, report.mcv, report.nrmse * report.mcv});
  }
  return rows;
}

std::vector<ThetaPdcRow> sweep_theta_pdc(const std::vector<double>& values,
                                         const ExperimentConfig& config) {
  require(values.size() >= 3, "need at least three sweep values");
  std::vector<ThetaPdcRow> rows;
  for (double threshold : values) {
    ExperimentConfig point = config;
    point.decoder.kind = DecoderKind::PDC;
    point.decoder.pdc.threshold = threshold;
    const auto train = generate_dataset(point, point.train_sequences, 0xA11CE);
    const auto test = generate_dataset(point, point.test_sequences, 0xB0B);
    const ConvLSTMModel init = ConvLSTMModel::init(
        point.landmarks, point.hidden_channels, point.kernel, mix_seed(point.seed));
    TrainResult trained = finetune(init, train, point);
    const MetricsReport report = evaluate(&trained.model, test, point);
    rows.push_back({threshold, report.nrmse, report.mav, report.nrmse * report.mav});
  }
  return rows;
}

std::vector<LossSurfaceRow> export_loss_surface(const ExperimentConfig& config,
                                                int grid_resolution) {
  require(grid_resolution >= 16, "resolution must be at least 16");
  const double theta = config.jitter.theta;
  const double lambda = config.jitter.lambda;
  const auto gm = [theta](double e) { return e * e / (e * e + theta * theta); };
  std::vector<LossSurfaceRow> rows;
  rows.reserve(static_cast<std::size_t>(grid_resolution) * grid_resolution);
  for (int i = 0; i < grid_resolution; ++i) {
    for (int j = 0; j < grid_resolution; ++j) {
      LossSurfaceRow row;
      row.e_t = -1.0 + 2.0 * i / (grid_resolution - 1);
      row.e_prev = -1.0 + 2.0 * j / (grid_resolution - 1);
      const double pix = gm(row.e_t) + gm(row.e_prev);
      row.pixel_term = lambda * pix;
      row.modulated_term = std::abs(row.e_t - row.e_prev) * pix;
      row.total = row.pixel_term + row.modulated_term;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace stable_align
