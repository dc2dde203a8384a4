#include <doctest.h>

#include <cmath>

#include "stable_align/harness.hpp"
#include "stable_align/heatmap.hpp"

using namespace stable_align;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.height = 20;
  cfg.width = 20;
  cfg.landmarks = 2;
  cfg.sigma = 1.0;
  cfg.shift_range = 1;
  cfg.train_sequences = 3;
  cfg.test_sequences = 3;
  cfg.hidden_channels = 2;
  cfg.optimizer.epochs = 2;
  return cfg;
}

bool same_report(const MetricsReport& a, const MetricsReport& b) {
  return a.nrmse == b.nrmse && a.fr == b.fr && a.auc == b.auc && a.mcv == b.mcv &&
         a.mav == b.mav && a.decode_failures == b.decode_failures;
}

}  // namespace

TEST_CASE("base landmarks respect the border margin") {
  const ExperimentConfig cfg = tiny_config();
  const LandmarkSet base = default_base_landmarks(cfg);
  REQUIRE(static_cast<int>(base.size()) == cfg.landmarks);
  const double margin = std::ceil(3.0 * cfg.sigma) + cfg.shift_range;
  for (const auto& p : base) {
    CHECK(p.x() >= margin);
    CHECK(p.x() < cfg.width - margin);
    CHECK(p.y() >= margin);
    CHECK(p.y() < cfg.height - margin);
  }
}

TEST_CASE("sequences have 5 to 8 frames and consistent shapes") {
  const ExperimentConfig cfg = tiny_config();
  const LandmarkSet base = default_base_landmarks(cfg);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SequenceSample s = generate_sequence(base, cfg, seed);
    CHECK(s.gt_landmarks.size() >= 5);
    CHECK(s.gt_landmarks.size() <= 8);
    CHECK(s.gt_heatmaps.size() == s.gt_landmarks.size());
    CHECK(s.backbone_heatmaps.size() == s.gt_landmarks.size());
    for (const auto& stack : s.backbone_heatmaps) {
      CHECK(static_cast<int>(stack.size()) == cfg.landmarks);
      CHECK(stack[0].rows() == cfg.height);
      CHECK(stack[0].cols() == cfg.width);
    }
  }
}

TEST_CASE("without degradation the backbone output equals the clean targets") {
  const ExperimentConfig cfg = tiny_config();
  const SequenceSample s = generate_sequence(default_base_landmarks(cfg), cfg, 7);
  for (std::size_t t = 0; t < s.gt_heatmaps.size(); ++t)
    for (int k = 0; k < cfg.landmarks; ++k)
      CHECK(s.backbone_heatmaps[t][k] == s.gt_heatmaps[t][k]);
}

TEST_CASE("clean targets peak at the ground-truth landmarks") {
  const ExperimentConfig cfg = tiny_config();
  const SequenceSample s = generate_sequence(default_base_landmarks(cfg), cfg, 3);
  for (std::size_t t = 0; t < s.gt_heatmaps.size(); ++t)
    for (int k = 0; k < cfg.landmarks; ++k) {
      const auto& p = s.gt_landmarks[t][k];
      CHECK(s.gt_heatmaps[t][k](static_cast<int>(p.y()), static_cast<int>(p.x())) ==
            doctest::Approx(1.0));
    }
}

TEST_CASE("shift_range zero keeps landmarks static") {
  ExperimentConfig cfg = tiny_config();
  cfg.shift_range = 0;
  const SequenceSample s = generate_sequence(default_base_landmarks(cfg), cfg, 11);
  for (std::size_t t = 1; t < s.gt_landmarks.size(); ++t)
    for (int k = 0; k < cfg.landmarks; ++k)
      CHECK(s.gt_landmarks[t][k] == s.gt_landmarks[0][k]);
}

TEST_CASE("sequence generation is seed-deterministic") {
  ExperimentConfig cfg = tiny_config();
  cfg.degradation.peak_jitter_sigma = 0.5;
  cfg.degradation.noise_sigma = 0.05;
  const LandmarkSet base = default_base_landmarks(cfg);
  const SequenceSample a = generate_sequence(base, cfg, 42);
  const SequenceSample b = generate_sequence(base, cfg, 42);
  const SequenceSample c = generate_sequence(base, cfg, 43);
  REQUIRE(a.backbone_heatmaps.size() == b.backbone_heatmaps.size());
  bool differs = a.backbone_heatmaps.size() != c.backbone_heatmaps.size();
  for (std::size_t t = 0; t < a.backbone_heatmaps.size(); ++t) {
    CHECK(a.backbone_heatmaps[t][0] == b.backbone_heatmaps[t][0]);
    if (!differs && t < c.backbone_heatmaps.size())
      differs = a.backbone_heatmaps[t][0] != c.backbone_heatmaps[t][0];
  }
  CHECK(differs);
}

TEST_CASE("dataset generation is reproducible and salt-sensitive") {
  ExperimentConfig cfg = tiny_config();
  cfg.degradation.peak_jitter_sigma = 1.0;
  const auto a = generate_dataset(cfg, 4, 1);
  const auto b = generate_dataset(cfg, 4, 1);
  const auto c = generate_dataset(cfg, 4, 2);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].seed == b[i].seed);
  CHECK(a[0].seed != c[0].seed);
}

TEST_CASE("zero epochs leaves the model untouched") {
  ExperimentConfig cfg = tiny_config();
  cfg.optimizer.epochs = 0;
  const auto data = generate_dataset(cfg, 2, 5);
  const ConvLSTMModel init =
      ConvLSTMModel::init(cfg.landmarks, cfg.hidden_channels, cfg.kernel, 9);
  const TrainResult result = finetune(init, data, cfg);
  CHECK(result.epoch_loss.empty());
  CHECK(result.model.to_vector() == init.to_vector());
}

TEST_CASE("training is deterministic") {
  ExperimentConfig cfg = tiny_config();
  cfg.degradation.peak_jitter_sigma = 0.5;
  const auto data = generate_dataset(cfg, 2, 5);
  const ConvLSTMModel init =
      ConvLSTMModel::init(cfg.landmarks, cfg.hidden_channels, cfg.kernel, 9);
  const TrainResult a = finetune(init, data, cfg);
  const TrainResult b = finetune(init, data, cfg);
  CHECK(a.epoch_loss == b.epoch_loss);
  CHECK(a.model.to_vector() == b.model.to_vector());
}

TEST_CASE("pixel-loss fine-tuning reduces the training loss") {
  ExperimentConfig cfg = tiny_config();
  cfg.degradation.peak_jitter_sigma = 0.7;
  cfg.modulation_enabled = false;
  cfg.jitter.pixel_loss = PixelLossKind::L2;
  cfg.optimizer.lr = 1e-3;
  cfg.optimizer.epochs = 8;
  const auto data = generate_dataset(cfg, 4, 8);
  const ConvLSTMModel init =
      ConvLSTMModel::init(cfg.landmarks, cfg.hidden_channels, cfg.kernel, 13);
  const TrainResult result = finetune(init, data, cfg);
  REQUIRE(result.epoch_loss.size() == 8);
  for (double v : result.epoch_loss) CHECK(std::isfinite(v));
  CHECK(result.epoch_loss.back() < result.epoch_loss.front());
}

TEST_CASE("an untrained model evaluates exactly like the raw baseline") {
  ExperimentConfig cfg = tiny_config();
  cfg.degradation.peak_jitter_sigma = 1.0;
  cfg.degradation.noise_sigma = 0.05;
  const auto data = generate_dataset(cfg, 4, 3);
  const ConvLSTMModel init =
      ConvLSTMModel::init(cfg.landmarks, cfg.hidden_channels, cfg.kernel, 77);
  const MetricsReport with_model = evaluate(&init, data, cfg);
  const MetricsReport baseline = evaluate(nullptr, data, cfg);
  CHECK(same_report(with_model, baseline));
}

TEST_CASE("clean data scores near-zero error and exactly zero instability") {
  const ExperimentConfig cfg = tiny_config();
  const auto data = generate_dataset(cfg, 4, 6);
  const MetricsReport report = evaluate(nullptr, data, cfg);
  CHECK(report.nrmse < 0.5);
  CHECK(report.decode_failures == 0);
  CHECK(report.fr == 0.0);
}

TEST_CASE("static clean faces have zero mcv, jittered ones do not") {
  ExperimentConfig cfg = tiny_config();
  cfg.shift_range = 0;
  const MetricsReport clean = evaluate(nullptr, generate_dataset(cfg, 4, 6), cfg);
  CHECK(clean.mcv == 0.0);
  CHECK(clean.mav == 0.0);

  cfg.degradation.peak_jitter_sigma = 1.0;
  const MetricsReport jittered = evaluate(nullptr, generate_dataset(cfg, 4, 6), cfg);
  CHECK(jittered.mcv > 0.0);
  CHECK(jittered.mav > 0.0);
}

TEST_CASE("loss surface diagnostics") {
  ExperimentConfig cfg = tiny_config();
  cfg.jitter.theta = 1.0;
  cfg.jitter.lambda = 1.0;
  const int res = 17;
  const auto rows = export_loss_surface(cfg, res);
  REQUIRE(rows.size() == static_cast<std::size_t>(res) * res);
  for (const auto& row : rows) {
    CHECK(row.total == doctest::Approx(row.pixel_term + row.modulated_term));
    CHECK(row.total >= 0.0);
    if (row.e_t == row.e_prev) CHECK(row.modulated_term == 0.0);
  }
  // symmetric under swapping the two errors
  const auto at = [&](int i, int j) { return rows[i * res + j]; };
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j)
      CHECK(at(i, j).total == doctest::Approx(at(j, i).total));
  // zero exactly at the origin
  const auto origin = at(res / 2, res / 2);
  CHECK(origin.e_t == 0.0);
  CHECK(origin.total == 0.0);
  CHECK_THROWS_AS(export_loss_surface(cfg, 4), std::invalid_argument);
}

TEST_CASE("threshold sweep reports the error-instability product per value") {
  ExperimentConfig cfg = tiny_config();
  cfg.degradation.peak_jitter_sigma = 0.5;
  cfg.train_sequences = 2;
  cfg.test_sequences = 2;
  cfg.optimizer.epochs = 1;
  const auto rows = sweep_theta({0.0, 1.0, 2.0}, cfg);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].theta == 0.0);  // a vanishing threshold stands in for zero
  for (const auto& row : rows) {
    CHECK(std::isfinite(row.nrmse));
    CHECK(row.nrmse_mcv == doctest::Approx(row.nrmse * row.mcv));
  }
  CHECK_THROWS_AS(sweep_theta({1.0, 2.0}, cfg), std::invalid_argument);
}

TEST_CASE("decoder threshold sweep covers every requested value") {
  ExperimentConfig cfg = tiny_config();
  cfg.degradation.noise_sigma = 0.1;
  cfg.train_sequences = 2;
  cfg.test_sequences = 2;
  cfg.optimizer.epochs = 1;
  const auto rows = sweep_theta_pdc({0.0, 0.2, 0.4}, cfg);
  REQUIRE(rows.size() == 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].theta_pdc == std::vector<double>{0.0, 0.2, 0.4}[i]);
    CHECK(rows[i].nrmse_mav == doctest::Approx(rows[i].nrmse * rows[i].mav));
  }
}

TEST_CASE("robustness sweep trains one model per degradation level") {
  ExperimentConfig cfg = tiny_config();
  cfg.degradation.peak_jitter_sigma = 0.5;
  cfg.train_sequences = 2;
  cfg.test_sequences = 2;
  cfg.optimizer.epochs = 1;
  const auto rows = robustness_sweep({0.0, 0.1}, {0.0, 0.5}, cfg);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].noise_sigma == 0.0);
  CHECK(rows[3].noise_sigma == 0.1);
  CHECK(rows[3].blur_sigma == 0.5);
  for (const auto& row : rows) {
    CHECK(std::isfinite(row.mcv_baseline));
    CHECK(std::isfinite(row.mcv_finetuned));
  }
  CHECK_THROWS_AS(robustness_sweep({0.1}, {0.0, 0.5}, cfg), std::invalid_argument);
}
