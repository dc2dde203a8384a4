#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stable_align/harness.hpp"
#include "stable_align/io.hpp"

namespace fs = std::filesystem;
using namespace stable_align;
using nlohmann::json;

namespace {

struct Overrides {
  std::optional<std::string> loss;
  std::optional<std::string> decoder;
  std::optional<double> theta;
  std::optional<double> theta_pdc;
  std::optional<double> lambda;
  std::optional<double> xi;
  std::optional<double> lr;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
};

ExperimentConfig load_config(const std::string& path, const Overrides& ov) {
  ExperimentConfig cfg;
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open config file: " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    cfg = parse_experiment_config(buf.str());
  }
  if (ov.loss) {
    if (*ov.loss == "jitter") {
      cfg.modulation_enabled = true;
      cfg.jitter.pixel_loss = PixelLossKind::GemanMcClure;
    } else {
      cfg.modulation_enabled = false;
      cfg.jitter.pixel_loss = parse_pixel_loss(*ov.loss);
    }
  }
  if (ov.decoder) cfg.decoder.kind = parse_decoder_kind(*ov.decoder);
  if (ov.theta) cfg.jitter.theta = *ov.theta;
  if (ov.theta_pdc) cfg.decoder.pdc.threshold = *ov.theta_pdc;
  if (ov.lambda) cfg.jitter.lambda = *ov.lambda;
  if (ov.xi) cfg.jitter.xi = *ov.xi;
  if (ov.lr) cfg.optimizer.lr = *ov.lr;
  if (ov.epochs) cfg.optimizer.epochs = *ov.epochs;
  if (ov.seed) cfg.seed = *ov.seed;
  if (cfg.jitter.theta <= 0.0) throw std::invalid_argument("--theta must be positive");
  if (cfg.decoder.pdc.threshold < 0.0 || cfg.decoder.pdc.threshold >= 1.0)
    throw std::invalid_argument("--theta-pdc must lie in [0,1)");
  if (cfg.optimizer.lr <= 0.0) throw std::invalid_argument("--lr must be positive");
  if (cfg.optimizer.epochs < 0) throw std::invalid_argument("--epochs must be >= 0");
  return cfg;
}

std::string sequence_stem(int index) {
  std::ostringstream os;
  os << "seq_" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

void write_split(const fs::path& dir, const std::string& split,
                 const std::vector<SequenceSample>& dataset, json& manifest) {
  json entries = json::array();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const std::string stem = split + "_" + sequence_stem(static_cast<int>(i));
    const SequenceSample& s = dataset[i];
    save_hms(dir / (stem + "_backbone.hms"), s.backbone_heatmaps);
    save_hms(dir / (stem + "_gt.hms"), s.gt_heatmaps);
    save_landmark_csv(dir / (stem + "_landmarks.csv"), s.gt_landmarks);
    entries.push_back({{"backbone", stem + "_backbone.hms"},
                       {"gt", stem + "_gt.hms"},
                       {"landmarks", stem + "_landmarks.csv"},
                       {"frames", s.gt_landmarks.size()},
                       {"seed", s.seed}});
  }
  manifest[split] = std::move(entries);
}

std::vector<SequenceSample> load_split(const fs::path& dir, const std::string& split) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw std::invalid_argument("no manifest.json in " + dir.string());
  json manifest = json::parse(is);
  if (!manifest.contains(split))
    throw std::invalid_argument("manifest has no \"" + split + "\" split");
  std::vector<SequenceSample> dataset;
  for (const auto& entry : manifest[split]) {
    SequenceSample s;
    s.backbone_heatmaps = load_hms(dir / entry["backbone"].get<std::string>());
    s.gt_heatmaps = load_hms(dir / entry["gt"].get<std::string>());
    s.gt_landmarks = load_landmark_csv(dir / entry["landmarks"].get<std::string>());
    s.seed = entry.value("seed", 0ULL);
    dataset.push_back(std::move(s));
  }
  if (dataset.empty()) throw std::invalid_argument("empty \"" + split + "\" split");
  return dataset;
}

int cmd_synth(const ExperimentConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  json manifest;
  manifest["config"] = json::parse(experiment_config_to_json(cfg));
  write_split(out_dir, "train", generate_dataset(cfg, cfg.train_sequences, 0xA11CE),
              manifest);
  write_split(out_dir, "test", generate_dataset(cfg, cfg.test_sequences, 0xB0B),
              manifest);
  std::ofstream os(fs::path(out_dir) / "manifest.json");
  if (!os) throw std::invalid_argument("cannot write manifest in " + out_dir);
  os << manifest.dump(2) << '\n';
  std::cout << "wrote " << cfg.train_sequences << " train / " << cfg.test_sequences
            << " test sequences to " << out_dir << '\n';
  return 0;
}

int cmd_finetune(const ExperimentConfig& cfg, const std::string& data_dir,
                 const std::string& out_model) {
  const auto dataset = load_split(data_dir, "train");
  ConvLSTMModel model = ConvLSTMModel::init(cfg.landmarks, cfg.hidden_channels,
                                            cfg.kernel, mix_seed(cfg.seed));
  TrainResult result = finetune(std::move(model), dataset, cfg);
  save_model(out_model, result.model);
  fs::path history = out_model;
  history.replace_extension(".history.csv");
  std::ofstream os(history);
  os << "epoch,loss\n";
  os.precision(17);
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
    os << e << ',' << result.epoch_loss[e] << '\n';
  std::cout << "final_epoch_loss="
            << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << '\n';
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& data_dir,
             const std::string& model_path, bool baseline, const std::string& out_dir) {
  const auto dataset = load_split(data_dir, "test");
  MetricsReport report;
  if (baseline) {
    report = evaluate(nullptr, dataset, cfg);
  } else {
    if (model_path.empty())
      throw std::invalid_argument("eval needs --model or --baseline");
    const ConvLSTMModel model = load_model(model_path);
    if (model.input_channels != cfg.landmarks)
      throw std::invalid_argument("model K does not match the config");
    report = evaluate(&model, dataset, cfg);
  }
  const std::string js = metrics_to_json(report);
  std::cout << js << '\n';
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream(fs::path(out_dir) / "metrics.json") << js << '\n';
    std::ofstream csv(fs::path(out_dir) / "metrics.csv");
    csv << metrics_csv_header() << '\n' << metrics_to_csv_row(report) << '\n';
  }
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& kind,
              const std::string& out_csv) {
  std::ofstream os(out_csv);
  if (!os) throw std::invalid_argument("cannot write " + out_csv);
  os.precision(17);
  if (kind == "theta") {
    os << "theta,nrmse,mcv,nrmse_mcv\n";
    for (const auto& row : sweep_theta({0.0, 0.5, 1.0, 1.5, 2.0}, cfg))
      os << row.theta << ',' << row.nrmse << ',' << row.mcv << ',' << row.nrmse_mcv
         << '\n';
  } else if (kind == "theta_pdc") {
    os << "theta_pdc,nrmse,mav,nrmse_mav\n";
    for (const auto& row : sweep_theta_pdc({0.0, 0.1, 0.2, 0.4, 0.6}, cfg))
      os << row.theta_pdc << ',' << row.nrmse << ',' << row.mav << ',' << row.nrmse_mav
         << '\n';
  } else if (kind == "robustness") {
    os << "noise_sigma,blur_sigma,mcv_baseline,mcv_finetuned\n";
    for (const auto& row :
         robustness_sweep({0.0, 0.05, 0.1}, {0.0, 1.0}, cfg))
      os << row.noise_sigma << ',' << row.blur_sigma << ',' << row.mcv_baseline << ','
         << row.mcv_finetuned << '\n';
  } else {
    throw std::invalid_argument("unknown sweep kind \"" + kind + "\"");
  }
  std::cout << "wrote " << out_csv << '\n';
  return 0;
}

int cmd_surface(const ExperimentConfig& cfg, int resolution, const std::string& out_csv) {
  std::ofstream os(out_csv);
  if (!os) throw std::invalid_argument("cannot write " + out_csv);
  os.precision(17);
  os << "e_t,e_prev,pixel_term,modulated_term,total\n";
  for (const auto& row : export_loss_surface(cfg, resolution))
    os << row.e_t << ',' << row.e_prev << ',' << row.pixel_term << ','
       << row.modulated_term << ',' << row.total << '\n';
  std::cout << "wrote " << out_csv << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stable-align: heatmap sequence stabilization toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_dir, model_path, sweep_kind;
  bool baseline = false;
  int resolution = 64;
  Overrides ov;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "JSON experiment config");
    cmd->add_option("--loss", ov.loss, "jitter|l2|l1|smoothl1|wing|awing|gm")
        ->check(CLI::IsMember({"jitter", "l2", "l1", "smoothl1", "wing", "awing", "gm"}));
    cmd->add_option("--decoder", ov.decoder, "argmax|interp|pdc (default pdc)")
        ->check(CLI::IsMember({"argmax", "interp", "pdc"}));
    cmd->add_option("--theta", ov.theta, "jitter threshold (default 1)");
    cmd->add_option("--theta-pdc", ov.theta_pdc, "PDC threshold (default 0.2)");
    cmd->add_option("--lambda", ov.lambda, "pixel-term weight (default 1)");
    cmd->add_option("--xi", ov.xi, "modulation regularizer (default 0.01)");
    cmd->add_option("--lr", ov.lr, "Adam learning rate (default 1e-4)");
    cmd->add_option("--epochs", ov.epochs, "training epochs (default 30)");
    cmd->add_option("--seed", ov.seed, "master seed (default 1)");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth);
  synth->add_option("-o,--out", out_path, "output directory")->required();

  auto* tune = app.add_subcommand("finetune", "fine-tune the stabilizer");
  add_common(tune);
  tune->add_option("-d,--data", data_dir, "dataset directory")->required();
  tune->add_option("-o,--out", out_path, "output .clm checkpoint")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a model or the baseline");
  add_common(eval);
  eval->add_option("-d,--data", data_dir, "dataset directory")->required();
  eval->add_option("-m,--model", model_path, ".clm checkpoint");
  eval->add_flag("--baseline", baseline, "evaluate the raw backbone output");
  eval->add_option("-o,--out", out_path, "output directory for metrics files");

  auto* sweep = app.add_subcommand("sweep", "hyperparameter / robustness sweeps");
  add_common(sweep);
  sweep->add_option("-k,--kind", sweep_kind, "theta|theta_pdc|robustness")->required();
  sweep->add_option("-o,--out", out_path, "output CSV")->required();

  auto* surface = app.add_subcommand("surface", "export the loss surface CSV");
  add_common(surface);
  surface->add_option("-r,--resolution", resolution, "grid resolution (default 64)");
  surface->add_option("-o,--out", out_path, "output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig cfg = load_config(config_path, ov);
    if (synth->parsed()) return cmd_synth(cfg, out_path);
    if (tune->parsed()) return cmd_finetune(cfg, data_dir, out_path);
    if (eval->parsed()) return cmd_eval(cfg, data_dir, model_path, baseline, out_path);
    if (sweep->parsed()) return cmd_sweep(cfg, sweep_kind, out_path);
    if (surface->parsed()) return cmd_surface(cfg, resolution, out_path);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    if (what.rfind("non-finite", 0) == 0) {
      std::cerr << "numerical failure: " << what << '\n';
      return 3;
    }
    std::cerr << "error: " << what << '\n';
    return 2;
  }
  return 0;
}
