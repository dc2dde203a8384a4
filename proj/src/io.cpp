#include "stable_align/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace stable_align {

namespace {

using nlohmann::json;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path.string());
  return is;
}

void expect_magic(std::istream& is, const char* magic, const std::string& what) {
  char buf[4];
  is.read(buf, 4);
  if (!is || std::memcmp(buf, magic, 4) != 0)
    throw std::runtime_error("bad magic bytes in " + what);
}

}  // namespace

void save_hms(const std::filesystem::path& path,
              const std::vector<HeatmapStack>& frames) {
  require(!frames.empty(), "no frames to save");
  for (const auto& stack : frames) check_stack(stack);
  auto os = open_out(path);
  os.write("HMS1", 4);
  const auto& first = frames.front();
  write_u32(os, static_cast<std::uint32_t>(frames.size()));
  write_u32(os, static_cast<std::uint32_t>(first.size()));
  write_u32(os, static_cast<std::uint32_t>(first.front().rows()));
  write_u32(os, static_cast<std::uint32_t>(first.front().cols()));
  for (const auto& stack : frames)
    for (const auto& map : stack)
      for (Eigen::Index r = 0; r < map.rows(); ++r)
        for (Eigen::Index c = 0; c < map.cols(); ++c) {
          const float v = static_cast<float>(map(r, c));
          os.write(reinterpret_cast<const char*>(&v), sizeof(float));
        }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::vector<HeatmapStack> load_hms(const std::filesystem::path& path) {
  auto is = open_in(path);
  expect_magic(is, "HMS1", path.string());
  const std::uint32_t frames = read_u32(is);
  const std::uint32_t k = read_u32(is);
  const std::uint32_t h = read_u32(is);
  const std::uint32_t w = read_u32(is);
  std::vector<HeatmapStack> out(frames);
  for (auto& stack : out) {
    stack.reserve(k);
    for (std::uint32_t ch = 0; ch < k; ++ch) {
      Heatmap map(h, w);
      for (std::uint32_t r = 0; r < h; ++r)
        for (std::uint32_t c = 0; c < w; ++c) {
          float v;
          is.read(reinterpret_cast<char*>(&v), sizeof(float));
          map(r, c) = v;
        }
      stack.push_back(std::move(map));
    }
  }
  if (!is) throw std::runtime_error("truncated .hms file: " + path.string());
  return out;
}

void save_landmark_csv(const std::filesystem::path& path, const LandmarkSeries& series) {
  auto os = open_out(path);
  os << "frame,landmark,x,y\n";
  os.precision(17);
  for (std::size_t t = 0; t < series.size(); ++t)
    for (std::size_t k = 0; k < series[t].size(); ++k)
      os << t << ',' << k << ',' << series[t][k].x() << ',' << series[t][k].y() << '\n';
}

LandmarkSeries load_landmark_csv(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::string line;
  if (!std::getline(is, line) || line.rfind("frame,landmark,x,y", 0) != 0)
    throw std::runtime_error("bad landmark CSV header in " + path.string());
  LandmarkSeries series;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    const auto frame = static_cast<std::size_t>(std::stoul(cell));
    std::getline(row, cell, ',');
    const auto landmark = static_cast<std::size_t>(std::stoul(cell));
    std::getline(row, cell, ',');
    const double x = std::stod(cell);
    std::getline(row, cell, ',');
    const double y = std::stod(cell);
    if (series.size() <= frame) series.resize(frame + 1);
    if (series[frame].size() <= landmark) series[frame].resize(landmark + 1);
    series[frame][landmark] = {x, y};
  }
  return series;
}

void save_model(const std::filesystem::path& path, const ConvLSTMModel& model) {
  auto os = open_out(path);
  os.write("CLM1", 4);
  write_u32(os, static_cast<std::uint32_t>(model.input_channels));
  write_u32(os, static_cast<std::uint32_t>(model.hidden_channels));
  write_u32(os, static_cast<std::uint32_t>(model.kernel_size));
  const Eigen::VectorXd flat = model.to_vector();
  os.write(reinterpret_cast<const char*>(flat.data()),
           static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

ConvLSTMModel load_model(const std::filesystem::path& path) {
  auto is = open_in(path);
  expect_magic(is, "CLM1", path.string());
  const int k = static_cast<int>(read_u32(is));
  const int ch = static_cast<int>(read_u32(is));
  const int kernel = static_cast<int>(read_u32(is));
  ConvLSTMModel model = ConvLSTMModel::init(k, ch, kernel, 0);
  Eigen::VectorXd flat(model.parameter_count());
  is.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!is) throw std::runtime_error("truncated .clm file: " + path.string());
  model.from_vector(flat);
  return model;
}

std::string metrics_to_json(const MetricsReport& report) {
  json j;
  j["nrmse"] = report.nrmse;
  j["fr"] = report.fr;
  j["auc"] = report.auc;
  j["mcv"] = report.mcv;
  j["mav_px2"] = report.mav;
  j["decode_failures"] = report.decode_failures;
  j["per_landmark"] = {{"nrmse", report.per_landmark_nrmse},
                       {"mcv", report.per_landmark_mcv},
                       {"mav_px2", report.per_landmark_mav}};
  return j.dump(2);
}

std::string metrics_csv_header() { return "nrmse,fr,auc,mcv,mav,decode_failures"; }

std::string metrics_to_csv_row(const MetricsReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << report.nrmse << ',' << report.fr << ',' << report.auc << ',' << report.mcv
     << ',' << report.mav << ',' << report.decode_failures;
  return os.str();
}

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& scope) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (key == a) known = true;
    if (!known)
      throw std::invalid_argument("unknown config key \"" + scope + key + "\"");
  }
}

void check_key(bool cond, const std::string& key, const std::string& what) {
  if (!cond) throw std::invalid_argument("invalid value for \"" + key + "\": " + what);
}

}  // namespace

PixelLossKind parse_pixel_loss(const std::string& name) {
  if (name == "l2") return PixelLossKind::L2;
  if (name == "l1") return PixelLossKind::L1;
  if (name == "smoothl1") return PixelLossKind::SmoothL1;
  if (name == "wing") return PixelLossKind::Wing;
  if (name == "awing") return PixelLossKind::AWing;
  if (name == "gm") return PixelLossKind::GemanMcClure;
  throw std::invalid_argument("unknown pixel loss \"" + name + "\"");
}

DecoderKind parse_decoder_kind(const std::string& name) {
  if (name == "argmax") return DecoderKind::Argmax;
  if (name == "interp") return DecoderKind::Interp;
  if (name == "pdc") return DecoderKind::PDC;
  throw std::invalid_argument("unknown decoder \"" + name + "\"");
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j = json::parse(json_text);
  reject_unknown_keys(j,
                      {"grid", "landmarks", "sigma", "shift_range", "train_sequences",
                       "test_sequences", "degradation", "loss", "decoder", "optimizer",
                       "model", "seed"},
                      "");
  ExperimentConfig cfg;
  if (j.contains("grid")) {
    reject_unknown_keys(j["grid"], {"height", "width"}, "grid.");
    cfg.height = j["grid"].value("height", cfg.height);
    cfg.width = j["grid"].value("width", cfg.width);
  }
  cfg.landmarks = j.value("landmarks", cfg.landmarks);
  cfg.sigma = j.value("sigma", cfg.sigma);
  cfg.shift_range = j.value("shift_range", cfg.shift_range);
  cfg.train_sequences = j.value("train_sequences", cfg.train_sequences);
  cfg.test_sequences = j.value("test_sequences", cfg.test_sequences);
  if (j.contains("degradation")) {
    const json& d = j["degradation"];
    reject_unknown_keys(d, {"noise_sigma", "blur_sigma", "peak_jitter_sigma"},
                        "degradation.");
    cfg.degradation.noise_sigma = d.value("noise_sigma", 0.0);
    cfg.degradation.blur_sigma = d.value("blur_sigma", 0.0);
    cfg.degradation.peak_jitter_sigma = d.value("peak_jitter_sigma", 0.0);
  }
  if (j.contains("loss")) {
    const json& l = j["loss"];
    reject_unknown_keys(l, {"kind", "theta", "xi", "lambda"}, "loss.");
    const std::string kind = l.value("kind", std::string("jitter"));
    if (kind == "jitter") {
      cfg.modulation_enabled = true;
      cfg.jitter.pixel_loss = PixelLossKind::GemanMcClure;
    } else {
      cfg.modulation_enabled = false;
      cfg.jitter.pixel_loss = parse_pixel_loss(kind);
    }
    cfg.jitter.theta = l.value("theta", cfg.jitter.theta);
    cfg.jitter.xi = l.value("xi", cfg.jitter.xi);
    cfg.jitter.lambda = l.value("lambda", cfg.jitter.lambda);
  }
  if (j.contains("decoder")) {
    const json& d = j["decoder"];
    reject_unknown_keys(d, {"kind", "threshold"}, "decoder.");
    cfg.decoder.kind = parse_decoder_kind(d.value("kind", std::string("pdc")));
    cfg.decoder.pdc.threshold = d.value("threshold", cfg.decoder.pdc.threshold);
  }
  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    reject_unknown_keys(o, {"lr", "beta1", "beta2", "epochs"}, "optimizer.");
    cfg.optimizer.lr = o.value("lr", cfg.optimizer.lr);
    cfg.optimizer.beta1 = o.value("beta1", cfg.optimizer.beta1);
    cfg.optimizer.beta2 = o.value("beta2", cfg.optimizer.beta2);
    cfg.optimizer.epochs = o.value("epochs", cfg.optimizer.epochs);
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown_keys(m, {"hidden_channels", "kernel"}, "model.");
    cfg.hidden_channels = m.value("hidden_channels", cfg.hidden_channels);
    cfg.kernel = m.value("kernel", cfg.kernel);
  }
  cfg.seed = j.value("seed", cfg.seed);

  check_key(cfg.height >= 3 && cfg.width >= 3, "grid", "must be at least 3x3");
  check_key(cfg.landmarks > 0, "landmarks", "must be positive");
  check_key(cfg.sigma > 0.0, "sigma", "must be positive");
  check_key(cfg.shift_range >= 0, "shift_range", "must be non-negative");
  check_key(cfg.train_sequences > 0, "train_sequences", "must be positive");
  check_key(cfg.test_sequences > 0, "test_sequences", "must be positive");
  check_key(cfg.degradation.noise_sigma >= 0.0, "degradation.noise_sigma",
            "must be non-negative");
  check_key(cfg.degradation.blur_sigma >= 0.0, "degradation.blur_sigma",
            "must be non-negative");
  check_key(cfg.degradation.peak_jitter_sigma >= 0.0, "degradation.peak_jitter_sigma",
            "must be non-negative");
  check_key(cfg.jitter.theta > 0.0, "loss.theta", "must be positive");
  check_key(cfg.jitter.xi > 0.0, "loss.xi", "must be positive");
  check_key(cfg.jitter.lambda >= 0.0, "loss.lambda", "must be non-negative");
  check_key(cfg.decoder.pdc.threshold >= 0.0 && cfg.decoder.pdc.threshold < 1.0,
            "decoder.threshold", "must lie in [0,1)");
  check_key(cfg.optimizer.lr > 0.0, "optimizer.lr", "must be positive");
  check_key(cfg.optimizer.epochs >= 0, "optimizer.epochs", "must be non-negative");
  check_key(cfg.hidden_channels > 0, "model.hidden_channels", "must be positive");
  check_key(cfg.kernel > 0 && cfg.kernel % 2 == 1, "model.kernel", "must be odd");
  return cfg;
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["grid"] = {{"height", cfg.height}, {"width", cfg.width}};
  j["landmarks"] = cfg.landmarks;
  j["sigma"] = cfg.sigma;
  j["shift_range"] = cfg.shift_range;
  j["train_sequences"] = cfg.train_sequences;
  j["test_sequences"] = cfg.test_sequences;
  j["degradation"] = {{"noise_sigma", cfg.degradation.noise_sigma},
                      {"blur_sigma", cfg.degradation.blur_sigma},
                      {"peak_jitter_sigma", cfg.degradation.peak_jitter_sigma}};
  std::string kind = "jitter";
  if (!cfg.modulation_enabled) {
    switch (cfg.jitter.pixel_loss) {
      case PixelLossKind::L2: kind = "l2"; break;
      case PixelLossKind::L1: kind = "l1"; break;
      case PixelLossKind::SmoothL1: kind = "smoothl1"; break;
      case PixelLossKind::Wing: kind = "wing"; break;
      case PixelLossKind::AWing: kind = "awing"; break;
      case PixelLossKind::GemanMcClure: kind = "gm"; break;
    }
  }
  j["loss"] = {{"kind", kind},
               {"theta", cfg.jitter.theta},
               {"xi", cfg.jitter.xi},
               {"lambda", cfg.jitter.lambda}};
  std::string decoder = "pdc";
  if (cfg.decoder.kind == DecoderKind::Argmax) decoder = "argmax";
  if (cfg.decoder.kind == DecoderKind::Interp) decoder = "interp";
  j["decoder"] = {{"kind", decoder}, {"threshold", cfg.decoder.pdc.threshold}};
  j["optimizer"] = {{"lr", cfg.optimizer.lr},
                    {"beta1", cfg.optimizer.beta1},
                    {"beta2", cfg.optimizer.beta2},
                    {"epochs", cfg.optimizer.epochs}};
  j["model"] = {{"hidden_channels", cfg.hidden_channels}, {"kernel", cfg.kernel}};
  j["seed"] = cfg.seed;
  return j.dump(2);
}

}  // namespace stable_align
