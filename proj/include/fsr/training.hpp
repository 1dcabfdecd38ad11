#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fsr/adam.hpp"
#include "fsr/checkpoint.hpp"
#include "fsr/errors.hpp"
#include "fsr/image.hpp"
#include "fsr/metrics.hpp"
#include "fsr/model.hpp"
#include "fsr/spectral.hpp"
#include "fsr/tensor.hpp"

namespace fsr {

// ---------------------------------------------------------------------------
// Dataset

/// Aligned training example; lr is always the exact box downsample of hr.
struct DatasetPair {
  std::string id;
  Image lr;
  Image hr;
  Split split = Split::kTrain;
};

struct NamedImage {
  std::string id;
  Image image;
  Split split = Split::kTrain;
};

/// Throws DatasetError unless lr == box_downsample(hr, scale) bit for bit.
inline void check_pair(const DatasetPair& p, int scale) {
  if (p.hr.height() != p.lr.height() * scale || p.hr.width() != p.lr.width() * scale ||
      p.hr.channels() != p.lr.channels()) {
    throw DatasetError("pair '" + p.id + "': lr " + std::to_string(p.lr.height()) + "x" +
                       std::to_string(p.lr.width()) + " is not hr " + std::to_string(p.hr.height()) +
                       "x" + std::to_string(p.hr.width()) + " / " + std::to_string(scale));
  }
  if (!(box_downsample(p.hr, scale) == p.lr)) {
    throw DatasetError("pair '" + p.id + "': lr is not the box downsample of hr");
  }
}

inline std::vector<DatasetPair> build_pairs(const std::vector<NamedImage>& hr_patches, int scale) {
  if (scale < 1) throw ParameterError("scale must be >= 1");
  std::string offenders;
  for (const auto& p : hr_patches) {
    if (p.image.height() % scale != 0 || p.image.width() % scale != 0) {
      offenders += (offenders.empty() ? "" : ", ") + p.id;
    }
  }
  if (!offenders.empty()) {
    throw DatasetError("patches not divisible by scale " + std::to_string(scale) + ": " + offenders);
  }
  std::vector<DatasetPair> pairs;
  pairs.reserve(hr_patches.size());
  for (const auto& p : hr_patches) pairs.push_back({p.id, box_downsample(p.image, scale), p.image, p.split});
  return pairs;
}

/// Convenience overload naming pairs "pair_00000", "pair_00001", ...
inline std::vector<DatasetPair> build_pairs(const std::vector<Image>& hr_patches, int scale) {
  std::vector<NamedImage> named;
  named.reserve(hr_patches.size());
  for (std::size_t i = 0; i < hr_patches.size(); ++i) {
    std::ostringstream id;
    id << "pair_" << std::setw(5) << std::setfill('0') << i;
    named.push_back({id.str(), hr_patches[i], Split::kTrain});
  }
  return build_pairs(named, scale);
}

inline std::vector<DatasetPair> select_split(const std::vector<DatasetPair>& pairs, Split split) {
  std::vector<DatasetPair> out;
  for (const auto& p : pairs) {
    if (p.split == split) out.push_back(p);
  }
  return out;
}

namespace detail {

// Unbiased draw from [0, bound) by rejection; independent of the standard
// library's distribution implementations.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

}  // namespace detail

/// Fisher-Yates permutation of [0, n), a pure function of (seed, epoch).
inline std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(detail::uniform_below(rng, i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

/// Batches of pair indices for one epoch; the final short batch is kept.
inline std::vector<std::vector<std::size_t>> shuffle_and_batch(std::size_t n_pairs, int batch_size,
                                                               std::uint64_t seed, std::uint64_t epoch) {
  if (n_pairs == 0) throw DatasetError("cannot batch an empty dataset");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  const auto order = epoch_permutation(n_pairs, seed, epoch);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n_pairs; i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n_pairs, i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int scale = 4;
  int batch_size = 2;
  double learning_rate = 3e-6;
  int epochs = -1;  // -1: 4 epochs at x4, 6 at x8
  std::uint64_t seed = 0;
  double wfe_alpha = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int val_interval = 50;
  int val_subset = 8;
  std::int64_t max_steps = 0;  // 0: no cap
  SsimMode val_ssim = SsimMode::kWindowed;

  int resolved_epochs() const { return epochs >= 0 ? epochs : (scale == 8 ? 6 : 4); }

  void validate() const {
    if (scale != 4 && scale != 8) throw ConfigError("train scale must be 4 or 8, got " + std::to_string(scale));
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (epochs < -1) throw ConfigError("epochs must be >= 0");
    if (!(wfe_alpha >= 0.0)) throw ConfigError("wfe_alpha must be >= 0");
    if (val_interval < 1) throw ConfigError("val_interval must be >= 1");
    if (val_subset < 1) throw ConfigError("val_subset must be >= 1");
    if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  }
};

struct LogRow {
  std::int64_t step = 0;
  int epoch = 0;
  double train_wfe_loss = 0.0;
  double val_ssim = 0.0;
  double val_psnr = 0.0;
  double wallclock_seconds = 0.0;
};

struct TrainingLog {
  std::vector<LogRow> rows;
};

inline constexpr const char* kTrainingLogHeader = "step,epoch,train_wfe_loss,val_ssim,val_psnr,wallclock_seconds";

inline std::string format_real(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_training_log(const TrainingLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write training log '" + path.string() + "'");
  out << kTrainingLogHeader << '\n';
  for (const auto& r : log.rows) {
    out << r.step << ',' << r.epoch << ',' << format_real(r.train_wfe_loss) << ',' << format_real(r.val_ssim)
        << ',' << format_real(r.val_psnr) << ',' << format_real(r.wallclock_seconds) << '\n';
  }
}

inline TrainingLog read_training_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read training log '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line != kTrainingLogHeader) throw IoError("training log '" + path.string() + "' has an unexpected header");
  TrainingLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    LogRow r;
    char comma;
    ss >> r.step >> comma >> r.epoch >> comma >> r.train_wfe_loss >> comma >> r.val_ssim >> comma >> r.val_psnr >>
        comma >> r.wallclock_seconds;
    if (!ss) throw IoError("training log '" + path.string() + "' has a malformed row: " + line);
    log.rows.push_back(r);
  }
  return log;
}

template <typename T>
struct TrainResult {
  Checkpoint<T> checkpoint;
  TrainingLog log;
};

/// Per-item prepared tensors, converted once.
template <typename T>
struct PreparedPair {
  std::string id;
  Tensor<T> lr;
  Tensor<T> hr;
  Image hr_image;
};

template <typename T>
std::vector<PreparedPair<T>> prepare_pairs(const std::vector<DatasetPair>& pairs, int scale) {
  std::vector<PreparedPair<T>> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    check_pair(p, scale);
    if (p.hr.channels() != kImageChannels) throw DatasetError("pair '" + p.id + "' is not RGB");
    out.push_back({p.id, to_tensor<T>(p.lr), to_tensor<T>(p.hr), p.hr});
  }
  return out;
}

/// Windowed SSIM when the image is large enough, otherwise the global form.
inline double reporting_ssim(const Image& x, const Image& y, SsimMode mode) {
  if (mode == SsimMode::kWindowed && (x.height() < kSsimWindow || x.width() < kSsimWindow)) {
    return ssim_global(x, y);
  }
  return ssim(x, y, mode);
}

struct ValidationScore {
  double ssim = 0.0;
  double psnr = 0.0;
};

template <typename T>
ValidationScore validate_model(const ResidualSR<T>& model, const Parameters<T>& params,
                                  const std::vector<PreparedPair<T>>& val, SsimMode mode) {
  ValidationScore s;
  for (const auto& p : val) {
    const Image out = finalize_image(model.forward(params, p.lr));
    s.ssim += reporting_ssim(out, p.hr_image, mode);
    s.psnr += psnr(out, p.hr_image);
  }
  s.ssim /= static_cast<double>(val.size());
  s.psnr /= static_cast<double>(val.size());
  return s;
}

using ProgressFn = std::function<void(const LogRow&)>;

/// Adam training against the weighted frequency error. The validation subset
/// is the first `val_subset` test pairs, or training pairs when there is no
/// test split. Deterministic in (pairs, configs, seed) apart from wallclock.
template <typename T = float>
TrainResult<T> train(const std::vector<DatasetPair>& pairs, const ModelConfig& model_cfg,
                     const TrainConfig& cfg, const ProgressFn& progress = {}) {
  model_cfg.validate();
  cfg.validate();
  if (model_cfg.scale != cfg.scale) {
    throw ConfigError("model scale " + std::to_string(model_cfg.scale) + " differs from train scale " +
                      std::to_string(cfg.scale));
  }
  const auto train_pairs = prepare_pairs<T>(select_split(pairs, Split::kTrain), cfg.scale);
  if (train_pairs.empty()) throw DatasetError("training split is empty");
  auto held_out = select_split(pairs, Split::kTest);
  std::vector<PreparedPair<T>> val;
  {
    const auto& source = held_out.empty() ? select_split(pairs, Split::kTrain) : held_out;
    const std::size_t n = std::min<std::size_t>(source.size(), static_cast<std::size_t>(cfg.val_subset));
    val = prepare_pairs<T>(std::vector<DatasetPair>(source.begin(), source.begin() + static_cast<std::ptrdiff_t>(n)), cfg.scale);
  }

  const int h = train_pairs.front().hr.height;
  const int w = train_pairs.front().hr.width;
  for (const auto& p : train_pairs) {
    if (p.hr.height != h || p.hr.width != w) throw DatasetError("pair '" + p.id + "' differs in size from the first pair");
  }
  const WeightMap weights = build_weight_map(h, w, cfg.wfe_alpha);
  const ResidualSR<T> model(model_cfg);
  model.check_input(train_pairs.front().lr.height, train_pairs.front().lr.width);

  TrainResult<T> result;
  result.checkpoint.config = model_cfg;
  result.checkpoint.meta.seed = cfg.seed;
  Parameters<T>& params = result.checkpoint.parameters;
  params = init_parameters<T>(model_cfg, cfg.seed);
  Parameters<T> grads = zero_parameters<T>(model_cfg);
  AdamState<T> adam = AdamState<T>::zeros_like(params);
  const AdamOptions opt{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
  auto log_row = [&](std::int64_t step, int epoch, double loss) {
    const auto score = validate_model(model, params, val, cfg.val_ssim);
    LogRow row{step, epoch, loss, score.ssim, score.psnr, elapsed()};
    result.log.rows.push_back(row);
    if (progress) progress(row);
  };

  auto batch_loss = [&](const std::vector<std::size_t>& batch, bool with_grad) {
    double total = 0.0;
    const double share = 1.0 / static_cast<double>(batch.size());
    for (const std::size_t idx : batch) {
      const auto& p = train_pairs[idx];
      typename ResidualSR<T>::Cache cache;
      const Tensor<T> out = model.forward(params, p.lr, with_grad ? &cache : nullptr);
      if (!with_grad) {
        total += wfe_planar<T>(out.data, p.hr.data, out.channels, h, w, weights);
        continue;
      }
      Tensor<T> d_out(out.channels, out.height, out.width);
      total += wfe_planar<T>(out.data, p.hr.data, out.channels, h, w, weights, d_out.data.data(), share);
      model.backward(params, cache, d_out, grads);
    }
    return total * share;
  };

  const int epochs = cfg.resolved_epochs();
  {
    // Initial row: loss of the first scheduled batch at initialization.
    const auto first = shuffle_and_batch(train_pairs.size(), cfg.batch_size, cfg.seed, 0).front();
    log_row(0, 0, batch_loss(first, false));
  }

  std::int64_t step = 0;
  double running = 0.0;
  int running_n = 0;
  double last_loss = result.log.rows.front().train_wfe_loss;
  int epochs_done = 0;
  bool capped = false;
  for (int epoch = 0; epoch < epochs && !capped; ++epoch) {
    for (const auto& batch : shuffle_and_batch(train_pairs.size(), cfg.batch_size, cfg.seed, static_cast<std::uint64_t>(epoch))) {
      grads.set_zero();
      const double loss = batch_loss(batch, true);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite training loss at step " + std::to_string(step + 1) + " (epoch " +
                            std::to_string(epoch + 1) + ")");
      }
      adam_step(params, grads, adam, opt);
      ++step;
      running += loss;
      ++running_n;
      last_loss = loss;
      if (step % cfg.val_interval == 0) {
        log_row(step, epoch + 1, running / running_n);
        running = 0.0;
        running_n = 0;
      }
      if (cfg.max_steps > 0 && step >= cfg.max_steps) {
        capped = true;
        break;
      }
    }
    if (!capped) ++epochs_done;
    if (result.log.rows.back().step != step) {
      log_row(step, epoch + 1, running / running_n);
      running = 0.0;
      running_n = 0;
    }
  }
  result.checkpoint.meta.epochs_completed = static_cast<std::uint64_t>(epochs_done);
  result.checkpoint.meta.final_train_loss = last_loss;
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

enum class Baseline { kNone, kBilinear, kBicubic };

inline Baseline parse_baseline(const std::string& s) {
  if (s == "none") return Baseline::kNone;
  if (s == "bilinear") return Baseline::kBilinear;
  if (s == "bicubic") return Baseline::kBicubic;
  throw ParameterError("unknown baseline '" + s + "' (expected none, bilinear or bicubic)");
}

inline const char* baseline_name(Baseline b) {
  switch (b) {
    case Baseline::kNone: return "none";
    case Baseline::kBilinear: return "bilinear";
    case Baseline::kBicubic: return "bicubic";
  }
  return "none";
}

inline Image baseline_upsample(const Image& lr, int scale, Baseline b) {
  return b == Baseline::kBicubic ? bicubic_upsample(lr, scale) : bilinear_upsample(lr, scale);
}

struct EvaluationResult {
  std::vector<MetricsRecord> records;
  MetricsRecord aggregate;
  std::vector<MetricsRecord> baseline_records;
  MetricsRecord baseline_aggregate;
};

/// Per-pair metrics of clamped model outputs and their arithmetic means.
template <typename T>
EvaluationResult evaluate(const Checkpoint<T>& ckpt, const std::vector<DatasetPair>& pairs,
                          Baseline baseline = Baseline::kNone, SsimMode mode = SsimMode::kWindowed) {
  if (pairs.empty()) throw DatasetError("evaluation set is empty");
  const int scale = ckpt.config.scale;
  for (const auto& p : pairs) {
    if (p.hr.height() != p.lr.height() * scale || p.hr.width() != p.lr.width() * scale) {
      throw ConfigError("pair '" + p.id + "' is not a x" + std::to_string(scale) +
                        " pair but the checkpoint scale is " + std::to_string(scale));
    }
    check_pair(p, scale);
  }
  const ResidualSR<T> model(ckpt.config);
  EvaluationResult r;
  for (const auto& p : pairs) {
    r.records.push_back(measure(p.id, model.infer(ckpt.parameters, p.lr), p.hr, mode));
    if (baseline != Baseline::kNone) {
      r.baseline_records.push_back(measure(p.id, baseline_upsample(p.lr, scale, baseline), p.hr, mode));
    }
  }
  r.aggregate = aggregate(r.records);
  if (baseline != Baseline::kNone) r.baseline_aggregate = aggregate(r.baseline_records);
  return r;
}

inline constexpr const char* kMetricsHeader = "item_id,mse,psnr_db,ssim";

inline void write_metrics_csv(std::span<const MetricsRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write metrics '" + path.string() + "'");
  out << kMetricsHeader << '\n';
  for (const auto& r : records) {
    out << r.item_id << ',' << format_real(r.mse) << ',' << format_real(r.psnr_db) << ',' << format_real(r.ssim) << '\n';
  }
}

inline std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read metrics '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line != kMetricsHeader) throw IoError("metrics file '" + path.string() + "' has an unexpected header");
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    MetricsRecord r;
    std::string field;
    std::getline(ss, r.item_id, ',');
    std::getline(ss, field, ',');
    r.mse = std::stod(field);
    std::getline(ss, field, ',');
    r.psnr_db = std::stod(field);
    std::getline(ss, field, ',');
    r.ssim = std::stod(field);
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Latency

struct BenchmarkResult {
  double mean_ms = 0.0;
  double std_ms = 0.0;
  std::size_t param_count = 0;
  int patches = 0;
};

/// Times single-patch forward passes after `warmup` untimed ones. Timing
/// covers the model forward only (no decode/encode).
template <typename T>
BenchmarkResult benchmark_inference(const Checkpoint<T>& ckpt, int n_patches, int lr_height, int lr_width,
                                    int warmup = 3) {
  if (n_patches < 1) throw ParameterError("benchmark needs n_patches >= 1, got " + std::to_string(n_patches));
  if (warmup < 3) throw ParameterError("benchmark needs at least 3 warmup passes");
  const ResidualSR<T> model(ckpt.config);
  model.check_input(lr_height, lr_width);
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  Tensor<T> lr(kImageChannels, lr_height, lr_width);
  for (T& v : lr.data) v = static_cast<T>(dist(rng));

  volatile T sink = 0;
  for (int i = 0; i < warmup; ++i) sink = sink + model.forward(ckpt.parameters, lr).data[0];
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(n_patches));
  for (int i = 0; i < n_patches; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = model.forward(ckpt.parameters, lr);
    const auto t1 = std::chrono::steady_clock::now();
    sink = sink + out.data[0];
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  BenchmarkResult r;
  r.patches = n_patches;
  r.param_count = ckpt.parameters.count();
  for (double t : times) r.mean_ms += t;
  r.mean_ms /= static_cast<double>(times.size());
  for (double t : times) r.std_ms += (t - r.mean_ms) * (t - r.mean_ms);
  r.std_ms = std::sqrt(r.std_ms / static_cast<double>(times.size()));
  return r;
}

}  // namespace fsr
