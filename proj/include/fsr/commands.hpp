#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsr/checkpoint.hpp"
#include "fsr/errors.hpp"
#include "fsr/image.hpp"
#include "fsr/manifest.hpp"
#include "fsr/metrics.hpp"
#include "fsr/png_io.hpp"
#include "fsr/runconfig.hpp"
#include "fsr/training.hpp"

// Implementations of the `fsr` subcommands. Each takes plain options, writes
// its artifacts, reports progress on `log`, and throws fsr::Error on failure.
namespace fsr::cmd {

namespace fs = std::filesystem;

inline constexpr const char* kManifestFile = "manifest.jsonl";
inline constexpr const char* kDatasetFile = "dataset.json";
inline constexpr const char* kHrDir = "hr";

inline std::string lr_dir_name(int scale) { return "lr_x" + std::to_string(scale); }

/// `{source_id}_{row}_{col}` with zero-padded pixel origins, so that
/// lexicographic order is row-major within a source.
inline std::string patch_id(const PatchRecord& r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%05d_%05d", r.origin_row, r.origin_col);
  return r.source_id + buf;
}

inline Image to_rgb(const Image& img) {
  if (img.channels() == 3) return img;
  std::vector<double> out(img.size() * 3);
  for (std::size_t i = 0; i < img.size(); ++i) out[3 * i] = out[3 * i + 1] = out[3 * i + 2] = img.data()[i];
  return Image(img.height(), img.width(), 3, std::move(out));
}

inline std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// ---------------------------------------------------------------------------
// prepare

struct PrepareOptions {
  fs::path src_dir;
  fs::path out_dir;
  int size = 256;
  int stride = 128;
  int scale = 4;
  double split_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct PrepareSummary {
  int sources = 0;
  int skipped = 0;
  int patches = 0;
  int train = 0;
  int test = 0;
};

inline PrepareSummary prepare(const PrepareOptions& o, std::ostream& log) {
  if (o.scale < 1) throw ParameterError("--scale must be >= 1");
  if (o.size < 1 || o.size % o.scale != 0) {
    throw ParameterError("--size " + std::to_string(o.size) + " must be a positive multiple of --scale " +
                         std::to_string(o.scale));
  }
  if (o.stride < 1) throw ParameterError("--stride must be >= 1");
  if (!(o.split_fraction >= 0.0 && o.split_fraction <= 1.0)) {
    throw ParameterError("--split-fraction must lie in [0, 1]");
  }
  const auto sources = list_pngs(o.src_dir);
  if (sources.empty()) throw DatasetError("source directory '" + o.src_dir.string() + "' holds no PNG images");

  PrepareSummary summary;
  PatchManifest manifest;
  std::vector<Image> patches;
  for (const auto& path : sources) {
    const Image src = to_rgb(load_image(path));
    ++summary.sources;
    if (src.height() < o.size || src.width() < o.size) {
      ++summary.skipped;
      continue;
    }
    auto ex = extract_patches(src, o.size, o.stride, path.stem().string());
    for (auto& e : ex.manifest.entries) manifest.entries.push_back(std::move(e));
    for (auto& p : ex.patches) patches.push_back(std::move(p));
  }
  if (summary.skipped > 0) {
    log << "warning: skipped " << summary.skipped << " source image(s) smaller than " << o.size << "x" << o.size
        << "\n";
  }
  if (patches.empty()) throw DatasetError("no source image in '" + o.src_dir.string() + "' fits a patch");
  validate_manifest(manifest);

  const std::size_t n = patches.size();
  const auto n_test = static_cast<std::size_t>(std::llround(o.split_fraction * static_cast<double>(n)));
  const auto order = epoch_permutation(n, o.seed, 0);
  for (std::size_t i = 0; i < n_test; ++i) manifest.entries[order[i]].split = Split::kTest;

  fs::create_directories(o.out_dir / kHrDir);
  fs::create_directories(o.out_dir / lr_dir_name(o.scale));
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = patch_id(manifest.entries[i]);
    save_image(patches[i], o.out_dir / kHrDir / (id + ".png"));
    save_image(box_downsample(patches[i], o.scale), o.out_dir / lr_dir_name(o.scale) / (id + ".png"));
  }
  write_manifest(manifest, o.out_dir / kManifestFile);
  nlohmann::ordered_json meta;
  meta["scale"] = o.scale;
  meta["patch_size"] = o.size;
  meta["stride"] = o.stride;
  meta["split_fraction"] = o.split_fraction;
  meta["seed"] = o.seed;
  std::ofstream(o.out_dir / kDatasetFile, std::ios::binary | std::ios::trunc) << meta.dump(2) << '\n';

  summary.patches = static_cast<int>(n);
  summary.test = static_cast<int>(n_test);
  summary.train = summary.patches - summary.test;
  log << "sources: " << summary.sources << ", patches: " << summary.patches << " (train " << summary.train
      << ", test " << summary.test << "), lr " << o.size / o.scale << "x" << o.size / o.scale << "\n";
  return summary;
}

// ---------------------------------------------------------------------------
// dataset loading

struct Dataset {
  int scale = 0;
  PatchManifest manifest;
  std::vector<DatasetPair> pairs;
};

/// Loads a prepared dataset. Pairs are rebuilt from the hr patches so the
/// box-downsample invariant holds exactly; stored lr files are checked to be
/// the 8-bit quantization of that downsample.
inline Dataset load_dataset(const fs::path& data_dir) {
  if (!fs::is_directory(data_dir)) throw IoError("data_dir '" + data_dir.string() + "' does not exist");
  const fs::path meta_path = data_dir / kDatasetFile;
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw IoError("data_dir '" + data_dir.string() + "' has no " + kDatasetFile);
  Dataset ds;
  try {
    ds.scale = nlohmann::json::parse(meta_in).at("scale").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse '" + meta_path.string() + "': " + e.what());
  }
  if (ds.scale < 1) throw DatasetError("dataset scale must be >= 1");
  ds.manifest = read_manifest(data_dir / kManifestFile);
  std::vector<NamedImage> hr;
  for (const auto& e : ds.manifest.entries) {
    const std::string id = patch_id(e);
    Image img = load_image(data_dir / kHrDir / (id + ".png"));
    if (img.height() != e.size || img.width() != e.size) {
      throw DatasetError("patch '" + id + "' is " + std::to_string(img.height()) + "x" +
                         std::to_string(img.width()) + " but the manifest says " + std::to_string(e.size));
    }
    hr.push_back({id, to_rgb(img), e.split});
  }
  ds.pairs = build_pairs(hr, ds.scale);
  const fs::path lr_dir = data_dir / lr_dir_name(ds.scale);
  for (const auto& p : ds.pairs) {
    check_pair(p, ds.scale);
    const fs::path lr_path = lr_dir / (p.id + ".png");
    if (!fs::exists(lr_path)) continue;
    const Image stored = to_rgb(load_image(lr_path));
    if (!stored.same_shape(p.lr)) throw DatasetError("stored lr '" + lr_path.string() + "' has the wrong size");
    for (std::size_t i = 0; i < stored.size(); ++i) {
      if (std::abs(stored.data()[i] - quantize_byte(p.lr.data()[i]) / 255.0) > 1e-12) {
        throw DatasetError("stored lr '" + lr_path.string() + "' is not the box downsample of its hr patch");
      }
    }
  }
  return ds;
}

inline void require_model_scale(int scale, const std::string& what) {
  if (scale != 4 && scale != 8) {
    throw ConfigError(what + " scale must be 4 or 8, got " + std::to_string(scale));
  }
}

// ---------------------------------------------------------------------------
// train

struct TrainSummary {
  fs::path checkpoint;
  fs::path log;
  TrainingLog training_log;
};

inline TrainSummary train(const fs::path& config_path, std::ostream& log) {
  const RunConfig rc = load_run_config(config_path);
  const Dataset ds = load_dataset(rc.data_dir);
  require_model_scale(ds.scale, "dataset");
  if (ds.scale != rc.model.scale) {
    throw ConfigError("config scale " + std::to_string(rc.model.scale) + " does not match dataset scale " +
                      std::to_string(ds.scale) + " in '" + rc.data_dir.string() + "'");
  }
  fs::create_directories(rc.out_dir);
  log << "training on " << select_split(ds.pairs, Split::kTrain).size() << " pairs, " << parameter_count(rc.model)
      << " parameters, " << rc.train.resolved_epochs() << " epoch(s)\n";
  auto result = fsr::train<float>(ds.pairs, rc.model, rc.train, [&](const LogRow& r) {
    log << "step " << r.step << " epoch " << r.epoch << " loss " << r.train_wfe_loss << " val_ssim " << r.val_ssim
        << " val_psnr " << r.val_psnr << "\n";
  });
  TrainSummary s;
  s.checkpoint = rc.checkpoint;
  s.log = rc.out_dir / "training_log.csv";
  if (!rc.checkpoint.parent_path().empty()) fs::create_directories(rc.checkpoint.parent_path());
  save_checkpoint(result.checkpoint, s.checkpoint);
  write_training_log(result.log, s.log);
  s.training_log = std::move(result.log);
  log << "wrote " << s.checkpoint.string() << " and " << s.log.string() << "\n";
  return s;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  fs::path checkpoint;
  fs::path data_dir;
  fs::path out_dir;
  Baseline baseline = Baseline::kBicubic;
  SsimMode ssim = SsimMode::kWindowed;
  std::string split = "test";  // test | train | all
};

inline std::vector<DatasetPair> pick_split(const Dataset& ds, const std::string& split, std::ostream& log) {
  if (split == "all") return ds.pairs;
  auto picked = select_split(ds.pairs, parse_split(split));
  if (picked.empty()) {
    log << "warning: split '" << split << "' is empty; using all " << ds.pairs.size() << " pairs\n";
    return ds.pairs;
  }
  return picked;
}

inline std::string caption(double ssim_value, double psnr_value, int precision) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << "(" << ssim_value << "/" << psnr_value << ")";
  return os.str();
}

inline EvaluationResult eval(const EvalOptions& o, std::ostream& log) {
  const auto ckpt = load_checkpoint<float>(o.checkpoint);
  const Dataset ds = load_dataset(o.data_dir);
  require_model_scale(ds.scale, "dataset");
  if (ds.scale != ckpt.config.scale) {
    throw ConfigError("checkpoint scale " + std::to_string(ckpt.config.scale) + " does not match dataset scale " +
                      std::to_string(ds.scale));
  }
  const auto pairs = pick_split(ds, o.split, log);
  const auto result = evaluate(ckpt, pairs, o.baseline, o.ssim);
  fs::create_directories(o.out_dir);
  write_metrics_csv(result.records, o.out_dir / "eval_model.csv");
  write_metrics_csv(std::span<const MetricsRecord>(&result.aggregate, 1), o.out_dir / "eval_model_aggregate.csv");
  const std::string bname = baseline_name(o.baseline);
  if (o.baseline != Baseline::kNone) {
    write_metrics_csv(result.baseline_records, o.out_dir / ("eval_" + bname + ".csv"));
    write_metrics_csv(std::span<const MetricsRecord>(&result.baseline_aggregate, 1),
                      o.out_dir / ("eval_" + bname + "_aggregate.csv"));
  }
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const auto& r = result.records[i];
    log << r.item_id << "  ours " << caption(r.ssim, r.psnr_db, 2);
    if (o.baseline != Baseline::kNone) {
      const auto& b = result.baseline_records[i];
      log << "  " << bname << " " << caption(b.ssim, b.psnr_db, 2);
    }
    log << "\n";
  }
  log << "mean ours: mse " << result.aggregate.mse << " psnr " << result.aggregate.psnr_db << " ssim "
      << result.aggregate.ssim << "\n";
  if (o.baseline != Baseline::kNone) {
    log << "mean " << bname << ": mse " << result.baseline_aggregate.mse << " psnr "
        << result.baseline_aggregate.psnr_db << " ssim " << result.baseline_aggregate.ssim << "\n";
  }
  return result;
}

// ---------------------------------------------------------------------------
// infer

inline Image infer(const fs::path& checkpoint, const fs::path& input, const fs::path& output, std::ostream& log) {
  const auto ckpt = load_checkpoint<float>(checkpoint);
  const Image lr = load_image(input);
  if (lr.channels() != kImageChannels) throw ShapeError("input '" + input.string() + "' must be an RGB image");
  const ResidualSR<float> model(ckpt.config);
  model.check_input(lr.height(), lr.width());
  const Image out = model.infer(ckpt.parameters, lr);
  if (!output.parent_path().empty()) fs::create_directories(output.parent_path());
  save_image(out, output);
  log << "wrote " << output.string() << " (" << out.height() << "x" << out.width() << ")\n";
  return out;
}

// ---------------------------------------------------------------------------
// stitch

inline Image stitch(const fs::path& dir, int rows, int cols, const fs::path& output, std::ostream& log) {
  const auto files = list_pngs(dir);
  if (files.size() != static_cast<std::size_t>(rows) * cols) {
    throw ShapeError("stitch: '" + dir.string() + "' holds " + std::to_string(files.size()) +
                     " PNG files but a " + std::to_string(rows) + "x" + std::to_string(cols) + " grid needs " +
                     std::to_string(rows * cols));
  }
  std::vector<Image> patches;
  for (const auto& f : files) patches.push_back(load_image(f));
  for (std::size_t k = 1; k < patches.size(); ++k) {
    if (!patches[k].same_shape(patches[0])) {
      throw ShapeError("stitch: '" + files[k].string() + "' differs in size or channels from '" +
                       files[0].string() + "'");
    }
  }
  const Image out = stitch_grid(patches, rows, cols);
  if (!output.parent_path().empty()) fs::create_directories(output.parent_path());
  save_image(out, output);
  log << "wrote " << output.string() << " (" << out.height() << "x" << out.width() << ")\n";
  return out;
}

// ---------------------------------------------------------------------------
// report

struct ReportOptions {
  fs::path checkpoint;
  fs::path data_dir;
  fs::path out_dir;
  int n_examples = 4;
  Baseline baseline = Baseline::kBicubic;
  SsimMode ssim = SsimMode::kWindowed;
  std::string split = "test";
};

struct ReportItem {
  std::string id;
  fs::path montage;
  MetricsRecord baseline;
  MetricsRecord model;
};

/// Writes [hr | baseline | model] montages and a caption file with the
/// (SSIM/PSNR) of each reconstructed panel.
inline std::vector<ReportItem> report(const ReportOptions& o, std::ostream& log) {
  if (o.n_examples < 1) throw ParameterError("--n must be >= 1");
  if (o.baseline == Baseline::kNone) throw ParameterError("report needs a bilinear or bicubic baseline");
  const auto ckpt = load_checkpoint<float>(o.checkpoint);
  const Dataset ds = load_dataset(o.data_dir);
  require_model_scale(ds.scale, "dataset");
  if (ds.scale != ckpt.config.scale) {
    throw ConfigError("checkpoint scale " + std::to_string(ckpt.config.scale) + " does not match dataset scale " +
                      std::to_string(ds.scale));
  }
  auto pairs = pick_split(ds, o.split, log);
  if (static_cast<std::size_t>(o.n_examples) > pairs.size()) {
    log << "warning: --n " << o.n_examples << " exceeds the " << pairs.size() << " available items; clipping\n";
  } else {
    pairs.resize(static_cast<std::size_t>(o.n_examples));
  }
  const ResidualSR<float> model(ckpt.config);
  fs::create_directories(o.out_dir);
  std::ofstream captions(o.out_dir / "report_captions.txt", std::ios::binary | std::ios::trunc);
  const std::string bname = baseline_name(o.baseline);
  captions << "# item_id: hr | " << bname << " (SSIM/PSNR) | ours (SSIM/PSNR)\n";
  std::vector<ReportItem> items;
  for (const auto& p : pairs) {
    check_pair(p, ds.scale);
    const Image base = baseline_upsample(p.lr, ds.scale, o.baseline);
    const Image ours = model.infer(ckpt.parameters, p.lr);
    ReportItem item;
    item.id = p.id;
    item.baseline = measure(p.id, base, p.hr, o.ssim);
    item.model = measure(p.id, ours, p.hr, o.ssim);
    item.montage = o.out_dir / ("report_" + p.id + ".png");
    const std::vector<Image> panels{p.hr, base, ours};
    save_image(hconcat(panels), item.montage);
    captions << p.id << ": hr | " << bname << " (" << format_real(item.baseline.ssim) << "/"
             << format_real(item.baseline.psnr_db) << ") | ours (" << format_real(item.model.ssim) << "/"
             << format_real(item.model.psnr_db) << ")\n";
    log << p.id << ": " << bname << " " << caption(item.baseline.ssim, item.baseline.psnr_db, 2) << ", ours "
        << caption(item.model.ssim, item.model.psnr_db, 2) << "\n";
    items.push_back(std::move(item));
  }
  return items;
}

// ---------------------------------------------------------------------------
// bench

inline constexpr const char* kBenchHeader = "mean_ms,std_ms,param_count";

inline BenchmarkResult bench(const fs::path& checkpoint, int n, int lr_size, std::ostream& out) {
  if (n < 1) throw ParameterError("--n must be >= 1, got " + std::to_string(n));
  const auto ckpt = load_checkpoint<float>(checkpoint);
  const int size = lr_size > 0 ? lr_size : 256 / ckpt.config.scale;
  const auto r = benchmark_inference(ckpt, n, size, size);
  out << kBenchHeader << "\n" << format_real(r.mean_ms) << "," << format_real(r.std_ms) << "," << r.param_count << "\n";
  return r;
}

}  // namespace fsr::cmd
