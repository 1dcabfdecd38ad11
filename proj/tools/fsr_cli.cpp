// fsr: dataset preparation, training, evaluation and inference for residual
// attention U-Net super-resolution of histology patches.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fsr/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Residual attention U-Net super-resolution for histology patches"};
  app.require_subcommand(1);

  fsr::cmd::PrepareOptions prep;
  auto* prepare = app.add_subcommand("prepare", "Cut source images into hr/lr patch pairs");
  prepare->add_option("--src-dir", prep.src_dir, "Directory of source PNG images")->required();
  prepare->add_option("--out-dir", prep.out_dir, "Dataset output directory")->required();
  prepare->add_option("--size", prep.size, "Patch size in pixels")->capture_default_str();
  prepare->add_option("--stride", prep.stride, "Patch stride in pixels")->capture_default_str();
  prepare->add_option("--scale", prep.scale, "Downsampling factor")->required();
  prepare->add_option("--split-fraction", prep.split_fraction, "Fraction of patches held out for testing")
      ->capture_default_str();
  prepare->add_option("--seed", prep.seed, "Seed of the train/test split")->capture_default_str();

  std::string config_path;
  auto* train = app.add_subcommand("train", "Train a model from a run config file");
  train->add_option("config", config_path, "Run config (key = value lines)")->required();

  fsr::cmd::EvalOptions ev;
  std::string ev_baseline = "bicubic";
  std::string ev_ssim = "windowed";
  auto* eval = app.add_subcommand("eval", "Per-item and aggregate MSE/PSNR/SSIM");
  eval->add_option("--checkpoint", ev.checkpoint)->required();
  eval->add_option("--data-dir", ev.data_dir)->required();
  eval->add_option("--out-dir", ev.out_dir, "Where CSVs are written")->required();
  eval->add_option("--baseline", ev_baseline, "bicubic | bilinear | none")->capture_default_str();
  eval->add_option("--ssim", ev_ssim, "windowed | global")->capture_default_str();
  eval->add_option("--split", ev.split, "test | train | all")->capture_default_str();

  std::string inf_ckpt, inf_in, inf_out;
  auto* infer = app.add_subcommand("infer", "Super-resolve one image");
  infer->add_option("--checkpoint", inf_ckpt)->required();
  infer->add_option("--input", inf_in)->required();
  infer->add_option("--output", inf_out)->required();

  std::string st_dir, st_out;
  int st_rows = 4, st_cols = 4;
  auto* stitch = app.add_subcommand("stitch", "Stitch a directory of patches (lexicographic, row-major)");
  stitch->add_option("--input-dir", st_dir)->required();
  stitch->add_option("--rows", st_rows)->capture_default_str();
  stitch->add_option("--cols", st_cols)->capture_default_str();
  stitch->add_option("--output", st_out)->required();

  fsr::cmd::ReportOptions rep;
  std::string rep_baseline = "bicubic";
  std::string rep_ssim = "windowed";
  auto* report = app.add_subcommand("report", "Side-by-side montages with (SSIM/PSNR) captions");
  report->add_option("--checkpoint", rep.checkpoint)->required();
  report->add_option("--data-dir", rep.data_dir)->required();
  report->add_option("--out-dir", rep.out_dir)->required();
  report->add_option("--n", rep.n_examples, "Number of examples")->capture_default_str();
  report->add_option("--baseline", rep_baseline, "bicubic | bilinear")->capture_default_str();
  report->add_option("--ssim", rep_ssim, "windowed | global")->capture_default_str();
  report->add_option("--split", rep.split, "test | train | all")->capture_default_str();

  std::string bench_ckpt;
  int bench_n = 20;
  int bench_size = 0;
  auto* bench = app.add_subcommand("bench", "Time single-patch inference");
  bench->add_option("--checkpoint", bench_ckpt)->required();
  bench->add_option("--n", bench_n, "Timed patches")->capture_default_str();
  bench->add_option("--lr-size", bench_size, "Low-resolution patch size (default 256 / scale)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*prepare) {
      fsr::cmd::prepare(prep, std::cout);
    } else if (*train) {
      fsr::cmd::train(config_path, std::cout);
    } else if (*eval) {
      ev.baseline = fsr::parse_baseline(ev_baseline);
      ev.ssim = fsr::parse_ssim_mode(ev_ssim);
      fsr::cmd::eval(ev, std::cout);
    } else if (*infer) {
      fsr::cmd::infer(inf_ckpt, inf_in, inf_out, std::cout);
    } else if (*stitch) {
      fsr::cmd::stitch(st_dir, st_rows, st_cols, st_out, std::cout);
    } else if (*report) {
      rep.baseline = fsr::parse_baseline(rep_baseline);
      rep.ssim = fsr::parse_ssim_mode(rep_ssim);
      fsr::cmd::report(rep, std::cout);
    } else if (*bench) {
      fsr::cmd::bench(bench_ckpt, bench_n, bench_size, std::cout);
    }
  } catch (const fsr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
